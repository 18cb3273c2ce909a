// SPDX-License-Identifier: Apache-2.0
/*
Copyright (C) 2026 The Phoenix Authors.
Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace phoenix;
using namespace phoenix::mesh;
using phoenix::testing::Edges;
using phoenix::testing::LiveMesh;
using phoenix::testing::random_connected;

namespace {

// Oracle: Floyd-Warshall distances; next hop is the smallest neighbor that
// lies on some shortest path.
std::map<NodeId, Route> oracle_routes(const Edges& edges, int n, NodeId self) {
  const int inf = 1 << 20;
  std::vector<std::vector<int>> d(static_cast<std::size_t>(n + 1), std::vector<int>(static_cast<std::size_t>(n + 1), inf));
  std::vector<std::set<int>> adj(static_cast<std::size_t>(n + 1));
  for (int i = 1; i <= n; ++i) d[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = 0;
  for (auto [a, b] : edges) {
    d[a.value][b.value] = d[b.value][a.value] = 1;
    adj[a.value].insert(static_cast<int>(b.value));
    adj[b.value].insert(static_cast<int>(a.value));
  }
  for (std::size_t k = 1; k <= static_cast<std::size_t>(n); ++k)
    for (std::size_t i = 1; i <= static_cast<std::size_t>(n); ++i)
      for (std::size_t j = 1; j <= static_cast<std::size_t>(n); ++j) d[i][j] = std::min(d[i][j], d[i][k] + d[k][j]);
  std::map<NodeId, Route> out;
  auto s = self.value;
  for (std::size_t t = 1; t <= static_cast<std::size_t>(n); ++t) {
    if (t == s || d[s][t] >= inf) continue;
    for (int nb : adj[s]) {  // ascending
      if (d[static_cast<std::size_t>(nb)][t] == d[s][t] - 1) {
        out[NodeId{t}] = Route{NodeId{static_cast<std::uint64_t>(nb)}, static_cast<std::uint32_t>(d[s][t])};
        break;
      }
    }
  }
  return out;
}

bool spans_connected(const MulticastTree& tree, int n) {
  std::map<NodeId, std::set<NodeId>> adj;
  for (auto [a, b] : tree.edges) {
    adj[a].insert(b);
    adj[b].insert(a);
  }
  std::set<NodeId> seen{NodeId{1}};
  std::vector<NodeId> stack{NodeId{1}};
  while (!stack.empty()) {
    auto u = stack.back();
    stack.pop_back();
    for (auto v : adj[u]) {
      if (seen.insert(v).second) stack.push_back(v);
    }
  }
  return static_cast<int>(seen.size()) == n;
}


}  // namespace

TEST(Routing, MatchesShortestPathOracleOnRandomGraphs) {
  std::mt19937_64 rng(2024);
  std::size_t pairs = 0;
  for (int g = 0; g < 500; ++g) {
    int n = 2 + static_cast<int>(rng() % 6);
    auto edges = random_connected(rng, n);
    auto db = LinkStateDb::from_edges(edges);
    for (int s = 1; s <= n; ++s) {
      NodeId self{static_cast<std::uint64_t>(s)};
      auto got = compute_routes(db, self);
      auto want = oracle_routes(edges, n, self);
      ASSERT_EQ(got.size(), static_cast<std::size_t>(n - 1));
      for (const auto& [dst, r] : want) {
        ++pairs;
        ASSERT_EQ(got.at(dst), r) << "graph " << g << " " << s << "->" << dst.value;
      }
    }
  }
  EXPECT_GT(pairs, 3000u);
}

TEST(Routing, DisconnectedComponentsHaveNoRoute) {
  auto db = LinkStateDb::from_edges({{NodeId{1}, NodeId{2}}, {NodeId{3}, NodeId{4}}});
  auto r = compute_routes(db, NodeId{1});
  EXPECT_EQ(r.size(), 1u);
  EXPECT_EQ(r.count(NodeId{3}), 0u);
  EXPECT_TRUE(compute_routes(db, NodeId{9}).empty());
}

TEST(Routing, EqualCostTieBreaksOnSmallestFirstHop) {
  // 1-5-3 and 1-2-3: first hop 2 wins.
  auto db = LinkStateDb::from_edges({{NodeId{1}, NodeId{5}}, {NodeId{5}, NodeId{3}}, {NodeId{1}, NodeId{2}}, {NodeId{2}, NodeId{3}}});
  auto r = compute_routes(db, NodeId{1});
  EXPECT_EQ(r.at(NodeId{3}), (Route{NodeId{2}, 2}));
}

TEST(LinkState, AsymmetricEdgesIgnoredAndStaleSeqRejected) {
  LinkStateDb db;
  db.apply({NodeId{1}, 5, {NodeId{2}}, {}, 0});
  db.apply({NodeId{2}, 1, {}, {}, 0});
  EXPECT_FALSE(db.has_edge(NodeId{1}, NodeId{2}));
  EXPECT_TRUE(db.apply({NodeId{2}, 2, {NodeId{1}}, {}, 0}));
  EXPECT_TRUE(db.has_edge(NodeId{1}, NodeId{2}));
  EXPECT_FALSE(db.apply({NodeId{2}, 2, {}, {}, 0}));
  EXPECT_FALSE(db.apply({NodeId{2}, 1, {}, {}, 0}));
  auto gone = db.expire(10'000, 6000, NodeId{1});
  EXPECT_EQ(gone, std::vector<NodeId>{NodeId{2}});
  EXPECT_TRUE(db.contains(NodeId{1}));
}

TEST(MulticastTree, SpanningTreeOnRandomGraphs) {
  std::mt19937_64 rng(7);
  for (int g = 0; g < 100; ++g) {
    int n = 2 + static_cast<int>(rng() % 9);
    auto edges = random_connected(rng, n);
    auto tree = compute_multicast_tree(LinkStateDb::from_edges(edges));
    EXPECT_EQ(tree.edges.size(), static_cast<std::size_t>(n - 1));
    EXPECT_TRUE(spans_connected(tree, n));
    for (auto e : tree.edges) EXPECT_TRUE(std::find(edges.begin(), edges.end(), e) != edges.end());
  }
}

TEST(Forwarding, TtlAndNoRoute) {
  RoutingTable t{{NodeId{3}, Route{NodeId{2}, 2}}};
  auto d = forward_unicast(NodeId{1}, NodeId{3}, 1, false, t);
  EXPECT_EQ(d.kind, ForwardDecision::Kind::Forward);
  EXPECT_EQ(d.ttl, 1);
  EXPECT_EQ(forward_unicast(NodeId{1}, NodeId{3}, 1, true, t).kind, ForwardDecision::Kind::DropTtl);
  EXPECT_EQ(forward_unicast(NodeId{1}, NodeId{3}, 5, true, t).ttl, 4);
  EXPECT_EQ(forward_unicast(NodeId{3}, NodeId{3}, 5, true, t).kind, ForwardDecision::Kind::DeliverLocal);
  EXPECT_THROW(forward_unicast(NodeId{1}, NodeId{4}, 5, false, t), Error);
}

TEST(ControlFrame, EncodeDecodeRoundTrip) {
  ControlFrame t{{FrameType::Topology, NodeId{7}, 42}, Topology{ConfigKey{1, 3}, {NodeId{2}, NodeId{9}}}};
  auto back = decode(encode(t));
  EXPECT_EQ(back.header.origin, NodeId{7});
  EXPECT_EQ(back.header.seq, 42u);
  const auto& tb = std::get<Topology>(back.body);
  EXPECT_EQ(tb.config, (ConfigKey{1, 3}));
  EXPECT_EQ(tb.neighbors, (std::vector<NodeId>{NodeId{2}, NodeId{9}}));

  ControlFrame u{{FrameType::Unicast, NodeId{1}, 3}, Unicast{NodeId{5}, 17, AppKind::Overlay, to_bytes("abc")}};
  auto ub = std::get<Unicast>(decode(encode(u)).body);
  EXPECT_EQ(ub.destination, NodeId{5});
  EXPECT_EQ(ub.ttl, 17);
  EXPECT_EQ(ub.app, AppKind::Overlay);
  EXPECT_EQ(ub.data, to_bytes("abc"));

  auto bytes = encode(u);
  EXPECT_THROW(decode(Bytes(bytes.begin(), bytes.begin() + 5)), Error);
}

TEST(Dedup, LruEviction) {
  LruSet<int> s(2);
  EXPECT_TRUE(s.insert(1));
  EXPECT_TRUE(s.insert(2));
  EXPECT_FALSE(s.insert(1));  // 1 becomes most recent
  EXPECT_TRUE(s.insert(3));   // evicts 2
  EXPECT_TRUE(s.contains(1));
  EXPECT_FALSE(s.contains(2));
  EXPECT_EQ(s.size(), 2u);
}

TEST(MeshProtocol, ConvergesToOracleRoutes) {
  std::mt19937_64 rng(99);
  for (int g = 0; g < 20; ++g) {
    int n = 2 + static_cast<int>(rng() % 9);
    auto edges = random_connected(rng, n);
    LiveMesh m(edges, n, static_cast<std::uint64_t>(g));
    m.engine.run_until(20'000);
    for (int s = 1; s <= n; ++s) {
      NodeId self{static_cast<std::uint64_t>(s)};
      EXPECT_EQ(m.mesh.routes(self), oracle_routes(edges, n, self)) << "graph " << g << " node " << s;
    }
  }
}

TEST(MeshProtocol, MulticastExactlyOnceOverTree) {
  std::mt19937_64 rng(5);
  for (int g = 0; g < 20; ++g) {
    int n = 2 + static_cast<int>(rng() % 9);
    auto edges = random_connected(rng, n);
    LiveMesh m(edges, n, 1);
    std::map<NodeId, int> got;
    m.mesh.on_app(AppKind::DnsQuery, [&](NodeId at, NodeId, const Bytes&) { ++got[at]; });
    m.engine.run_until(20'000);
    NodeId origin{1 + rng() % static_cast<std::uint64_t>(n)};
    auto before = m.mesh.stats();
    m.mesh.send_multicast(origin, AppKind::DnsQuery, to_bytes("q"));
    m.engine.run_until(25'000);
    EXPECT_EQ(static_cast<int>(got.size()), n);
    for (auto [_, c] : got) EXPECT_EQ(c, 1);
    EXPECT_EQ(m.mesh.stats().multicast_duplicates, before.multicast_duplicates);
    for (int s = 1; s <= n; ++s) EXPECT_EQ(m.mesh.tree(NodeId{static_cast<std::uint64_t>(s)}).edges.size(), static_cast<std::size_t>(n - 1));
  }
}

TEST(MeshProtocol, UnicastFollowsRoutesAndReroutesAfterLinkLoss) {
  // Ring 1-2-3-4-1.
  Edges ring{{NodeId{1}, NodeId{2}}, {NodeId{2}, NodeId{3}}, {NodeId{3}, NodeId{4}}, {NodeId{1}, NodeId{4}}};
  LiveMesh m(ring, 4, 3);
  std::vector<std::pair<NodeId, NodeId>> got;
  m.mesh.on_app(AppKind::Overlay, [&](NodeId at, NodeId origin, const Bytes&) { got.emplace_back(at, origin); });
  m.engine.run_until(15'000);
  EXPECT_EQ(m.mesh.path(NodeId{1}, NodeId{3}), (std::vector<NodeId>{NodeId{1}, NodeId{2}, NodeId{3}}));
  EXPECT_TRUE(m.mesh.send_unicast(NodeId{1}, NodeId{3}, AppKind::Overlay, to_bytes("x")));
  m.engine.run_until(16'000);
  ASSERT_EQ(got.size(), 1u);
  EXPECT_EQ(got[0], std::make_pair(NodeId{3}, NodeId{1}));

  m.medium.set_up(m.links.at({NodeId{1}, NodeId{2}}), false);
  m.engine.run_until(30'000);
  EXPECT_EQ(m.mesh.path(NodeId{1}, NodeId{3}), (std::vector<NodeId>{NodeId{1}, NodeId{4}, NodeId{3}}));
  EXPECT_EQ(m.mesh.routes(NodeId{1}).at(NodeId{2}).hop_count, 3u);
}

TEST(MeshProtocol, PartitionRemovesRoutesAndSendReportsNoRoute) {
  Edges line{{NodeId{1}, NodeId{2}}, {NodeId{2}, NodeId{3}}};
  LiveMesh m(line, 3, 1);
  m.engine.run_until(10'000);
  EXPECT_TRUE(m.mesh.reachable(NodeId{1}, NodeId{3}));
  m.medium.set_up(m.links.at({NodeId{2}, NodeId{3}}), false);
  m.engine.run_until(30'000);
  EXPECT_FALSE(m.mesh.reachable(NodeId{1}, NodeId{3}));
  EXPECT_FALSE(m.mesh.send_unicast(NodeId{1}, NodeId{3}, AppKind::Overlay, to_bytes("x")));
  EXPECT_EQ(m.engine.log().of_kind("unicast_drop").back()->data["reason"], "no_route");
}

TEST(MeshProtocol, PowerCycleAndConfigLearned) {
  Edges line{{NodeId{1}, NodeId{2}}, {NodeId{2}, NodeId{3}}};
  LiveMesh m(line, 3, 1);
  std::vector<NodeId> learned;
  m.mesh.on_config_learned([&](NodeId at) { learned.push_back(at); });
  m.engine.run_until(10'000);
  learned.clear();
  m.mesh.set_config_key(NodeId{3}, ConfigKey{0, 2});
  m.engine.run_until(12'000);
  EXPECT_NE(std::find(learned.begin(), learned.end(), NodeId{1}), learned.end());
  EXPECT_EQ(m.mesh.lsdb(NodeId{1}).find(NodeId{3})->config, (ConfigKey{0, 2}));

  m.mesh.power_off(NodeId{2});
  EXPECT_TRUE(m.mesh.routes(NodeId{2}).empty());
  m.engine.run_until(30'000);
  EXPECT_FALSE(m.mesh.reachable(NodeId{1}, NodeId{3}));
  m.mesh.power_on(NodeId{2});
  m.engine.run_until(45'000);
  EXPECT_TRUE(m.mesh.reachable(NodeId{1}, NodeId{3}));
}

TEST(MeshProtocol, RebootedOriginIsNotTakenForDuplicate) {
  Edges line{{NodeId{1}, NodeId{2}}, {NodeId{2}, NodeId{3}}};
  LiveMesh m(line, 3, 1);
  std::map<NodeId, int> got;
  m.mesh.on_app(AppKind::Chat, [&](NodeId at, NodeId, const Bytes&) { ++got[at]; });
  m.engine.run_until(10'000);
  m.mesh.send_multicast(NodeId{2}, AppKind::Chat, to_bytes("before"));
  m.engine.run_until(11'000);
  m.mesh.power_off(NodeId{2});
  m.engine.run_until(12'000);
  m.mesh.power_on(NodeId{2});
  m.engine.run_until(25'000);
  auto seq = m.mesh.send_multicast(NodeId{2}, AppKind::Chat, to_bytes("after"));
  EXPECT_EQ(seq, 2u);
  m.engine.run_until(26'000);
  EXPECT_EQ(got, (std::map<NodeId, int>{{NodeId{1}, 2}, {NodeId{2}, 2}, {NodeId{3}, 2}}));
  EXPECT_EQ(m.mesh.stats().multicast_duplicates, 0u);
}
