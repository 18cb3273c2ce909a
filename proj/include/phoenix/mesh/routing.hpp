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

#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "phoenix/mesh/control_frame.hpp"

namespace phoenix::mesh {

struct Advertisement {
  NodeId origin;
  std::uint32_t seq{0};
  std::set<NodeId> neighbors;
  ConfigKey config;
  SimTime received_at{0};
};

// Link-state database. One advertisement per origin; only the highest
// sequence number is retained. An edge is usable when both endpoints list
// each other.
class LinkStateDb {
 public:
  // Returns true if the advertisement was newer and replaced the stored one.
  bool apply(const Advertisement& adv) {
    auto it = ads_.find(adv.origin);
    if (it != ads_.end() && adv.seq <= it->second.seq) return false;
    ads_[adv.origin] = adv;
    return true;
  }

  // Replaces the node's own entry unconditionally.
  void set_own(const Advertisement& adv) { ads_[adv.origin] = adv; }

  // Removes advertisements from other origins older than hold_ms.
  std::vector<NodeId> expire(SimTime now, SimTime hold_ms, NodeId self) {
    std::vector<NodeId> gone;
    for (auto it = ads_.begin(); it != ads_.end();) {
      if (it->first != self && now - it->second.received_at >= hold_ms) {
        gone.push_back(it->first);
        it = ads_.erase(it);
      } else {
        ++it;
      }
    }
    return gone;
  }

  void erase(NodeId origin) { ads_.erase(origin); }

  bool contains(NodeId n) const { return ads_.count(n) != 0; }
  bool empty() const { return ads_.empty(); }
  const std::map<NodeId, Advertisement>& advertisements() const { return ads_; }

  const Advertisement* find(NodeId n) const {
    auto it = ads_.find(n);
    return it == ads_.end() ? nullptr : &it->second;
  }

  bool has_edge(NodeId a, NodeId b) const {
    auto ia = ads_.find(a);
    auto ib = ads_.find(b);
    return ia != ads_.end() && ib != ads_.end() && ia->second.neighbors.count(b) != 0 &&
           ib->second.neighbors.count(a) != 0;
  }

  // Symmetric adjacency, neighbor lists sorted ascending.
  std::map<NodeId, std::vector<NodeId>> adjacency() const {
    std::map<NodeId, std::vector<NodeId>> adj;
    for (const auto& [origin, adv] : ads_) {
      auto& list = adj[origin];
      for (auto n : adv.neighbors) {
        if (has_edge(origin, n)) list.push_back(n);
      }
    }
    return adj;
  }

  // Symmetric edges as (min, max) pairs in lexicographic order.
  std::vector<std::pair<NodeId, NodeId>> edges() const {
    std::vector<std::pair<NodeId, NodeId>> out;
    for (const auto& [origin, adv] : ads_) {
      for (auto n : adv.neighbors) {
        if (origin < n && has_edge(origin, n)) out.emplace_back(origin, n);
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Convenience for tests and tools: builds a converged database from an
  // undirected edge list.
  static LinkStateDb from_edges(const std::vector<std::pair<NodeId, NodeId>>& edges,
                                const std::vector<NodeId>& isolated = {}) {
    std::map<NodeId, Advertisement> ads;
    for (auto n : isolated) ads[n].origin = n;
    for (auto [a, b] : edges) {
      ads[a].origin = a;
      ads[b].origin = b;
      ads[a].neighbors.insert(b);
      ads[b].neighbors.insert(a);
    }
    LinkStateDb db;
    for (auto& [_, adv] : ads) db.set_own(adv);
    return db;
  }

 private:
  std::map<NodeId, Advertisement> ads_;
};

struct Route {
  NodeId next_hop;
  std::uint32_t hop_count{0};
  bool operator==(const Route&) const = default;
};

using RoutingTable = std::map<NodeId, Route>;

// Shortest hop-count routes from `self`. Among equal-length paths the one
// whose first hop has the smallest node id wins.
inline RoutingTable compute_routes(const LinkStateDb& db, NodeId self) {
  RoutingTable table;
  auto adj = db.adjacency();
  if (adj.find(self) == adj.end()) return table;

  std::map<NodeId, std::uint32_t> dist{{self, 0}};
  std::map<NodeId, NodeId> first_hop;
  std::vector<NodeId> frontier{self};
  std::uint32_t depth = 0;
  while (!frontier.empty()) {
    ++depth;
    std::map<NodeId, NodeId> next;  // node -> best first hop at this depth
    for (auto u : frontier) {
      for (auto v : adj[u]) {
        if (dist.count(v) != 0) continue;
        NodeId hop = u == self ? v : first_hop.at(u);
        auto [it, inserted] = next.emplace(v, hop);
        if (!inserted && hop < it->second) it->second = hop;
      }
    }
    frontier.clear();
    for (auto [v, hop] : next) {
      dist[v] = depth;
      first_hop[v] = hop;
      table[v] = Route{hop, depth};
      frontier.push_back(v);
    }
  }
  return table;
}

struct MulticastTree {
  std::set<std::pair<NodeId, NodeId>> edges;  // (min, max)
  std::map<NodeId, std::set<NodeId>> forwarding;
  std::set<NodeId> nodes;

  const std::set<NodeId>& forwarding_set(NodeId n) const {
    static const std::set<NodeId> kEmpty;
    auto it = forwarding.find(n);
    return it == forwarding.end() ? kEmpty : it->second;
  }

  bool operator==(const MulticastTree&) const = default;
};

// Deterministic spanning forest: Kruskal over unit-weight edges taken in
// (min id, max id) order. Every node holding the same database derives the
// same tree.
inline MulticastTree compute_multicast_tree(const LinkStateDb& db) {
  MulticastTree tree;
  std::map<NodeId, NodeId> parent;
  for (const auto& [n, _] : db.advertisements()) {
    parent[n] = n;
    tree.nodes.insert(n);
  }
  auto find = [&](NodeId x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (auto [a, b] : db.edges()) {
    auto ra = find(a);
    auto rb = find(b);
    if (ra == rb) continue;
    parent[std::max(ra, rb)] = std::min(ra, rb);
    tree.edges.emplace(a, b);
    tree.forwarding[a].insert(b);
    tree.forwarding[b].insert(a);
  }
  return tree;
}

struct ForwardDecision {
  enum class Kind { DeliverLocal, Forward, DropTtl } kind{Kind::DeliverLocal};
  NodeId next_hop;
  std::uint8_t ttl{0};
};

// Unicast forwarding step at `self`. Transit nodes decrement the TTL and drop
// the frame when it reaches zero; the originating node sends with the TTL
// unchanged. Throws NoRoute when the destination is absent from the table.
inline ForwardDecision forward_unicast(NodeId self, NodeId destination, std::uint8_t ttl, bool transit,
                                       const RoutingTable& table) {
  if (destination == self) return {ForwardDecision::Kind::DeliverLocal, self, ttl};
  if (transit) {
    if (ttl <= 1) return {ForwardDecision::Kind::DropTtl, self, 0};
    --ttl;
  }
  auto it = table.find(destination);
  if (it == table.end()) {
    throw Error(Errc::NoRoute, fmt::format("{} has no route to {}", self, destination));
  }
  return {ForwardDecision::Kind::Forward, it->second.next_hop, ttl};
}

}  // namespace phoenix::mesh
