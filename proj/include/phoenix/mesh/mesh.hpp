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

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "phoenix/mesh/control_frame.hpp"
#include "phoenix/mesh/dedup_cache.hpp"
#include "phoenix/mesh/routing.hpp"
#include "phoenix/sim/medium.hpp"

namespace phoenix::mesh {

struct MeshConfig {
  SimTime hello_interval_ms{1000};
  SimTime hold_time_ms{3000};
  SimTime flood_interval_ms{2000};
  SimTime topology_hold_ms{6000};
  std::uint8_t default_ttl{64};
  std::size_t dedup_capacity{4096};
};

struct Neighbor {
  NodeId node_id;
  LinkId interface_index{0};
  SimTime last_hello_at{0};
  bool symmetric{false};
};

// OLSR-style MANET agent for every simulated node: hello-based neighbor
// discovery, flooded topology advertisements, hop-count routes, and
// tree-based multicast with per-node duplicate suppression.
class Mesh {
 public:
  using AppHandler = std::function<void(NodeId at, NodeId origin, const Bytes& data)>;

  Mesh(sim::Engine& engine, sim::Medium& medium, MeshConfig config = {})
      : engine_(engine), medium_(medium), config_(config) {}

  Mesh(const Mesh&) = delete;
  Mesh& operator=(const Mesh&) = delete;

  const MeshConfig& config() const { return config_; }

  void add_node(NodeId n) {
    nodes_.try_emplace(n, NodeState(config_.dedup_capacity));
  }

  bool has_node(NodeId n) const { return nodes_.count(n) != 0; }

  void power_on(NodeId n) {
    auto& s = state(n);
    if (s.powered) return;
    s.powered = true;
    ++s.epoch;
    medium_.set_node_powered(n, true);
    refresh_own(n, /*force=*/true);
    schedule_hello(n, s.epoch, 0);
    schedule_flood(n, s.epoch, config_.flood_interval_ms);
  }

  void power_off(NodeId n) {
    auto& s = state(n);
    if (!s.powered) return;
    // Configuration and sequence counters survive a power cycle, so a
    // rebooted node never reissues an (origin, seq) pair peers remember.
    auto kept = s;
    s = NodeState(config_.dedup_capacity);
    s.config = kept.config;
    s.epoch = kept.epoch + 1;
    s.hello_seq = kept.hello_seq;
    s.topology_seq = kept.topology_seq;
    s.multicast_seq = kept.multicast_seq;
    s.unicast_seq = kept.unicast_seq;
    medium_.set_node_powered(n, false);
    if (on_routes_changed_) on_routes_changed_(n);
  }

  bool powered(NodeId n) const { return state(n).powered; }

  void set_config_key(NodeId n, ConfigKey key) {
    auto& s = state(n);
    s.config = key;
    if (s.powered) refresh_own(n, /*force=*/true);
  }

  void on_app(AppKind kind, AppHandler handler) { handlers_[kind] = std::move(handler); }
  void on_routes_changed(std::function<void(NodeId)> fn) { on_routes_changed_ = std::move(fn); }
  // Fires when a node learns a changed ConfigKey for some origin.
  void on_config_learned(std::function<void(NodeId)> fn) { on_config_learned_ = std::move(fn); }

  const RoutingTable& routes(NodeId n) const { return state(n).routes; }
  const LinkStateDb& lsdb(NodeId n) const { return state(n).db; }
  const MulticastTree& tree(NodeId n) const { return state(n).tree; }

  std::vector<Neighbor> neighbor_entries(NodeId n) const {
    std::vector<Neighbor> out;
    for (const auto& [_, e] : state(n).neighbors) out.push_back(e);
    return out;
  }

  std::set<NodeId> neighbors(NodeId n) const { return symmetric_neighbors(state(n)); }

  bool reachable(NodeId from, NodeId to) const {
    return from == to || state(from).routes.count(to) != 0;
  }

  // Hop sequence obtained by following each node's own routing table.
  std::optional<std::vector<NodeId>> path(NodeId from, NodeId to) const {
    std::vector<NodeId> hops{from};
    NodeId at = from;
    while (at != to) {
      const auto& table = state(at).routes;
      auto it = table.find(to);
      if (it == table.end() || hops.size() > nodes_.size()) return std::nullopt;
      at = it->second.next_hop;
      hops.push_back(at);
    }
    return hops;
  }

  // Returns false (and logs the drop) when the source has no route.
  bool send_unicast(NodeId from, NodeId destination, AppKind app, Bytes data,
                    std::uint32_t wire_size = 0, std::optional<std::uint8_t> ttl = {}) {
    auto& s = state(from);
    if (!s.powered) return false;
    Unicast u{destination, ttl.value_or(config_.default_ttl), app, std::move(data)};
    ControlFrame f{{FrameType::Unicast, from, ++s.unicast_seq}, std::move(u)};
    return route_unicast(from, f, /*transit=*/false, wire_size);
  }

  // Originates a multicast packet; returns its sequence number. The origin
  // counts as a receiver and gets its own local delivery.
  std::uint32_t send_multicast(NodeId from, AppKind app, Bytes data) {
    auto& s = state(from);
    if (!s.powered) return 0;
    std::uint32_t seq = ++s.multicast_seq;
    ControlFrame f{{FrameType::Multicast, from, seq}, Multicast{app, std::move(data)}};
    accept_multicast(from, from, f);
    return seq;
  }

  // Entry point for frames delivered by the medium.
  void handle_frame(NodeId to, NodeId from, LinkId link, const sim::Packet& pkt) {
    auto& s = state(to);
    if (!s.powered) return;
    ControlFrame f = decode(pkt.bytes);
    switch (f.header.type) {
      case FrameType::Hello:
        on_hello(to, from, link, f.header, std::get<Hello>(f.body));
        break;
      case FrameType::Topology:
        on_topology(to, link, f.header, std::get<Topology>(f.body));
        break;
      case FrameType::Multicast:
        accept_multicast(to, from, f);
        break;
      case FrameType::Unicast:
        route_unicast(to, f, /*transit=*/true, pkt.wire_size);
        break;
      default:
        break;
    }
  }

  struct Stats {
    std::uint64_t multicast_delivered{0};
    std::uint64_t multicast_duplicates{0};
    std::uint64_t unicast_delivered{0};
    std::uint64_t unicast_dropped{0};
  };
  const Stats& stats() const { return stats_; }

  // Time of the last change to any routing table.
  SimTime last_route_change() const { return last_route_change_; }

 private:
  struct NodeState {
    explicit NodeState(std::size_t dedup_capacity) : dedup(dedup_capacity) {}
    bool powered{false};
    std::uint64_t epoch{0};
    std::map<std::pair<NodeId, LinkId>, Neighbor> neighbors;
    LinkStateDb db;
    RoutingTable routes;
    MulticastTree tree;
    ConfigKey config;
    std::set<NodeId> advertised;
    std::uint32_t hello_seq{0};
    std::uint32_t topology_seq{0};
    std::uint32_t multicast_seq{0};
    std::uint32_t unicast_seq{0};
    LruSet<std::pair<std::uint64_t, std::uint32_t>> dedup;
  };

  NodeState& state(NodeId n) {
    auto it = nodes_.find(n);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, fmt::format("mesh node {}", n));
    return it->second;
  }
  const NodeState& state(NodeId n) const {
    auto it = nodes_.find(n);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, fmt::format("mesh node {}", n));
    return it->second;
  }

  static std::set<NodeId> symmetric_neighbors(const NodeState& s) {
    std::set<NodeId> out;
    for (const auto& [_, e] : s.neighbors) {
      if (e.symmetric) out.insert(e.node_id);
    }
    return out;
  }

  void send_on(NodeId from, LinkId link, const ControlFrame& f, std::uint32_t wire_size = 0) {
    if (!medium_.link(link).up) return;
    sim::Packet p{encode(f), wire_size};
    medium_.transmit(link, from, std::move(p), static_cast<std::uint8_t>(f.header.type));
  }

  std::vector<LinkId> mesh_links(NodeId n) const {
    std::vector<LinkId> out;
    for (auto id : medium_.links_of(n)) {
      const auto& l = medium_.link(id);
      if (l.kind == sim::LinkKind::Mesh && l.up) out.push_back(id);
    }
    return out;
  }

  void schedule_hello(NodeId n, std::uint64_t epoch, SimTime delay) {
    engine_.schedule_after(delay, [this, n, epoch]() {
      auto& s = state(n);
      if (!s.powered || s.epoch != epoch) return;
      for (auto link : mesh_links(n)) {
        Hello h;
        for (const auto& [key, e] : s.neighbors) {
          if (key.second == link) h.heard.push_back(e.node_id);
        }
        send_on(n, link, ControlFrame{{FrameType::Hello, n, ++s.hello_seq}, std::move(h)});
      }
      schedule_hello(n, epoch, config_.hello_interval_ms);
    });
  }

  void schedule_flood(NodeId n, std::uint64_t epoch, SimTime delay) {
    engine_.schedule_after(delay, [this, n, epoch]() {
      auto& s = state(n);
      if (!s.powered || s.epoch != epoch) return;
      auto gone = s.db.expire(engine_.now(), config_.topology_hold_ms, n);
      refresh_own(n, /*force=*/true);
      if (!gone.empty()) recompute(n);
      schedule_flood(n, epoch, config_.flood_interval_ms);
    });
  }

  // Rebuilds the node's own advertisement; floods it when it changed or when
  // forced by the periodic timer.
  void refresh_own(NodeId n, bool force) {
    auto& s = state(n);
    auto sym = symmetric_neighbors(s);
    const auto* own = s.db.find(n);
    bool changed = own == nullptr || sym != s.advertised || own->config != s.config;
    if (!changed && !force) return;
    s.advertised = sym;
    Advertisement adv{n, ++s.topology_seq, sym, s.config, engine_.now()};
    s.db.set_own(adv);
    if (changed) recompute(n);
    Topology t{s.config, std::vector<NodeId>(sym.begin(), sym.end())};
    ControlFrame f{{FrameType::Topology, n, adv.seq}, std::move(t)};
    for (auto link : mesh_links(n)) send_on(n, link, f);
  }

  void recompute(NodeId n) {
    auto& s = state(n);
    auto routes = compute_routes(s.db, n);
    s.tree = compute_multicast_tree(s.db);
    if (routes != s.routes) {
      s.routes = std::move(routes);
      last_route_change_ = engine_.now();
      if (on_routes_changed_) on_routes_changed_(n);
    }
  }

  void on_hello(NodeId to, NodeId from, LinkId link, const ControlHeader& h, const Hello& hello) {
    auto& s = state(to);
    auto& e = s.neighbors[{h.origin, link}];
    e.node_id = h.origin;
    e.interface_index = link;
    e.last_hello_at = engine_.now();
    e.symmetric = std::find(hello.heard.begin(), hello.heard.end(), to) != hello.heard.end();
    (void)from;
    auto epoch = s.epoch;
    NodeId peer = h.origin;
    engine_.schedule_after(config_.hold_time_ms, [this, to, peer, link, epoch]() {
      auto& st = state(to);
      if (!st.powered || st.epoch != epoch) return;
      auto it = st.neighbors.find({peer, link});
      if (it == st.neighbors.end()) return;
      if (engine_.now() - it->second.last_hello_at >= config_.hold_time_ms) {
        st.neighbors.erase(it);
        engine_.log().append(engine_.now(), "neighbor_lost",
                             {{"node", to.value}, {"neighbor", peer.value}, {"link", link}});
        refresh_own(to, /*force=*/false);
      }
    });
    refresh_own(to, /*force=*/false);
  }

  void on_topology(NodeId to, LinkId in_link, const ControlHeader& h, const Topology& t) {
    if (h.origin == to) return;
    auto& s = state(to);
    Advertisement adv{h.origin, h.seq, std::set<NodeId>(t.neighbors.begin(), t.neighbors.end()),
                      t.config, engine_.now()};
    const auto* prev = s.db.find(h.origin);
    bool config_changed = prev == nullptr || prev->config != t.config;
    if (!s.db.apply(adv)) return;
    recompute(to);
    if (config_changed && on_config_learned_) on_config_learned_(to);
    ControlFrame f{h, t};
    for (auto link : mesh_links(to)) {
      if (link != in_link) send_on(to, link, f);
    }
  }

  void accept_multicast(NodeId at, NodeId from, const ControlFrame& f) {
    auto& s = state(at);
    auto key = std::make_pair(f.header.origin.value, f.header.seq);
    const auto& m = std::get<Multicast>(f.body);
    if (!s.dedup.insert(key)) {
      ++stats_.multicast_duplicates;
      engine_.log().append(engine_.now(), "mcast_duplicate",
                           {{"node", at.value}, {"origin", f.header.origin.value}, {"seq", f.header.seq}});
      return;
    }
    ++stats_.multicast_delivered;
    engine_.log().append(engine_.now(), "mcast_deliver",
                         {{"node", at.value},
                          {"origin", f.header.origin.value},
                          {"seq", f.header.seq},
                          {"app", static_cast<int>(m.app)}});
    for (auto next : s.tree.forwarding_set(at)) {
      if (next == from) continue;
      if (auto link = medium_.usable_mesh_link(at, next)) send_on(at, *link, f);
    }
    if (auto it = handlers_.find(m.app); it != handlers_.end()) it->second(at, f.header.origin, m.data);
  }

  bool route_unicast(NodeId at, const ControlFrame& f, bool transit, std::uint32_t wire_size) {
    auto& s = state(at);
    const auto& u = std::get<Unicast>(f.body);
    ForwardDecision d;
    try {
      d = forward_unicast(at, u.destination, u.ttl, transit, s.routes);
    } catch (const Error&) {
      drop_unicast(at, f, "no_route");
      return false;
    }
    switch (d.kind) {
      case ForwardDecision::Kind::DeliverLocal: {
        ++stats_.unicast_delivered;
        engine_.log().append(engine_.now(), "unicast_deliver",
                             {{"node", at.value},
                              {"origin", f.header.origin.value},
                              {"seq", f.header.seq},
                              {"app", static_cast<int>(u.app)}});
        auto it = handlers_.find(u.app);
        if (it == handlers_.end()) return true;
        if (transit) {
          it->second(at, f.header.origin, u.data);
        } else {
          // Loopback is deferred so handlers never run re-entrantly.
          auto handler = it->second;
          engine_.schedule_after(0, [handler, at, origin = f.header.origin, data = u.data]() {
            handler(at, origin, data);
          });
        }
        return true;
      }
      case ForwardDecision::Kind::DropTtl:
        drop_unicast(at, f, "ttl");
        return false;
      case ForwardDecision::Kind::Forward: {
        auto link = medium_.usable_mesh_link(at, d.next_hop);
        if (!link) {
          drop_unicast(at, f, "link_down");
          return false;
        }
        ControlFrame out = f;
        std::get<Unicast>(out.body).ttl = d.ttl;
        send_on(at, *link, out, wire_size);
        return true;
      }
    }
    return false;
  }

  void drop_unicast(NodeId at, const ControlFrame& f, std::string_view reason) {
    ++stats_.unicast_dropped;
    const auto& u = std::get<Unicast>(f.body);
    engine_.log().append(engine_.now(), "unicast_drop",
                         {{"node", at.value},
                          {"origin", f.header.origin.value},
                          {"seq", f.header.seq},
                          {"destination", u.destination.value},
                          {"reason", reason}});
  }

  sim::Engine& engine_;
  sim::Medium& medium_;
  MeshConfig config_;
  std::map<NodeId, NodeState> nodes_;
  std::map<AppKind, AppHandler> handlers_;
  std::function<void(NodeId)> on_routes_changed_;
  std::function<void(NodeId)> on_config_learned_;
  Stats stats_;
  SimTime last_route_change_{0};
};

}  // namespace phoenix::mesh
