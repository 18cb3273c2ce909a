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
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phoenix/dns/zone.hpp"
#include "phoenix/mesh/mesh.hpp"
#include "phoenix/overlay/environment.hpp"

namespace phoenix::dns {

struct DnsConfig {
  SimTime query_timeout_ms{3000};
  // After the first answer, further answers are gathered for this long.
  SimTime gather_window_ms{250};
  SimTime publish_interval_ms{10'000};
  std::uint32_t default_ttl{300};
};

struct QueryResult {
  std::string name;
  RrType type{RrType::A};
  std::vector<ResourceRecord> records;
  std::set<NodeId> sources;
  SimTime latency{0};
  SimTime timeout{0};
  bool negative{true};
  bool local{false};
};

inline void to_json(nlohmann::json& j, const QueryResult& q) {
  std::vector<std::uint64_t> src;
  for (auto s : q.sources) src.push_back(s.value);
  j = {{"name", q.name},      {"type", std::string(to_string(q.type))},
       {"records", q.records}, {"sources", src},
       {"latency_ms", q.latency}, {"timeout_ms", q.timeout}, {"negative", q.negative},
       {"local", q.local}};
}

struct ServiceTarget {
  std::string instance;
  std::string target;
  std::uint16_t port{0};
  std::uint16_t priority{0};
  std::uint16_t weight{0};
  NodeId origin;

  bool operator==(const ServiceTarget&) const = default;
};

// Masterless DNS over the mesh. Every node is authoritative for the records
// registered at it, publishes its full set by multicast whenever it changes
// (and periodically as a refresh), and answers multicast queries for names
// it owns.
class DnsService {
 public:
  using ResultFn = std::function<void(const QueryResult&)>;
  using DiscoverFn = std::function<void(const std::vector<ServiceTarget>&)>;

  DnsService(sim::Engine& engine, mesh::Mesh& mesh, DnsConfig config = {})
      : engine_(engine), mesh_(mesh), config_(config) {
    mesh_.on_app(mesh::AppKind::DnsQuery,
                 [this](NodeId at, NodeId origin, const Bytes& d) { on_query(at, origin, d); });
    mesh_.on_app(mesh::AppKind::DnsAnswer,
                 [this](NodeId at, NodeId origin, const Bytes& d) { on_answer(at, origin, d); });
    mesh_.on_app(mesh::AppKind::DnsPublish,
                 [this](NodeId at, NodeId origin, const Bytes& d) { on_publish(at, origin, d); });
  }

  DnsService(const DnsService&) = delete;
  DnsService& operator=(const DnsService&) = delete;

  const DnsConfig& config() const { return config_; }

  void add_node(NodeId n) { nodes_.try_emplace(n, n); }

  // Starts the refresh timer and announces the zone.
  void node_up(NodeId n) {
    auto& s = node(n);
    s.up = true;
    ++s.epoch;
    schedule_publish(n);
    schedule_refresh(n, s.epoch);
  }

  // Replicated state is volatile; own records survive a restart.
  void node_down(NodeId n) {
    auto& s = node(n);
    s.up = false;
    ++s.epoch;
    s.zone.clear_replicas();
    s.published_serial = ~std::uint64_t{0};
  }

  SharedZone& zone(NodeId n) { return node(n).zone; }
  const SharedZone& zone(NodeId n) const { return node(n).zone; }

  void register_record(NodeId n, ResourceRecord r) {
    r.name = normalize_name(r.name);
    if (!in_shared_zone(r.name)) {
      throw Error(Errc::InvalidArgument, fmt::format("'{}' is outside {} and {}", r.name, kDomain, kReverseSuffix));
    }
    if (r.ttl == 0) r.ttl = config_.default_ttl;
    if (node(n).zone.add_own(std::move(r))) schedule_publish(n);
  }

  std::size_t withdraw(NodeId n, std::string_view name, RrType type, std::optional<std::string_view> rdata = {}) {
    auto removed = node(n).zone.remove_own(normalize_name(name), type, rdata);
    if (removed != 0) schedule_publish(n);
    return removed;
  }

  // Registers <device>.phxnet.org with a first-come-first-serve claim plus the
  // matching reverse record.
  std::string assign_hostname(NodeId n, std::string_view device, std::uint32_t addr) {
    auto name = fqdn(device);
    auto& s = node(n);
    if (auto w = s.zone.winning_claim(name); w && w->origin != n) {
      throw Error(Errc::DuplicateName, fmt::format("{} already claimed by node {}", name, w->origin.value));
    }
    auto ip = overlay::ip_to_string(addr);
    for (const auto& r : s.zone.lookup_own(name, RrType::A)) {
      if (r.is_claim() && r.rdata == ip) return name;
    }
    s.zone.remove_own(name, RrType::A);
    ResourceRecord a{name, RrType::A, config_.default_ttl, ip, n, engine_.now()};
    ResourceRecord ptr{reverse_name(addr), RrType::PTR, config_.default_ttl, name, n, kNoClaim};
    s.zone.add_own(a);
    s.zone.add_own(ptr);
    engine_.log().append(engine_.now(), "hostname_assigned", {{"node", n.value}, {"name", name}, {"address", ip}});
    schedule_publish(n);
    return name;
  }

  // Local authoritative and replicated records only.
  std::optional<QueryResult> resolve_local(NodeId n, std::string_view name, RrType type) const {
    auto norm = normalize_name(name);
    auto records = node(n).zone.lookup(norm, type);
    if (records.empty()) return std::nullopt;
    QueryResult q;
    q.name = norm;
    q.type = type;
    for (const auto& r : records) q.sources.insert(r.origin);
    q.records = std::move(records);
    q.negative = false;
    q.local = true;
    return q;
  }

  // Local hit completes with zero latency. Otherwise a multicast query goes
  // out and answers are merged until the gather window after the first
  // answer closes, or the timeout expires with a negative result.
  // `network_only` skips the local store (used to re-check a stale entry).
  void resolve(NodeId n, std::string_view name, RrType type, ResultFn done,
               std::optional<SimTime> timeout = std::nullopt, bool network_only = false) {
    SimTime limit = timeout.value_or(config_.query_timeout_ms);
    if (auto hit = network_only ? std::nullopt : resolve_local(n, name, type)) {
      hit->timeout = limit;
      engine_.schedule_after(0, [this, n, q = std::move(*hit), done = std::move(done)]() {
        log_result(n, q);
        done(q);
      });
      return;
    }
    std::uint32_t qid = ++next_query_;
    Pending p;
    p.node = n;
    p.name = normalize_name(name);
    p.type = type;
    p.started = engine_.now();
    p.limit = limit;
    p.done = std::move(done);
    p.timer = engine_.schedule_after(limit, [this, qid]() { finish(qid); });
    ByteWriter w;
    w.u32(qid).u8(static_cast<std::uint8_t>(type)).str16(p.name);
    pending_.emplace(qid, std::move(p));
    ++stats_.queries;
    mesh_.send_multicast(n, mesh::AppKind::DnsQuery, std::move(w).take());
  }

  // PTR walk for a service label followed by SRV lookups for each instance.
  // Result sorted by priority, then target.
  void discover_service(NodeId n, std::string_view label, DiscoverFn done) {
    auto service = fqdn(label);
    resolve(n, service, RrType::PTR, [this, n, done = std::move(done)](const QueryResult& ptr) {
      if (ptr.negative) {
        done({});
        return;
      }
      std::set<std::string> instances;
      for (const auto& r : ptr.records) instances.insert(r.rdata);
      struct Walk {
        std::size_t remaining;
        std::vector<ServiceTarget> found;
        DiscoverFn done;
      };
      auto walk = std::make_shared<Walk>(Walk{instances.size(), {}, done});
      for (const auto& inst : instances) {
        resolve(n, inst, RrType::SRV, [walk, inst](const QueryResult& srv) {
          for (const auto& r : srv.records) {
            auto d = parse_srv(r.rdata);
            walk->found.push_back(ServiceTarget{inst, d.target, d.port, d.priority, d.weight, r.origin});
          }
          if (--walk->remaining == 0) {
            auto& f = walk->found;
            std::sort(f.begin(), f.end(), [](const auto& a, const auto& b) {
              return std::tie(a.priority, a.target, a.port, a.origin) < std::tie(b.priority, b.target, b.port, b.origin);
            });
            f.erase(std::unique(f.begin(), f.end()), f.end());
            walk->done(f);
          }
        });
      }
    });
  }

  // Announces the full own record set when it changed since the last
  // announcement. Returns whether a frame was emitted.
  bool publish_zone(NodeId n) {
    auto& s = node(n);
    if (!s.up || s.zone.serial() == s.published_serial) return false;
    return announce(n);
  }

  bool dirty(NodeId n) const {
    const auto& s = node(n);
    return s.zone.serial() != s.published_serial;
  }

  struct Stats {
    std::uint64_t queries{0};
    std::uint64_t answers{0};
    std::uint64_t publishes{0};
  };
  const Stats& stats() const { return stats_; }
  std::size_t pending_queries() const { return pending_.size(); }

  std::vector<NodeId> nodes() const {
    std::vector<NodeId> out;
    for (const auto& [id, _] : nodes_) out.push_back(id);
    return out;
  }

 private:
  struct NodeState {
    explicit NodeState(NodeId id) : zone(id) {}
    SharedZone zone;
    bool up{false};
    std::uint64_t epoch{0};
    std::uint64_t published_serial{~std::uint64_t{0}};
    bool publish_scheduled{false};
  };

  struct Pending {
    NodeId node;
    std::string name;
    RrType type{RrType::A};
    SimTime started{0};
    SimTime limit{0};
    ResultFn done;
    sim::EventId timer{0};
    bool answered{false};
    std::vector<ResourceRecord> records;
  };

  NodeState& node(NodeId n) {
    auto it = nodes_.find(n);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, fmt::format("dns node {}", n));
    return it->second;
  }
  const NodeState& node(NodeId n) const {
    auto it = nodes_.find(n);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, fmt::format("dns node {}", n));
    return it->second;
  }

  void schedule_publish(NodeId n) {
    auto& s = node(n);
    if (s.publish_scheduled) return;
    s.publish_scheduled = true;
    engine_.schedule_after(0, [this, n]() {
      node(n).publish_scheduled = false;
      publish_zone(n);
    });
  }

  void schedule_refresh(NodeId n, std::uint64_t epoch) {
    engine_.schedule_after(config_.publish_interval_ms, [this, n, epoch]() {
      auto& s = node(n);
      if (!s.up || s.epoch != epoch) return;
      auto gone = s.zone.expire(engine_.now());
      for (auto origin : gone) {
        engine_.log().append(engine_.now(), "dns_replica_expired", {{"node", n.value}, {"origin", origin.value}});
      }
      if (s.zone.serial() != 0) announce(n);
      schedule_refresh(n, epoch);
    });
  }

  bool announce(NodeId n) {
    auto& s = node(n);
    ByteWriter w;
    const auto& own = s.zone.own();
    w.u64(s.zone.serial()).u16(static_cast<std::uint16_t>(own.size()));
    for (const auto& r : own) write_record(w, r);
    if (mesh_.send_multicast(n, mesh::AppKind::DnsPublish, std::move(w).take()) == 0) return false;
    s.published_serial = s.zone.serial();
    ++stats_.publishes;
    return true;
  }

  void on_publish(NodeId at, NodeId origin, const Bytes& data) {
    if (at == origin) return;
    auto& s = node(at);
    if (!s.up) return;
    ByteReader r(data);
    auto serial = r.u64();
    auto count = r.u16();
    std::vector<ResourceRecord> records;
    records.reserve(count);
    for (std::uint16_t i = 0; i < count; ++i) records.push_back(read_record(r));
    SimTime hold = 2 * config_.publish_interval_ms;
    if (!s.zone.apply_publish(origin, serial, std::move(records), engine_.now() + hold)) return;
    // A replicated earlier claim wins over our own later one.
    std::vector<std::string> lost;
    for (const auto& own : s.zone.own()) {
      if (!own.is_claim()) continue;
      auto w = s.zone.winning_claim(own.name);
      if (w && w->origin != at) lost.push_back(own.name);
    }
    for (const auto& name : lost) {
      s.zone.remove_own(name, RrType::A);
      engine_.log().append(engine_.now(), "hostname_conflict",
                           {{"node", at.value}, {"name", name}, {"winner", s.zone.winning_claim(name)->origin.value}});
    }
    if (!lost.empty()) schedule_publish(at);
  }

  void on_query(NodeId at, NodeId origin, const Bytes& data) {
    if (at == origin) return;
    ByteReader r(data);
    auto qid = r.u32();
    auto type = static_cast<RrType>(r.u8());
    auto name = r.str16();
    auto own = node(at).zone.lookup_own(name, type);
    if (own.empty()) return;
    ByteWriter w;
    w.u32(qid).u16(static_cast<std::uint16_t>(own.size()));
    for (const auto& rec : own) write_record(w, rec);
    ++stats_.answers;
    mesh_.send_unicast(at, origin, mesh::AppKind::DnsAnswer, std::move(w).take());
  }

  void on_answer(NodeId at, NodeId, const Bytes& data) {
    ByteReader r(data);
    auto qid = r.u32();
    auto it = pending_.find(qid);
    if (it == pending_.end() || it->second.node != at) return;
    auto& p = it->second;
    auto count = r.u16();
    for (std::uint16_t i = 0; i < count; ++i) p.records.push_back(read_record(r));
    if (p.answered) return;
    p.answered = true;
    engine_.cancel(p.timer);
    SimTime end = std::min(engine_.now() + config_.gather_window_ms, p.started + p.limit);
    p.timer = engine_.schedule_at(end, [this, qid]() { finish(qid); });
  }

  void finish(std::uint32_t qid) {
    auto it = pending_.find(qid);
    if (it == pending_.end()) return;
    Pending p = std::move(it->second);
    pending_.erase(it);
    QueryResult q;
    q.name = p.name;
    q.type = p.type;
    q.records = std::move(p.records);
    sort_merged(q.records);
    for (const auto& r : q.records) q.sources.insert(r.origin);
    q.negative = q.records.empty();
    q.latency = engine_.now() - p.started;
    q.timeout = p.limit;
    log_result(p.node, q);
    p.done(q);
  }

  void log_result(NodeId n, const QueryResult& q) {
    engine_.log().append(engine_.now(), "dns_resolve",
                         {{"node", n.value},
                          {"name", q.name},
                          {"type", std::string(to_string(q.type))},
                          {"negative", q.negative},
                          {"local", q.local},
                          {"latency_ms", q.latency},
                          {"timeout_ms", q.timeout},
                          {"count", q.records.size()}});
  }

  sim::Engine& engine_;
  mesh::Mesh& mesh_;
  DnsConfig config_;
  std::map<NodeId, NodeState> nodes_;
  std::map<std::uint32_t, Pending> pending_;
  std::uint32_t next_query_{0};
  Stats stats_;
};

}  // namespace phoenix::dns
