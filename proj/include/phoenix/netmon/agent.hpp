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

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phoenix/dns/dns_service.hpp"
#include "phoenix/netmon/backend.hpp"

namespace phoenix::netmon {

struct NetmonConfig {
  SimTime scan_interval_ms{10'000};
  SimTime link_stat_interval_ms{10'000};
  std::vector<std::uint16_t> probe_ports{22, 80, 443, 502, 20000};
  std::size_t cache_capacity{10'000};
  SimTime retransmit_ms{1000};
  std::size_t window{32};
  SimTime dedup_window_ms{30'000};
};

struct ScanDevice {
  std::string device;
  std::uint32_t address{0};
  std::vector<std::uint16_t> services;
};

struct ScanEnvironment {
  VlanType vlan{VlanType::Management};
  overlay::Subnet subnet;
  std::vector<ScanDevice> devices;
};

inline constexpr std::string_view kNetmonService = "_netmon._tcp";

// Monitoring agents on every node plus the transport to the backend at the
// control center. Each agent keeps unacknowledged samples in a bounded
// cache and streams them in order; the backend acknowledges cumulatively,
// so a partition only delays samples.
class NetmonService {
 public:
  using ScanFn = std::function<std::vector<ScanEnvironment>(NodeId)>;
  using PhaseFn = std::function<int(NodeId)>;

  NetmonService(sim::Engine& engine, const sim::Medium& medium, mesh::Mesh& mesh, dns::DnsService& dns,
                const NodeDirectory& directory, Backend& backend, NetmonConfig config = {})
      : engine_(engine),
        medium_(medium),
        mesh_(mesh),
        dns_(dns),
        directory_(directory),
        backend_(backend),
        config_(std::move(config)) {
    std::sort(config_.probe_ports.begin(), config_.probe_ports.end());
    mesh_.on_app(mesh::AppKind::NetmonSample,
                 [this](NodeId at, NodeId origin, const Bytes& d) { on_sample(at, origin, d); });
    mesh_.on_app(mesh::AppKind::NetmonAck, [this](NodeId at, NodeId, const Bytes& d) { on_ack(at, d); });
  }

  NetmonService(const NetmonService&) = delete;
  NetmonService& operator=(const NetmonService&) = delete;

  const NetmonConfig& config() const { return config_; }
  void set_scan_source(ScanFn fn) { scan_ = std::move(fn); }
  void set_phase_source(PhaseFn fn) { phase_ = std::move(fn); }

  void add_agent(NodeId n) { agents_.try_emplace(n); }

  std::string backend_host(NodeId cc) const { return fmt::format("netmon-{}.{}", directory_.name(cc), dns::kDomain); }

  // Hosts the backend at `cc` and publishes it for agents to discover.
  void host_backend(NodeId cc) {
    backend_node_ = cc;
    auto instance = fmt::format("netmon-{}.{}.{}", directory_.name(cc), kNetmonService, dns::kDomain);
    dns_.register_record(cc, {fmt::format("{}.{}", kNetmonService, dns::kDomain), dns::RrType::PTR, 0, instance, cc});
    dns_.register_record(cc, {instance, dns::RrType::SRV, 0, dns::srv_rdata({0, 0, 8080, backend_host(cc)}), cc});
  }

  std::optional<NodeId> backend_node() const { return backend_node_; }

  void start(NodeId n) {
    auto& a = agent(n);
    a.running = true;
    ++a.epoch;
    schedule_scan(n, a.epoch, 0);
    schedule_link_stats(n, a.epoch, 0);
    if (!a.backend) discover(n, a.epoch);
  }

  // The cache survives; timers stop.
  void stop(NodeId n) {
    auto& a = agent(n);
    a.running = false;
    ++a.epoch;
    a.next_send = 0;
    a.timer_armed = false;
  }

  // Sweeps every address of every environment subnet. Returns the
  // DeviceSeen samples of this sweep.
  std::vector<MonitorSample> agent_scan(NodeId n) {
    auto& a = agent(n);
    std::vector<MonitorSample> seen_now;
    std::set<std::pair<VlanType, std::string>> responded;
    auto envs = scan_ ? scan_(n) : std::vector<ScanEnvironment>{};
    for (const auto& env : envs) {
      a.probes += env.subnet.host_count();
      for (const auto& d : env.devices) {
        if (!env.subnet.contains(d.address)) continue;
        responded.insert({env.vlan, d.device});
        a.services[d.device] = d.services;
        seen_now.push_back(
            emit(n, SampleKind::DeviceSeen, env.vlan,
                 {{"device", d.device}, {"address", overlay::ip_to_string(d.address)}}));
      }
    }
    for (auto it = a.seen.begin(); it != a.seen.end();) {
      if (responded.count(*it) == 0) {
        emit(n, SampleKind::DeviceUnreachable, it->first, {{"device", it->second}});
        it = a.seen.erase(it);
      } else {
        ++it;
      }
    }
    for (const auto& key : responded) a.seen.insert(key);
    for (const auto& [vlan, dev] : responded) probe_ports(n, dev);
    return seen_now;
  }

  // Open ports are the device's declared services intersected with the
  // probe list. Unseen devices are skipped with a warning.
  std::optional<MonitorSample> probe_ports(NodeId n, const std::string& device) {
    auto& a = agent(n);
    std::optional<VlanType> vlan;
    for (const auto& [v, d] : a.seen) {
      if (d == device) vlan = v;
    }
    if (!vlan) {
      engine_.log().append(engine_.now(), "netmon_warning",
                           {{"node", n.value}, {"reason", "probe_unseen_device"}, {"device", device}});
      return std::nullopt;
    }
    auto services = a.services[device];
    std::sort(services.begin(), services.end());
    std::vector<std::uint16_t> open;
    std::set_intersection(services.begin(), services.end(), config_.probe_ports.begin(), config_.probe_ports.end(),
                          std::back_inserter(open));
    open.erase(std::unique(open.begin(), open.end()), open.end());
    return emit(n, SampleKind::PortProbe, *vlan, {{"device", device}, {"open", open}});
  }

  // Records an IDS-style event and raises the matching alert. Repeats of an
  // active alert within the dedup window are absorbed.
  std::optional<MonitorSample> ingest_ids_event(NodeId n, std::string_view kind, std::string_view subject,
                                                VlanType vlan = VlanType::Management,
                                                nlohmann::json detail = nlohmann::json::object()) {
    auto& a = agent(n);
    auto id = alert_id(n, kind, subject);
    if (auto it = a.active_alerts.find(id);
        it != a.active_alerts.end() && engine_.now() - it->second < config_.dedup_window_ms) {
      ++a.deduplicated;
      return std::nullopt;
    }
    a.active_alerts[id] = engine_.now();
    return emit(n, SampleKind::IdsEvent, vlan,
                {{"action", "raise"},
                 {"alert_id", id},
                 {"kind", kind},
                 {"severity", std::string(to_string(severity_for(kind)))},
                 {"subject", subject},
                 {"detail", std::move(detail)}});
  }

  std::optional<MonitorSample> clear_alert(NodeId n, std::string_view kind, std::string_view subject,
                                           VlanType vlan = VlanType::Management) {
    auto& a = agent(n);
    auto id = alert_id(n, kind, subject);
    if (a.active_alerts.erase(id) == 0) return std::nullopt;
    return emit(n, SampleKind::IdsEvent, vlan, {{"action", "clear"}, {"alert_id", id}, {"kind", kind}, {"subject", subject}});
  }

  // Stamps and queues a sample, then tries to stream it.
  MonitorSample emit(NodeId n, SampleKind kind, VlanType vlan, nlohmann::json payload) {
    auto& a = agent(n);
    MonitorSample s{n, engine_.now(), ++a.seq, kind, vlan, std::move(payload)};
    ++a.generated;
    bool overflow = a.cache.size() >= config_.cache_capacity;
    std::optional<MonitorSample> requeue;
    if (overflow) {
      // The overflow alert is never the one evicted: it is lifted out and
      // requeued behind the new sample, keeping its original timestamp.
      if (a.overflow_seq && a.cache.front().seq == *a.overflow_seq) {
        requeue = a.cache.front();
        a.cache.pop_front();
        if (a.next_send > 0) --a.next_send;
      }
      if (!a.cache.empty()) {
        a.cache.pop_front();
        if (a.next_send > 0) --a.next_send;
        ++a.dropped;
      }
    }
    a.cache.push_back(s);
    if (requeue) {
      requeue->seq = ++a.seq;
      a.overflow_seq = requeue->seq;
      a.cache.push_back(*requeue);
    }
    if (overflow && !a.overflowing) {
      a.overflowing = true;
      // The overflow alert itself is exempt from the capacity bound.
      auto id = alert_id(n, "cache_overflow", directory_.name(n));
      a.active_alerts[id] = engine_.now();
      MonitorSample alert{n,
                          engine_.now(),
                          ++a.seq,
                          SampleKind::IdsEvent,
                          VlanType::Management,
                          {{"action", "raise"},
                           {"alert_id", id},
                           {"kind", "cache_overflow"},
                           {"severity", "warning"},
                           {"subject", directory_.name(n)},
                           {"detail", {{"capacity", config_.cache_capacity}}}}};
      ++a.generated;
      a.overflow_seq = alert.seq;
      a.cache.push_back(alert);
      engine_.log().append(engine_.now(), "netmon_cache_overflow", {{"node", n.value}});
    }
    pump(n);
    return s;
  }

  // Cuts the agent off from the backend for `duration` (0 = until healed).
  void partition(NodeId n, SimTime duration) {
    auto& a = agent(n);
    a.partitioned = true;
    ++a.partition_epoch;
    engine_.log().append(engine_.now(), "agent_partition", {{"node", n.value}, {"duration_ms", duration}});
    if (duration > 0) {
      engine_.schedule_after(duration, [this, n, pe = a.partition_epoch]() {
        if (agent(n).partition_epoch == pe) heal(n);
      });
    }
  }

  void heal(NodeId n) {
    auto& a = agent(n);
    if (!a.partitioned) return;
    a.partitioned = false;
    a.next_send = 0;
    engine_.log().append(engine_.now(), "agent_heal", {{"node", n.value}, {"cached", a.cache.size()}});
    pump(n);
  }

  // Connectivity may have returned; resume streaming.
  void routes_changed(NodeId n) {
    if (agents_.count(n) != 0) pump(n);
  }

  struct AgentStats {
    std::uint64_t generated{0};
    std::uint64_t dropped{0};
    std::uint64_t deduplicated{0};
    std::uint64_t probes{0};
    std::size_t cached{0};
  };

  AgentStats stats(NodeId n) const {
    const auto& a = agents_.at(n);
    return {a.generated, a.dropped, a.deduplicated, a.probes, a.cache.size()};
  }

  const std::deque<MonitorSample>& cache(NodeId n) const { return agents_.at(n).cache; }
  std::optional<NodeId> discovered_backend(NodeId n) const { return agents_.at(n).backend; }

  std::vector<NodeId> agents() const {
    std::vector<NodeId> out;
    for (const auto& [id, _] : agents_) out.push_back(id);
    return out;
  }

 private:
  struct Agent {
    bool running{false};
    std::uint64_t epoch{0};
    std::uint64_t seq{0};
    std::deque<MonitorSample> cache;
    std::size_t next_send{0};
    bool timer_armed{false};
    bool partitioned{false};
    std::uint64_t partition_epoch{0};
    bool overflowing{false};
    std::optional<std::uint64_t> overflow_seq;
    std::optional<NodeId> backend;
    std::set<std::pair<VlanType, std::string>> seen;
    std::map<std::string, std::vector<std::uint16_t>> services;
    std::map<std::string, SimTime> active_alerts;
    std::uint64_t generated{0};
    std::uint64_t dropped{0};
    std::uint64_t deduplicated{0};
    std::uint64_t probes{0};
  };

  Agent& agent(NodeId n) {
    auto it = agents_.find(n);
    if (it == agents_.end()) throw Error(Errc::UnknownNode, fmt::format("netmon agent {}", n));
    return it->second;
  }

  static std::string alert_id(NodeId n, std::string_view kind, std::string_view subject) {
    return fmt::format("{}:{}:{}", kind, n.value, subject);
  }

  void discover(NodeId n, std::uint64_t epoch) {
    dns_.discover_service(n, kNetmonService, [this, n, epoch](const std::vector<dns::ServiceTarget>& found) {
      auto& a = agent(n);
      if (!a.running || a.epoch != epoch || a.backend) return;
      for (const auto& t : found) {
        std::string prefix = "netmon-";
        std::string suffix = fmt::format(".{}", dns::kDomain);
        if (t.target.rfind(prefix, 0) != 0 || t.target.size() <= prefix.size() + suffix.size()) continue;
        auto name = t.target.substr(prefix.size(), t.target.size() - prefix.size() - suffix.size());
        if (auto id = directory_.find(name)) {
          a.backend = *id;
          engine_.log().append(engine_.now(), "netmon_backend_discovered", {{"node", n.value}, {"backend", id->value}});
          pump(n);
          return;
        }
      }
      engine_.schedule_after(config_.scan_interval_ms, [this, n, epoch]() {
        auto& ag = agent(n);
        if (ag.running && ag.epoch == epoch && !ag.backend) discover(n, epoch);
      });
    });
  }

  void schedule_scan(NodeId n, std::uint64_t epoch, SimTime delay) {
    engine_.schedule_after(delay, [this, n, epoch]() {
      auto& a = agent(n);
      if (!a.running || a.epoch != epoch) return;
      agent_scan(n);
      schedule_scan(n, epoch, config_.scan_interval_ms);
    });
  }

  void schedule_link_stats(NodeId n, std::uint64_t epoch, SimTime delay) {
    engine_.schedule_after(delay, [this, n, epoch]() {
      auto& a = agent(n);
      if (!a.running || a.epoch != epoch) return;
      int phase = phase_ ? phase_(n) : 0;
      for (auto id : medium_.links_of(n)) {
        const auto& l = medium_.link(id);
        emit(n, SampleKind::LinkStat, VlanType::Management,
             {{"link", id},
              {"peer", l.peer_of(n).value},
              {"up", medium_.usable(id)},
              {"kind", l.kind == sim::LinkKind::Mesh ? "mesh" : "control"},
              {"bandwidth_kbps", l.bandwidth_kbps},
              {"latency_ms", l.latency_ms},
              {"phase", phase}});
      }
      schedule_link_stats(n, epoch, config_.link_stat_interval_ms);
    });
  }

  bool connected(NodeId n, const Agent& a) const {
    return a.running && !a.partitioned && a.backend && mesh_.powered(n) && mesh_.reachable(n, *a.backend);
  }

  void pump(NodeId n) {
    auto& a = agent(n);
    if (!connected(n, a)) return;
    while (a.next_send < a.cache.size() && a.next_send < config_.window) {
      const auto& s = a.cache[a.next_send];
      ByteWriter w;
      w.u64(a.cache.front().seq);
      write_sample(w, s);
      if (!mesh_.send_unicast(n, *a.backend, mesh::AppKind::NetmonSample, std::move(w).take())) break;
      ++a.next_send;
    }
    if (a.next_send > 0 && !a.timer_armed) arm_retransmit(n);
  }

  void arm_retransmit(NodeId n) {
    auto& a = agent(n);
    a.timer_armed = true;
    auto front = a.cache.empty() ? 0 : a.cache.front().seq;
    engine_.schedule_after(config_.retransmit_ms, [this, n, epoch = a.epoch, front]() {
      auto& ag = agent(n);
      if (ag.epoch != epoch) return;
      ag.timer_armed = false;
      if (ag.cache.empty()) return;
      if (ag.cache.front().seq == front) ag.next_send = 0;
      pump(n);
    });
  }

  void on_sample(NodeId at, NodeId origin, const Bytes& data) {
    if (!backend_node_ || at != *backend_node_) return;
    ByteReader r(data);
    auto floor = r.u64();
    auto s = read_sample(r);
    auto& next = expected_[origin];
    if (floor > next) next = floor;
    if (s.seq == next) {
      backend_.accept(s);
      ++next;
    }
    ByteWriter w;
    w.u64(next);
    mesh_.send_unicast(at, origin, mesh::AppKind::NetmonAck, std::move(w).take());
  }

  void on_ack(NodeId at, const Bytes& data) {
    auto it = agents_.find(at);
    if (it == agents_.end()) return;
    auto& a = it->second;
    ByteReader r(data);
    auto next = r.u64();
    bool progressed = false;
    while (!a.cache.empty() && a.cache.front().seq < next) {
      a.cache.pop_front();
      if (a.next_send > 0) --a.next_send;
      progressed = true;
    }
    if (a.cache.empty() && a.overflowing) {
      a.overflowing = false;
      a.overflow_seq.reset();
      clear_alert(at, "cache_overflow", directory_.name(at));
    }
    if (progressed) pump(at);
  }

  sim::Engine& engine_;
  const sim::Medium& medium_;
  mesh::Mesh& mesh_;
  dns::DnsService& dns_;
  const NodeDirectory& directory_;
  Backend& backend_;
  NetmonConfig config_;
  ScanFn scan_;
  PhaseFn phase_;
  std::map<NodeId, Agent> agents_;
  std::optional<NodeId> backend_node_;
  std::map<NodeId, std::uint64_t> expected_;
};

}  // namespace phoenix::netmon
