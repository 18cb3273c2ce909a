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

#include <random>

#include <gtest/gtest.h>

#include "phoenix/harness/report.hpp"

using namespace phoenix;
using namespace phoenix::netmon;
using harness::Network;

namespace {

std::unique_ptr<Network> bundled_world(nlohmann::json config = nlohmann::json::object()) {
  auto j = nlohmann::json::parse(harness::read_file(std::string(PHOENIX_SOURCE_DIR) + "/scenarios/two-utility-basic.json"));
  nlohmann::json keep = nlohmann::json::array();
  for (const auto& e : j["events"]) {
    if (e["kind"] == "ConfigApply" || e["kind"] == "DeviceAttach") keep.push_back(e);
  }
  j["events"] = keep;
  j["config"] = std::move(config);
  auto net = Network::from_scenario(harness::parse_scenario(j));
  net->run_until(20'000);
  return net;
}

// Last-writer view of a sample log, computed per key instead of by folding
// in order: for each link, device field and alert, find the greatest sample
// (time, agent, seq) at or before `at` that writes it.
struct Expected {
  std::map<std::uint64_t, bool> link_up;
  std::map<std::pair<NodeId, std::string>, bool> reachable;
  std::map<std::pair<NodeId, std::string>, SimTime> last_seen;
  std::map<std::pair<NodeId, std::string>, std::vector<std::uint16_t>> ports;
  std::set<std::string> active_alerts;
  std::map<NodeId, std::uint64_t> per_agent;
};

Expected expected_state(const std::vector<MonitorSample>& log, SimTime at) {
  using Key = std::tuple<SimTime, NodeId, std::uint64_t>;
  auto key = [](const MonitorSample& m) { return Key{m.at, m.agent, m.seq}; };
  Expected e;
  std::map<std::uint64_t, Key> link_key;
  std::map<std::pair<NodeId, std::string>, Key> reach_key;
  std::map<std::pair<NodeId, std::string>, Key> port_key;
  std::map<std::string, std::vector<std::pair<Key, std::string>>> alert_actions;
  for (const auto& m : log) {
    if (m.at > at) continue;
    ++e.per_agent[m.agent];
    auto k = key(m);
    switch (m.kind) {
      case SampleKind::LinkStat: {
        auto id = m.payload["link"].get<std::uint64_t>();
        if (link_key.count(id) == 0 || link_key[id] < k) {
          link_key[id] = k;
          e.link_up[id] = m.payload["up"].get<bool>();
        }
        break;
      }
      case SampleKind::DeviceSeen:
      case SampleKind::DeviceUnreachable: {
        std::pair<NodeId, std::string> dk{m.agent, m.payload["device"].get<std::string>()};
        if (reach_key.count(dk) == 0 || reach_key[dk] < k) {
          reach_key[dk] = k;
          e.reachable[dk] = m.kind == SampleKind::DeviceSeen;
        }
        if (m.kind == SampleKind::DeviceSeen) e.last_seen[dk] = std::max(e.last_seen[dk], m.at);
        break;
      }
      case SampleKind::PortProbe: {
        std::pair<NodeId, std::string> dk{m.agent, m.payload["device"].get<std::string>()};
        if (port_key.count(dk) == 0 || port_key[dk] < k) {
          port_key[dk] = k;
          e.ports[dk] = m.payload["open"].get<std::vector<std::uint16_t>>();
        }
        break;
      }
      case SampleKind::IdsEvent:
        alert_actions[m.payload["alert_id"].get<std::string>()].push_back({k, m.payload["action"].get<std::string>()});
        break;
    }
  }
  for (auto& [id, acts] : alert_actions) {
    std::sort(acts.begin(), acts.end());
    std::string last;
    for (const auto& [_, a] : acts) {
      if (a == "raise" || a == "clear") last = a;
    }
    if (last == "raise") e.active_alerts.insert(id);
  }
  return e;
}

void expect_matches(const NetworkSnapshot& s, const Expected& e) {
  std::map<std::uint64_t, bool> links;
  for (const auto& [id, l] : s.links) links[id] = l.up;
  EXPECT_EQ(links, e.link_up);
  std::map<std::pair<NodeId, std::string>, bool> reach;
  std::map<std::pair<NodeId, std::string>, SimTime> seen;
  std::map<std::pair<NodeId, std::string>, std::vector<std::uint16_t>> ports;
  for (const auto& [node, devs] : s.devices) {
    for (const auto& [name, d] : devs) {
      if (e.reachable.count({node, name}) != 0) reach[{node, name}] = d.reachable;
      if (e.last_seen.count({node, name}) != 0) seen[{node, name}] = d.last_seen;
      if (e.ports.count({node, name}) != 0) ports[{node, name}] = d.open_ports;
    }
  }
  EXPECT_EQ(reach, e.reachable);
  EXPECT_EQ(seen, e.last_seen);
  EXPECT_EQ(ports, e.ports);
  std::set<std::string> active;
  for (const auto& a : s.active_alerts()) active.insert(a.id);
  EXPECT_EQ(active, e.active_alerts);
  std::map<NodeId, std::uint64_t> per_agent;
  for (const auto& [id, n] : s.nodes) per_agent[id] = n.samples;
  EXPECT_EQ(per_agent, e.per_agent);
}

std::vector<MonitorSample> random_log(std::mt19937_64& rng, int count) {
  std::vector<MonitorSample> out;
  std::map<NodeId, std::uint64_t> seq;
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  for (int i = 0; i < count; ++i) {
    MonitorSample m;
    m.agent = NodeId{static_cast<std::uint64_t>(pick(1, 4))};
    m.at = pick(0, 50) * 100;  // coarse times force ties
    m.seq = ++seq[m.agent];
    m.kind = static_cast<SampleKind>(pick(0, 4));
    m.vlan = static_cast<VlanType>(pick(0, 3));
    auto dev = fmt::format("d{}", pick(0, 3));
    switch (m.kind) {
      case SampleKind::LinkStat:
        m.payload = {{"link", pick(0, 5)}, {"peer", pick(1, 4)}, {"up", pick(0, 1) == 1}};
        break;
      case SampleKind::DeviceSeen: m.payload = {{"device", dev}, {"address", "10.0.0.9"}}; break;
      case SampleKind::DeviceUnreachable: m.payload = {{"device", dev}}; break;
      case SampleKind::PortProbe: {
        std::vector<std::uint16_t> open;
        for (std::uint16_t p : {22, 80, 502}) {
          if (pick(0, 1) == 1) open.push_back(p);
        }
        m.payload = {{"device", dev}, {"open", open}};
        break;
      }
      case SampleKind::IdsEvent:
        m.payload = {{"action", pick(0, 2) == 0 ? "clear" : "raise"},
                     {"alert_id", fmt::format("a{}", pick(0, 3))},
                     {"kind", "port_scan"},
                     {"subject", dev}};
        break;
    }
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

TEST(Samples, WireAndJsonRoundTrip) {
  MonitorSample s{NodeId{4}, 1234, 9, SampleKind::PortProbe, VlanType::Scada, {{"device", "rtu"}, {"open", {502}}}};
  ByteWriter w;
  write_sample(w, s);
  auto bytes = std::move(w).take();
  ByteReader r(bytes);
  EXPECT_EQ(read_sample(r), s);
  nlohmann::json j = s;
  EXPECT_EQ(j.get<MonitorSample>(), s);
  bytes[8 + 8 + 8] = 9;  // kind byte out of range
  ByteReader bad(bytes);
  EXPECT_THROW(read_sample(bad), Error);
  EXPECT_THROW(parse_sample_kind("Heartbeat"), Error);
}

TEST(Fold, MatchesLastWriterOracleOnRandomLogs) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto log = random_log(rng, 60);
    Backend b;
    // Arrival order differs from stamp order; the fold must not care.
    auto shuffled = log;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (const auto& m : shuffled) b.accept(m);
    for (SimTime t : {SimTime{-1}, SimTime{0}, SimTime{1234}, SimTime{2500}, SimTime{5000}}) {
      auto snap = b.query_state(t);
      EXPECT_EQ(snap.as_of, t);
      expect_matches(snap, expected_state(log, t));
    }
  }
}

TEST(Fold, AlertLifecycle) {
  Backend b;
  auto ids = [](std::string action, SimTime at, std::uint64_t seq) {
    return MonitorSample{NodeId{1}, at, seq, SampleKind::IdsEvent, VlanType::Management,
                         {{"action", action}, {"alert_id", "x"}, {"kind", "compromise"}, {"subject", "d"}}};
  };
  b.accept(ids("raise", 100, 1));
  b.accept(ids("raise", 150, 2));
  b.accept(ids("clear", 200, 3));
  auto before = b.alerts(120);
  ASSERT_EQ(before.size(), 1u);
  EXPECT_TRUE(before[0].active());
  EXPECT_EQ(before[0].severity, Severity::Critical);
  EXPECT_EQ(before[0].raised_at, 100);
  auto after = b.alerts(300);
  ASSERT_EQ(after.size(), 1u);
  EXPECT_EQ(after[0].cleared_at, 200);
  EXPECT_TRUE(b.query_state(300).active_alerts().empty());
}

TEST(Backend, SubscribersSeeEveryAcceptedSample) {
  Backend b;
  std::vector<std::uint64_t> seen;
  int sub = b.subscribe([&](const MonitorSample& s) { seen.push_back(s.seq); });
  for (std::uint64_t i = 1; i <= 5; ++i) b.accept({NodeId{1}, 0, i, SampleKind::IdsEvent, VlanType::It, {}});
  b.unsubscribe(sub);
  b.accept({NodeId{1}, 0, 6, SampleKind::IdsEvent, VlanType::It, {}});
  EXPECT_EQ(seen, (std::vector<std::uint64_t>{1, 2, 3, 4, 5}));
  EXPECT_EQ(b.size(), 6u);
  EXPECT_EQ(b.samples(VlanType::It).size(), 6u);
  EXPECT_EQ(b.count_for(NodeId{1}), 6u);
}

TEST(Netmon, PartitionCatchUpLosesNothing) {
  auto net = bundled_world();
  auto n = net->id("phx22");
  ASSERT_TRUE(net->netmon().discovered_backend(n).has_value());
  net->run_until(21'000);
  auto t0 = net->now();
  net->netmon().partition(n, 60'000);
  std::vector<SimTime> stamps;
  for (int k = 0; k < 60; ++k) {
    net->engine().schedule_at(t0 + 500 + k * 1000, [&net, n, &stamps, k]() {
      auto s = net->netmon().emit(n, SampleKind::IdsEvent, VlanType::Management,
                                  {{"action", "tick"}, {"alert_id", "tick"}, {"k", k}});
      stamps.push_back(s.at);
    });
  }
  net->run_until(t0 + 59'999);
  auto during = net->backend().samples_of(n);
  for (const auto& s : during) EXPECT_NE(s.payload.value("action", ""), "tick");
  net->run_until(t0 + 90'000);

  std::vector<SimTime> got;
  for (const auto& s : net->backend().samples_of(n)) {
    if (s.payload.value("action", "") == "tick") got.push_back(s.at);
  }
  EXPECT_EQ(got, stamps);
  ASSERT_EQ(got.size(), 60u);
  // Sequence numbers arrive without gaps or repeats.
  auto all = net->backend().samples_of(n);
  for (std::size_t i = 0; i < all.size(); ++i) EXPECT_EQ(all[i].seq, i + 1);
  auto st = net->netmon().stats(n);
  EXPECT_EQ(st.dropped, 0u);
  EXPECT_EQ(st.cached, 0u);
  EXPECT_EQ(net->backend().count_for(n), st.generated);
}

TEST(Netmon, QueryStateMatchesOracleOnLiveRun) {
  auto net = bundled_world();
  net->submit({0, sim::EventKind::AgentPartition, {{"node", "phx31"}, {"duration_ms", 25'000}}});
  net->submit({0, sim::EventKind::IdsEvent, {{"node", "phx31"}, {"alert", "port_scan"}, {"subject", "rtu-s1"}}});
  net->run_until(40'000);
  net->submit({0, sim::EventKind::DeviceDetach, {{"device", "rtu-n2"}}});
  net->submit({0, sim::EventKind::LinkDown, {{"a", "phx31"}, {"b", "phx32"}}});
  net->run_until(90'000);
  auto log = net->backend().samples();
  for (SimTime t = 0; t <= 90'000; t += 7'500) expect_matches(net->backend().query_state(t), expected_state(log, t));
}

TEST(Netmon, CacheOverflowIsAccountedAndAlerted) {
  auto net = bundled_world({{"netmon", {{"cache_capacity", 20}}}});
  auto n = net->id("phx23");
  net->netmon().partition(n, 0);
  for (int k = 0; k < 50; ++k) {
    net->netmon().emit(n, SampleKind::IdsEvent, VlanType::Management, {{"action", "tick"}, {"alert_id", "t"}});
  }
  auto st = net->netmon().stats(n);
  EXPECT_GE(st.dropped, 30u);
  EXPECT_EQ(st.cached, 21u);  // capacity plus the exempt overflow alert
  EXPECT_FALSE(net->engine().log().of_kind("netmon_cache_overflow").empty());
  net->netmon().heal(n);
  net->run_until(net->now() + 20'000);
  st = net->netmon().stats(n);
  // Accounting: everything generated was either stored or dropped.
  EXPECT_EQ(net->backend().count_for(n) + st.dropped, st.generated);
  auto alerts = net->backend().alerts(net->now());
  auto it = std::find_if(alerts.begin(), alerts.end(), [](const Alert& a) { return a.kind == "cache_overflow"; });
  ASSERT_NE(it, alerts.end());
  EXPECT_FALSE(it->active());
}

TEST(Netmon, IdsEventsDeduplicateWithinWindow) {
  auto net = bundled_world();
  auto n = net->id("phx21");
  EXPECT_TRUE(net->netmon().ingest_ids_event(n, "port_scan", "rtu-n1").has_value());
  net->run_until(net->now() + 5000);
  EXPECT_FALSE(net->netmon().ingest_ids_event(n, "port_scan", "rtu-n1").has_value());
  EXPECT_TRUE(net->netmon().ingest_ids_event(n, "port_scan", "hmi-n1").has_value());
  net->run_until(net->now() + 30'000);
  EXPECT_TRUE(net->netmon().ingest_ids_event(n, "port_scan", "rtu-n1").has_value());
  EXPECT_EQ(net->netmon().stats(n).deduplicated, 1u);
}

TEST(Netmon, ScanAndProbeReflectAttachedDevices) {
  auto net = bundled_world();
  auto n = net->id("phx21");
  net->run_until(40'000);
  auto snap = net->backend().query_state(net->now());
  const auto& devs = snap.devices.at(n);
  ASSERT_EQ(devs.count("rtu-n1"), 1u);
  EXPECT_TRUE(devs.at("rtu-n1").reachable);
  EXPECT_EQ(devs.at("rtu-n1").vlan, VlanType::Scada);
  // Declared services {502, 20000} against the default probe list.
  EXPECT_EQ(devs.at("rtu-n1").open_ports, (std::vector<std::uint16_t>{502, 20000}));
  EXPECT_EQ(devs.at("hmi-n1").open_ports, (std::vector<std::uint16_t>{22, 443}));

  net->submit({0, sim::EventKind::DeviceDetach, {{"device", "rtu-n1"}}});
  net->run_until(net->now() + 15'000);
  snap = net->backend().query_state(net->now());
  EXPECT_FALSE(snap.devices.at(n).at("rtu-n1").reachable);
  EXPECT_FALSE(net->netmon().probe_ports(n, "rtu-n1").has_value());
  EXPECT_FALSE(net->engine().log().of_kind("netmon_warning").empty());
}

TEST(Netmon, SnapshotJsonIsDeterministic) {
  auto a = bundled_world();
  auto b = bundled_world();
  a->run_until(30'000);
  b->run_until(30'000);
  EXPECT_EQ(to_json(a->backend().query_state(25'000)).dump(), to_json(b->backend().query_state(25'000)).dump());
}
