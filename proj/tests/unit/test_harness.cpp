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

#include <deque>
#include <random>

#include <gtest/gtest.h>

#include "phoenix/harness/random_scenario.hpp"
#include "phoenix/harness/report.hpp"

using namespace phoenix;
using namespace phoenix::harness;

namespace {

std::string scenario_path(const char* name) { return std::string(PHOENIX_SOURCE_DIR) + "/scenarios/" + name; }

std::string error_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

// Phase a node should be in, computed from the declared world alone: link
// states, power and configuration, with connectivity found by BFS.
int oracle_phase(const Network& net, NodeId n) {
  const auto& medium = net.medium();
  auto powered = [&](NodeId x) { return net.mesh().powered(x); };
  if (!powered(n)) return 1;
  std::map<NodeId, std::set<NodeId>> adj;
  bool control = false;
  for (const auto& l : medium.links()) {
    if (!l.up || !powered(l.endpoint_a) || !powered(l.endpoint_b)) continue;
    if (l.kind == sim::LinkKind::Control) {
      if ((l.endpoint_a == n && net.control_centers().count(l.endpoint_b)) ||
          (l.endpoint_b == n && net.control_centers().count(l.endpoint_a))) {
        control = true;
      }
      continue;
    }
    adj[l.endpoint_a].insert(l.endpoint_b);
    adj[l.endpoint_b].insert(l.endpoint_a);
  }
  if (adj[n].empty()) return control ? 2 : 1;
  const auto& cfg = net.node(n).config;
  if (!cfg) return 3;
  std::set<NodeId> comp{n};
  std::deque<NodeId> q{n};
  while (!q.empty()) {
    auto x = q.front();
    q.pop_front();
    for (auto y : adj[x]) {
      if (comp.insert(y).second) q.push_back(y);
    }
  }
  std::set<int> reached;
  for (auto x : comp) {
    const auto& c = net.node(x).config;
    if (c && c->utility == cfg->utility && c->substation != cfg->substation) reached.insert(c->substation);
  }
  auto total = net.model()->utilities[cfg->utility_index].substations;
  return static_cast<int>(reached.size()) == static_cast<int>(total) - 1 ? 4 : 3;
}

// Bundled topology with every link starting down and no events.
Scenario dark_world() {
  auto s = load_scenario(scenario_path("two-utility-basic.json"));
  s.events.clear();
  for (auto& l : s.links) l.up = false;
  return s;
}

}  // namespace

TEST(Scenario, DiagnosticsAreCollected) {
  auto msg = error_message([] {
    parse_scenario_text(R"({"duration_ms": -5,
      "nodes": [{"name": "a"}, {"name": "a"}],
      "links": [{"a": "a", "b": "zz", "loss_rate": 2}],
      "events": [{"at": 10, "kind": "Teleport"}, {"kind": "LinkUp", "a": "a", "b": "q"}]})");
  });
  for (const auto* want : {"duration_ms", "duplicate node name 'a'", "unknown node 'zz'", "loss_rate",
                           "unknown event kind 'Teleport'", "events[1].at", "unknown node 'q'"}) {
    EXPECT_NE(msg.find(want), std::string::npos) << want << " missing from: " << msg;
  }
  auto pos = error_message([] { parse_scenario_text("{\n  \"name\": \"x\",\n  oops\n}"); });
  EXPECT_NE(pos.find("line 3"), std::string::npos) << pos;
  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), Error);
}

TEST(Scenario, JsonRoundTrip) {
  auto s = load_scenario(scenario_path("adversarial.json"));
  auto again = parse_scenario(to_json(s));
  EXPECT_EQ(to_json(again), to_json(s));
  ASSERT_EQ(again.events.size(), s.events.size());
  for (std::size_t i = 1; i < again.events.size(); ++i) EXPECT_LE(again.events[i - 1].at, again.events[i].at);
}

TEST(Harness, BundledScenariosPassEveryAudit) {
  for (const auto* name : {"two-utility-basic.json", "adversarial.json"}) {
    auto out = run_scenario(load_scenario(scenario_path(name)));
    EXPECT_TRUE(out.report.passed()) << out.report.to_text();
    EXPECT_EQ(out.report.exit_code(), 0);
    EXPECT_EQ(out.report.audits.size(), 16u);
    EXPECT_GT(out.report.counters.at("deliveries"), 0u);
    EXPECT_GT(out.report.counters.at("backend_samples"), 0u);
  }
}

TEST(Harness, BundledScenarioOutcomes) {
  auto out = run_scenario(load_scenario(scenario_path("two-utility-basic.json")));
  auto& net = *out.network;
  const auto& calls = net.voip().calls();
  std::map<std::string, voip::CallOutcome> by_number;
  for (const auto& c : calls) by_number[c.callee_number] = c.outcome;
  EXPECT_EQ(by_number.at("4822"), voip::CallOutcome::Connected);
  EXPECT_EQ(by_number.at("0101"), voip::CallOutcome::Connected);
  EXPECT_EQ(by_number.at("9999"), voip::CallOutcome::NotFound);
  // Cross-utility and cross-VLAN attempts never reach their targets.
  for (const auto* r : net.engine().log().of_kind("device_deliver")) {
    EXPECT_NE(r->data["device"], "rtu-s1") << r->data.dump();
    if (r->data["src_device"] == "hmi-n1") {
      EXPECT_NE(r->data["device"], "rtu-n2");
    }
  }
  // Quarantine: alert cleared, later frame dropped at the source.
  bool dropped = false;
  for (const auto* r : net.engine().log().of_kind("frame_drop")) {
    if (r->data.value("reason", "") == "quarantined" && r->data["device"] == "ws-n3") dropped = true;
  }
  EXPECT_TRUE(dropped);
  auto alerts = net.backend().alerts(net.now());
  auto it = std::find_if(alerts.begin(), alerts.end(), [](const auto& a) { return a.kind == "compromise"; });
  ASSERT_NE(it, alerts.end());
  EXPECT_EQ(it->cleared_at, 36'000);
  // Every configured node reaches phase 4 once the mesh has formed.
  for (const auto& [id, rt] : net.nodes()) {
    if (rt.config) {
      EXPECT_EQ(net.phase(id), 4) << rt.spec.name;
    }
  }
}

TEST(Harness, DeterministicDigests) {
  auto s = load_scenario(scenario_path("adversarial.json"));
  auto a = run_scenario(s);
  auto b = run_scenario(s);
  EXPECT_EQ(a.report.digest, b.report.digest);
  EXPECT_EQ(a.network->engine().log().to_ndjson(), b.network->engine().log().to_ndjson());
  auto r1 = random_scenario(11, {.loss_rate = 0.1});
  auto x = run_scenario(r1, std::nullopt, 1);
  auto y = run_scenario(r1, std::nullopt, 1);
  auto z = run_scenario(r1, std::nullopt, 2);
  EXPECT_EQ(x.report.digest, y.report.digest);
  EXPECT_NE(x.report.digest, z.report.digest);  // lossy links draw from the seed
}

TEST(Harness, ReportRoundTrips) {
  auto out = run_scenario(load_scenario(scenario_path("two-utility-basic.json")));
  nlohmann::json j = out.report;
  auto back = nlohmann::json::parse(j.dump()).get<RunReport>();
  EXPECT_EQ(back, out.report);
  auto text = out.report.to_text();
  std::size_t lines = 0;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    auto t = line.find_first_not_of(' ');
    if (t == std::string::npos) continue;
    auto word = line.substr(t, line.find(' ', t) - t);
    if (word == "PASS" || word == "FAIL" || word == "N/A") ++lines;
  }
  EXPECT_EQ(lines, out.report.audits.size());
  EXPECT_NE(text.find("result PASS"), std::string::npos);
}

TEST(Harness, RandomScenariosPassAudits) {
  for (std::uint64_t seed = 1; seed <= 25; ++seed) {
    RandomScenarioOptions o;
    o.link_faults = seed % 3 == 0;
    auto out = run_scenario(random_scenario(seed, o));
    EXPECT_TRUE(out.report.passed()) << "seed " << seed << "\n" << out.report.to_text();
  }
}

TEST(Harness, SubmitStampsCurrentTime) {
  auto net = Network::from_scenario(load_scenario(scenario_path("two-utility-basic.json")));
  net->run_until(27'500);
  auto ack = net->submit({123, sim::EventKind::IdsEvent, {{"node", "phx21"}, {"alert", "probe"}, {"subject", "x"}}});
  EXPECT_TRUE(ack.accepted);
  const auto* last = net->engine().log().of_kind("scenario_event").back();
  EXPECT_EQ(last->at, 27'500);
  EXPECT_EQ(last->data["source"], "api");
  auto bad = net->submit({0, sim::EventKind::DeviceCompromise, {{"device", "nope"}}});
  EXPECT_FALSE(bad.accepted);
  EXPECT_EQ(bad.error, "UnknownDevice");
  EXPECT_EQ(net->engine().log().of_kind("event_rejected").back()->data["error"], "UnknownDevice");
  auto missing = net->submit({0, sim::EventKind::LinkDown, {{"a", "phx21"}}});
  EXPECT_FALSE(missing.accepted);
}

TEST(Phases, MonotoneScriptsNeverDemote) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 12; ++trial) {
    auto s = dark_world();
    std::vector<std::pair<std::string, std::string>> links;
    for (const auto& l : s.links) links.emplace_back(l.a, l.b);
    std::vector<sim::ScenarioEvent> script;
    for (std::size_t i = 0; i < s.links.size(); ++i) {
      script.push_back({0, sim::EventKind::LinkUp, {{"link", i}}});
    }
    const std::vector<std::tuple<std::string, std::string, int>> configs{
        {"phx21", "NorthGrid", 1}, {"phx22", "NorthGrid", 2}, {"phx23", "NorthGrid", 3},
        {"phx31", "SouthPower", 1}, {"phx32", "SouthPower", 2}};
    for (const auto& [node, u, sub] : configs) {
      script.push_back({0, sim::EventKind::ConfigApply, {{"node", node}, {"utility", u}, {"substation", sub}}});
    }
    std::shuffle(script.begin(), script.end(), rng);
    SimTime t = 1000;
    for (auto& e : script) {
      e.at = t;
      t += std::uniform_int_distribution<SimTime>(0, 4000)(rng);
    }
    s.events = script;
    s.duration_ms = t + 30'000;
    auto out = run_scenario(s);
    for (const auto& [id, rt] : out.network->nodes()) {
      for (std::size_t i = 1; i < rt.phase_history.size(); ++i) {
        EXPECT_GE(rt.phase_history[i].second, rt.phase_history[i - 1].second)
            << "trial " << trial << " node " << rt.spec.name << " at " << rt.phase_history[i].first;
      }
      EXPECT_EQ(out.network->phase(id), oracle_phase(*out.network, id)) << rt.spec.name;
      if (rt.config) {
        EXPECT_EQ(out.network->phase(id), 4) << rt.spec.name;
      }
    }
  }
}

TEST(Phases, SettledPhaseMatchesOracleUnderRandomFaults) {
  std::mt19937_64 rng(99);
  auto s = load_scenario(scenario_path("two-utility-basic.json"));
  std::erase_if(s.events, [](const auto& e) { return e.kind != sim::EventKind::ConfigApply; });
  auto net = Network::from_scenario(s);
  net->run_until(20'000);
  for (const auto& [id, _] : net->nodes()) EXPECT_EQ(net->phase(id), oracle_phase(*net, id));
  const auto& links = net->medium().links();
  for (int step = 0; step < 40; ++step) {
    auto l = std::uniform_int_distribution<std::size_t>(0, links.size() - 1)(rng);
    auto kind = std::bernoulli_distribution(0.5)(rng) ? sim::EventKind::LinkUp : sim::EventKind::LinkDown;
    if (std::bernoulli_distribution(0.15)(rng)) {
      auto node = std::uniform_int_distribution<std::uint64_t>(2, 6)(rng);
      auto name = net->directory().name(NodeId{node});
      net->submit({0, net->mesh().powered(NodeId{node}) ? sim::EventKind::NodeLeave : sim::EventKind::NodeJoin,
                   {{"node", name}}});
    } else {
      net->submit({0, kind, {{"link", l}}});
    }
    net->run_until(net->now() + 15'000);
    for (const auto& [id, rt] : net->nodes()) {
      EXPECT_EQ(net->phase(id), oracle_phase(*net, id)) << "step " << step << " node " << rt.spec.name;
    }
  }
  auto report = make_report(*net);
  for (const auto& a : report.audits) EXPECT_NE(a.status, AuditStatus::Fail) << a.name << " " << a.detail;
}

TEST(Phases, PartitionDemotesFourToThree) {
  auto s = load_scenario(scenario_path("two-utility-basic.json"));
  std::erase_if(s.events, [](const auto& e) { return e.kind != sim::EventKind::ConfigApply; });
  s.events.push_back({30'000, sim::EventKind::LinkDown, {{"a", "phx21"}, {"b", "phx22"}}});
  s.events.push_back({30'000, sim::EventKind::LinkDown, {{"a", "phx21"}, {"b", "phx31"}}});
  s.duration_ms = 50'000;
  auto out = run_scenario(s);
  auto& net = *out.network;
  for (const auto* name : {"phx21", "phx22", "phx23"}) {
    auto id = net.id(name);
    EXPECT_EQ(net.phase(id), 3) << name;
    const auto& h = net.node(id).phase_history;
    auto four = std::find_if(h.begin(), h.end(), [](const auto& p) { return p.second == 4; });
    ASSERT_NE(four, h.end()) << name;
    EXPECT_LT(four->first, 30'000);
    EXPECT_EQ(h.back().second, 3);
    EXPECT_GE(h.back().first, 30'000);
  }
  // SouthPower still sees both of its substations.
  EXPECT_EQ(net.phase(net.id("phx31")), 4);
  EXPECT_EQ(net.phase(net.id("phx32")), 4);
  EXPECT_TRUE(out.report.passed()) << out.report.to_text();
}

TEST(Phases, DarkWorldStartsAtOneAndControlGivesTwo) {
  auto s = dark_world();
  s.events.push_back({1000, sim::EventKind::LinkUp, {{"link", 6}}});  // cc-phx21 control
  s.duration_ms = 5000;
  auto out = run_scenario(s);
  auto& net = *out.network;
  EXPECT_EQ(net.phase(net.id("phx21")), 2);
  EXPECT_EQ(net.phase(net.id("phx22")), 1);
  for (const auto& [id, _] : net.nodes()) EXPECT_EQ(net.phase(id), oracle_phase(net, id));
}
