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
#include <random>
#include <string>
#include <vector>

#include "phoenix/harness/scenario.hpp"

namespace phoenix::harness {

struct RandomScenarioOptions {
  int min_nodes{3};
  int max_nodes{12};
  int max_utilities{3};
  SimTime duration_ms{30'000};
  int frames{40};
  int injections{12};
  double loss_rate{0.0};
  bool link_faults{false};
};

// Seeded generator of connected desk-scale scenarios: random model, random
// tree-plus-chords mesh, devices on every configured node, and a mix of
// legitimate, cross-environment and injected traffic.
inline nlohmann::json random_scenario_json(std::uint64_t seed, const RandomScenarioOptions& o = {}) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };

  static const std::vector<std::string> kVlans{"SCADA", "IT", "VoIP"};
  static const std::vector<int> kPorts{22, 80, 443, 502, 5060, 20000};
  static const std::vector<int> kBandwidth{64, 512, 2000, 10000};

  struct Util {
    std::string name;
    int substations;
    std::vector<std::string> vlans;
  };
  std::vector<Util> utils;
  int nutil = pick(1, std::max(1, o.max_utilities));
  for (int u = 0; u < nutil; ++u) {
    Util ut{fmt::format("U{}", u), pick(1, 4), {}};
    for (const auto& v : kVlans) {
      if (chance(0.6)) ut.vlans.push_back(v);
    }
    if (ut.vlans.empty()) ut.vlans.push_back(kVlans[static_cast<std::size_t>(pick(0, 2))]);
    utils.push_back(std::move(ut));
  }
  nlohmann::json model = {{"utilities", nlohmann::json::array()}};
  for (const auto& u : utils) model["utilities"].push_back({{"name", u.name}, {"substations", u.substations}, {"vlans", u.vlans}});

  int n = pick(std::max(2, o.min_nodes), std::max(o.min_nodes, o.max_nodes));
  std::vector<std::string> names{"cc"};
  for (int i = 1; i < n; ++i) names.push_back(fmt::format("n{}", i));
  nlohmann::json nodes = nlohmann::json::array();
  nodes.push_back({{"name", "cc"}, {"control_center", true}});
  for (int i = 1; i < n; ++i) nodes.push_back({{"name", names[static_cast<std::size_t>(i)]}});

  nlohmann::json links = nlohmann::json::array();
  std::set<std::pair<int, int>> edges;
  auto add_link = [&](int a, int b) {
    if (a == b || !edges.insert({std::min(a, b), std::max(a, b)}).second) return;
    links.push_back({{"a", names[static_cast<std::size_t>(a)]},
                     {"b", names[static_cast<std::size_t>(b)]},
                     {"latency_ms", pick(1, 20)},
                     {"bandwidth_kbps", kBandwidth[static_cast<std::size_t>(pick(0, 3))]},
                     {"loss_rate", o.loss_rate}});
  };
  for (int i = 1; i < n; ++i) add_link(i, pick(0, i - 1));
  for (int extra = pick(0, n / 2); extra > 0; --extra) add_link(pick(0, n - 1), pick(0, n - 1));

  // Substation slots handed out to non-CC nodes; the rest stay relays.
  std::vector<std::pair<int, int>> slots;
  for (std::size_t u = 0; u < utils.size(); ++u) {
    for (int s = 1; s <= utils[u].substations; ++s) slots.emplace_back(static_cast<int>(u), s);
  }
  std::shuffle(slots.begin(), slots.end(), rng);

  nlohmann::json events = nlohmann::json::array();
  struct Dev {
    std::string name;
    int node;
  };
  std::vector<Dev> devices;
  std::vector<int> configured;
  int dev_count = 0;
  for (int i = 1; i < n && static_cast<std::size_t>(i - 1) < slots.size(); ++i) {
    auto [u, s] = slots[static_cast<std::size_t>(i - 1)];
    configured.push_back(i);
    const auto& node = names[static_cast<std::size_t>(i)];
    events.push_back({{"at", pick(500, 3000)}, {"kind", "ConfigApply"}, {"node", node}, {"utility", utils[static_cast<std::size_t>(u)].name}, {"substation", s}});
    for (const auto& vlan : utils[static_cast<std::size_t>(u)].vlans) {
      for (int k = pick(0, 2); k > 0; --k) {
        std::vector<int> services;
        for (int p : kPorts) {
          if (chance(0.3)) services.push_back(p);
        }
        auto dname = fmt::format("d{}", dev_count++);
        events.push_back({{"at", pick(4000, 6000)}, {"kind", "DeviceAttach"}, {"node", node}, {"device", dname}, {"vlan", vlan}, {"services", services}});
        devices.push_back({dname, i});
      }
    }
  }

  SimTime t0 = 10'000;
  SimTime t1 = std::max<SimTime>(t0 + 1000, o.duration_ms - 5000);
  auto when = [&]() { return std::uniform_int_distribution<SimTime>(t0, t1)(rng); };
  if (devices.size() >= 1) {
    for (int f = 0; f < o.frames; ++f) {
      const auto& src = devices[static_cast<std::size_t>(pick(0, static_cast<int>(devices.size()) - 1))];
      std::string dst = chance(0.1) ? "*" : devices[static_cast<std::size_t>(pick(0, static_cast<int>(devices.size()) - 1))].name;
      if (dst == src.name) continue;
      events.push_back({{"at", when()}, {"kind", "SendFrame"}, {"from", src.name}, {"to", dst}, {"payload", fmt::format("f{}-{}", seed, f)}});
    }
  }
  if (!configured.empty()) {
    for (int k = 0; k < o.injections; ++k) {
      int from = pick(0, n - 1);
      int to = configured[static_cast<std::size_t>(pick(0, static_cast<int>(configured.size()) - 1))];
      std::uint32_t vni = 0;
      int mode = pick(0, 3);
      if (mode == 0) {
        vni = static_cast<std::uint32_t>(pick(200, 1 << 20));
      } else {
        // A VNI that is, or once was, some utility's environment.
        vni = static_cast<std::uint32_t>(pick(0, static_cast<int>(utils.size()) - 1) * 16 + pick(0, 2) + 1);
      }
      nlohmann::json ev = {{"at", when()}, {"kind", "InjectOverlay"}, {"node", names[static_cast<std::size_t>(from)]}, {"to", names[static_cast<std::size_t>(to)]}, {"vni", vni}, {"payload", fmt::format("inj{}", k)}};
      if (!devices.empty() && chance(0.7)) ev["dst_device"] = devices[static_cast<std::size_t>(pick(0, static_cast<int>(devices.size()) - 1))].name;
      events.push_back(std::move(ev));
    }
  }
  if (o.link_faults && links.size() > 1) {
    for (int k = pick(1, 3); k > 0; --k) {
      const auto& l = links[static_cast<std::size_t>(pick(0, static_cast<int>(links.size()) - 1))];
      auto down = when();
      events.push_back({{"at", down}, {"kind", "LinkDown"}, {"a", l["a"]}, {"b", l["b"]}});
      events.push_back({{"at", down + pick(1000, 8000)}, {"kind", "LinkUp"}, {"a", l["a"]}, {"b", l["b"]}});
    }
  }

  return {{"name", fmt::format("random-{}", seed)},
          {"seed", seed},
          {"duration_ms", o.duration_ms},
          {"model", model},
          {"nodes", nodes},
          {"links", links},
          {"events", events}};
}

inline Scenario random_scenario(std::uint64_t seed, const RandomScenarioOptions& o = {}) {
  return parse_scenario(random_scenario_json(seed, o));
}

}  // namespace phoenix::harness
