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

#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "phoenix/config/model.hpp"
#include "phoenix/sim/scenario_event.hpp"

namespace phoenix::harness {

struct NodeSpec {
  NodeId id;
  std::string name;
  bool control_center{false};
  bool broadcast_receiver{true};
  bool powered{true};
};

struct LinkDecl {
  std::string a;
  std::string b;
  std::int64_t latency_ms{1};
  std::int64_t bandwidth_kbps{10'000};
  double loss_rate{0.0};
  std::string kind{"mesh"};
  bool up{true};
  int interface_index{0};
};

struct ShieldDecl {
  std::string id;
  std::string node;
  std::string device;
};

struct Scenario {
  std::string name;
  std::uint64_t seed{1};
  SimTime duration_ms{60'000};
  std::optional<config::DeploymentModel> model;
  std::vector<NodeSpec> nodes;
  std::vector<LinkDecl> links;
  std::vector<ShieldDecl> shields;
  std::map<std::string, std::vector<std::string>> groups;
  std::vector<sim::ScenarioEvent> events;
  nlohmann::json config = nlohmann::json::object();
};

inline void to_json(nlohmann::json& j, const LinkDecl& l) {
  j = {{"a", l.a},
       {"b", l.b},
       {"latency_ms", l.latency_ms},
       {"bandwidth_kbps", l.bandwidth_kbps},
       {"loss_rate", l.loss_rate},
       {"kind", l.kind},
       {"up", l.up},
       {"interface", l.interface_index}};
}

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : s.nodes) {
    nodes.push_back({{"id", n.id.value},
                     {"name", n.name},
                     {"control_center", n.control_center},
                     {"broadcast_receiver", n.broadcast_receiver},
                     {"powered", n.powered}});
  }
  nlohmann::json shields = nlohmann::json::array();
  for (const auto& sh : s.shields) shields.push_back({{"id", sh.id}, {"node", sh.node}, {"device", sh.device}});
  nlohmann::json events = nlohmann::json::array();
  for (const auto& e : s.events) {
    nlohmann::json ev = e.payload;
    ev["at"] = e.at;
    ev["kind"] = std::string(to_string(e.kind));
    events.push_back(std::move(ev));
  }
  nlohmann::json j = {{"name", s.name},       {"seed", s.seed},   {"duration_ms", s.duration_ms},
                      {"nodes", nodes},       {"links", s.links}, {"shields", shields},
                      {"groups", s.groups},   {"events", events}, {"config", s.config}};
  if (s.model) j["model"] = *s.model;
  return j;
}

// Turns a byte offset into "line L, column C".
inline std::string text_position(std::string_view text, std::size_t offset) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return fmt::format("line {}, column {}", line, col);
}

inline nlohmann::json parse_json_text(std::string_view text, std::string_view what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, fmt::format("{}: {}: {}", what, text_position(text, e.byte == 0 ? 0 : e.byte - 1),
                                              e.what()));
  }
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::ParseError, fmt::format("cannot open '{}'", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Field-level validation; every problem is reported in one ParseError.
inline Scenario parse_scenario(const nlohmann::json& j) {
  std::vector<std::string> diag;
  Scenario s;
  if (!j.is_object()) throw Error(Errc::ParseError, "scenario: expected an object");
  auto get = [&](const nlohmann::json& obj, std::string_view field, std::string_view path, auto fallback) {
    using T = decltype(fallback);
    if (!obj.contains(field)) return fallback;
    try {
      return obj.at(std::string(field)).template get<T>();
    } catch (const nlohmann::json::exception&) {
      diag.push_back(fmt::format("{}.{}: wrong type", path, field));
      return fallback;
    }
  };
  s.name = get(j, "name", "scenario", std::string("unnamed"));
  s.seed = get(j, "seed", "scenario", std::uint64_t{1});
  s.duration_ms = get(j, "duration_ms", "scenario", SimTime{60'000});
  if (s.duration_ms <= 0) diag.emplace_back("scenario.duration_ms: must be > 0");
  if (j.contains("model")) {
    try {
      s.model = config::parse_model(j["model"]);
    } catch (const config::ModelError& e) {
      for (const auto& d : e.diagnostics()) diag.push_back("model." + d);
    }
  }

  std::set<std::string> names;
  if (!j.contains("nodes") || !j["nodes"].is_array() || j["nodes"].empty()) {
    diag.emplace_back("nodes: non-empty array required");
  } else {
    std::set<std::uint64_t> ids;
    for (std::size_t i = 0; i < j["nodes"].size(); ++i) {
      const auto& n = j["nodes"][i];
      auto path = fmt::format("nodes[{}]", i);
      if (!n.is_object()) {
        diag.push_back(path + ": expected an object");
        continue;
      }
      NodeSpec spec;
      spec.name = get(n, "name", path, std::string());
      if (spec.name.empty()) diag.push_back(path + ".name: required");
      spec.id = NodeId{get(n, "id", path, std::uint64_t{i + 1})};
      spec.control_center = get(n, "control_center", path, false);
      spec.broadcast_receiver = get(n, "broadcast_receiver", path, true);
      spec.powered = get(n, "powered", path, true);
      if (!spec.name.empty() && !names.insert(spec.name).second) {
        diag.push_back(fmt::format("{}.name: duplicate node name '{}'", path, spec.name));
      }
      if (!ids.insert(spec.id.value).second) diag.push_back(fmt::format("{}.id: duplicate id {}", path, spec.id.value));
      s.nodes.push_back(std::move(spec));
    }
  }

  auto check_node = [&](const std::string& name, const std::string& path) {
    if (!name.empty() && names.count(name) == 0) diag.push_back(fmt::format("{}: unknown node '{}'", path, name));
  };

  if (j.contains("links")) {
    if (!j["links"].is_array()) {
      diag.emplace_back("links: expected an array");
    } else {
      for (std::size_t i = 0; i < j["links"].size(); ++i) {
        const auto& l = j["links"][i];
        auto path = fmt::format("links[{}]", i);
        LinkDecl d;
        d.a = get(l, "a", path, std::string());
        d.b = get(l, "b", path, std::string());
        d.latency_ms = get(l, "latency_ms", path, std::int64_t{1});
        d.bandwidth_kbps = get(l, "bandwidth_kbps", path, std::int64_t{10'000});
        d.loss_rate = get(l, "loss_rate", path, 0.0);
        d.kind = get(l, "kind", path, std::string("mesh"));
        d.up = get(l, "up", path, true);
        d.interface_index = get(l, "interface", path, 0);
        check_node(d.a, path + ".a");
        check_node(d.b, path + ".b");
        if (d.a.empty() || d.b.empty()) diag.push_back(path + ": endpoints a and b required");
        if (d.a == d.b && !d.a.empty()) diag.push_back(path + ": endpoints must differ");
        if (d.kind != "mesh" && d.kind != "control") diag.push_back(path + ".kind: expected 'mesh' or 'control'");
        if (d.bandwidth_kbps <= 0) diag.push_back(path + ".bandwidth_kbps: must be > 0");
        if (d.latency_ms < 0) diag.push_back(path + ".latency_ms: must be >= 0");
        if (d.loss_rate < 0 || d.loss_rate > 1) diag.push_back(path + ".loss_rate: must be in [0,1]");
        s.links.push_back(std::move(d));
      }
    }
  }

  if (j.contains("shields")) {
    for (std::size_t i = 0; i < j["shields"].size(); ++i) {
      const auto& sh = j["shields"][i];
      auto path = fmt::format("shields[{}]", i);
      ShieldDecl d{get(sh, "id", path, std::string()), get(sh, "node", path, std::string()),
                   get(sh, "device", path, std::string())};
      if (d.id.empty() || d.device.empty()) diag.push_back(path + ": id and device required");
      check_node(d.node, path + ".node");
      s.shields.push_back(std::move(d));
    }
  }

  if (j.contains("groups")) {
    try {
      s.groups = j["groups"].get<std::map<std::string, std::vector<std::string>>>();
    } catch (const nlohmann::json::exception&) {
      diag.emplace_back("groups: expected an object of number arrays");
    }
  }

  if (j.contains("events")) {
    if (!j["events"].is_array()) {
      diag.emplace_back("events: expected an array");
    } else {
      for (std::size_t i = 0; i < j["events"].size(); ++i) {
        const auto& e = j["events"][i];
        auto path = fmt::format("events[{}]", i);
        if (!e.is_object()) {
          diag.push_back(path + ": expected an object");
          continue;
        }
        sim::ScenarioEvent ev;
        ev.at = get(e, "at", path, SimTime{-1});
        if (ev.at < 0) diag.push_back(path + ".at: non-negative time required");
        auto kind = get(e, "kind", path, std::string());
        auto k = sim::parse_event_kind(kind);
        if (!k) {
          diag.push_back(fmt::format("{}.kind: unknown event kind '{}'", path, kind));
          continue;
        }
        ev.kind = *k;
        ev.payload = e;
        ev.payload.erase("at");
        ev.payload.erase("kind");
        for (const auto* f : {"node", "a", "b", "to_node"}) {
          if (e.contains(f) && e[f].is_string()) check_node(e[f].get<std::string>(), fmt::format("{}.{}", path, f));
        }
        s.events.push_back(std::move(ev));
      }
    }
  }
  if (j.contains("config")) s.config = j["config"];

  if (!diag.empty()) {
    std::string msg;
    for (const auto& d : diag) msg += (msg.empty() ? "" : "; ") + d;
    throw Error(Errc::ParseError, msg);
  }
  std::stable_sort(s.events.begin(), s.events.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
  return s;
}

inline Scenario parse_scenario_text(std::string_view text) { return parse_scenario(parse_json_text(text, "scenario")); }

inline Scenario load_scenario(const std::string& path) { return parse_scenario_text(read_file(path)); }

// Accepts a bare model or a scenario file carrying one under "model".
inline config::DeploymentModel load_model(const std::string& path) {
  auto j = parse_json_text(read_file(path), "model");
  if (j.is_object() && j.contains("model") && !j.contains("utilities")) return config::parse_model(j["model"]);
  return config::parse_model(j);
}

}  // namespace phoenix::harness
