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
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <nlohmann/json.hpp>

#include "phoenix/overlay/environment.hpp"

namespace phoenix::config {

using overlay::VlanType;

// Raised when a deployment model fails validation. Carries one diagnostic per
// offending field, e.g. "utilities[1].name: duplicate utility name 'A'".
class ModelError : public Error {
 public:
  explicit ModelError(std::vector<std::string> diagnostics)
      : Error(Errc::ModelInvalid, fmt::format("{}", fmt::join(diagnostics, "; "))),
        diagnostics_(std::move(diagnostics)) {}

  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

struct UtilitySpec {
  std::string name;
  std::uint16_t substations{1};
  std::vector<VlanType> vlans;
};

// A physical link planned in the model, endpoints given by node name.
struct LinkPlan {
  std::string a;
  std::string b;
  std::int64_t latency_ms{1};
  std::int64_t bandwidth_kbps{10'000};
  double loss_rate{0.0};
  std::string kind{"mesh"};
};

struct DeploymentModel {
  std::vector<UtilitySpec> utilities;
  std::vector<LinkPlan> links;
  // "<utility>/<substation>/<vlan>" -> CIDR
  std::map<std::string, std::string> addressing;
  // "<utility>/<substation>" -> dial prefix
  std::map<std::string, std::string> dial_prefixes;

  std::optional<std::size_t> utility_index(std::string_view name) const {
    for (std::size_t i = 0; i < utilities.size(); ++i) {
      if (utilities[i].name == name) return i;
    }
    return std::nullopt;
  }
};

inline std::string substation_key(std::string_view utility, int substation) {
  return fmt::format("{}/{}", utility, substation);
}

inline std::string environment_key(std::string_view utility, int substation, VlanType vlan) {
  return fmt::format("{}/{}/{}", utility, substation, overlay::to_string(vlan));
}

// Default addressing: 10.<utility>.<substation*4 + vlan>.0/24 with zero-based
// utility and substation indices.
inline overlay::Subnet default_subnet(std::size_t utility_index, int substation, VlanType vlan) {
  std::uint32_t third = static_cast<std::uint32_t>((substation - 1) * 4 + static_cast<int>(vlan));
  std::uint32_t net = (10u << 24) | (static_cast<std::uint32_t>(utility_index) << 16) | (third << 8);
  return overlay::Subnet{net, 24};
}

// Default dial prefix: utility*10 + substation index + 1, two digits.
inline std::string default_dial_prefix(std::size_t utility_index, int substation) {
  return fmt::format("{:02d}", utility_index * 10 + static_cast<std::size_t>(substation - 1) + 1);
}

inline void to_json(nlohmann::json& j, const UtilitySpec& u) {
  j = {{"name", u.name}, {"substations", u.substations}, {"vlans", u.vlans}};
}

inline void to_json(nlohmann::json& j, const LinkPlan& l) {
  j = {{"a", l.a},
       {"b", l.b},
       {"latency_ms", l.latency_ms},
       {"bandwidth_kbps", l.bandwidth_kbps},
       {"loss_rate", l.loss_rate},
       {"kind", l.kind}};
}

inline void to_json(nlohmann::json& j, const DeploymentModel& m) {
  j = {{"utilities", m.utilities},
       {"links", m.links},
       {"addressing", m.addressing},
       {"dial_prefixes", m.dial_prefixes}};
}

// Parses a model from JSON, collecting field-level diagnostics. Structural
// problems (wrong types) and semantic ones (duplicates, bounds) are both
// reported as ModelInvalid.
inline DeploymentModel parse_model(const nlohmann::json& j) {
  std::vector<std::string> diag;
  DeploymentModel m;
  if (!j.is_object()) throw ModelError({"model: expected an object"});
  if (!j.contains("utilities") || !j["utilities"].is_array()) {
    diag.emplace_back("utilities: required array missing");
  } else {
    const auto& us = j["utilities"];
    for (std::size_t i = 0; i < us.size(); ++i) {
      const auto& u = us[i];
      auto field = [&](std::string_view f) { return fmt::format("utilities[{}].{}", i, f); };
      UtilitySpec spec;
      if (!u.is_object()) {
        diag.push_back(fmt::format("utilities[{}]: expected an object", i));
        continue;
      }
      if (!u.contains("name") || !u["name"].is_string() || u["name"].get<std::string>().empty()) {
        diag.push_back(field("name") + ": non-empty string required");
      } else {
        spec.name = u["name"].get<std::string>();
        if (spec.name.find('/') != std::string::npos) diag.push_back(field("name") + ": '/' not allowed");
      }
      if (!u.contains("substations") || !u["substations"].is_number_integer() ||
          u["substations"].get<long long>() < 1) {
        diag.push_back(field("substations") + ": integer >= 1 required");
      } else if (u["substations"].get<long long>() > 64) {
        diag.push_back(field("substations") + ": at most 64 substations per utility");
      } else {
        spec.substations = static_cast<std::uint16_t>(u["substations"].get<long long>());
      }
      if (!u.contains("vlans") || !u["vlans"].is_array() || u["vlans"].empty()) {
        diag.push_back(field("vlans") + ": non-empty array required");
      } else {
        std::set<VlanType> seen;
        for (std::size_t k = 0; k < u["vlans"].size(); ++k) {
          try {
            auto v = overlay::parse_vlan(u["vlans"][k].get<std::string>());
            if (v == VlanType::Management) {
              diag.push_back(fmt::format("{}[{}]: management VLAN is implicit", field("vlans"), k));
            } else if (!seen.insert(v).second) {
              diag.push_back(fmt::format("{}[{}]: duplicate VLAN type", field("vlans"), k));
            } else {
              spec.vlans.push_back(v);
            }
          } catch (const std::exception& e) {
            diag.push_back(fmt::format("{}[{}]: {}", field("vlans"), k, e.what()));
          }
        }
      }
      m.utilities.push_back(std::move(spec));
    }
    if (m.utilities.size() > 255) diag.emplace_back("utilities: at most 255 utilities");
    std::set<std::string> names;
    for (std::size_t i = 0; i < m.utilities.size(); ++i) {
      const auto& n = m.utilities[i].name;
      if (!n.empty() && !names.insert(n).second) {
        diag.push_back(fmt::format("utilities[{}].name: duplicate utility name '{}'", i, n));
      }
    }
  }

  if (j.contains("links")) {
    if (!j["links"].is_array()) {
      diag.emplace_back("links: expected an array");
    } else {
      for (std::size_t i = 0; i < j["links"].size(); ++i) {
        const auto& l = j["links"][i];
        try {
          LinkPlan p;
          p.a = l.at("a").get<std::string>();
          p.b = l.at("b").get<std::string>();
          p.latency_ms = l.value("latency_ms", std::int64_t{1});
          p.bandwidth_kbps = l.value("bandwidth_kbps", std::int64_t{10'000});
          p.loss_rate = l.value("loss_rate", 0.0);
          p.kind = l.value("kind", std::string("mesh"));
          if (p.a == p.b) diag.push_back(fmt::format("links[{}]: endpoints must differ", i));
          if (p.bandwidth_kbps <= 0) diag.push_back(fmt::format("links[{}].bandwidth_kbps: must be > 0", i));
          if (p.latency_ms < 0) diag.push_back(fmt::format("links[{}].latency_ms: must be >= 0", i));
          if (p.loss_rate < 0.0 || p.loss_rate > 1.0) {
            diag.push_back(fmt::format("links[{}].loss_rate: must be in [0,1]", i));
          }
          if (p.kind != "mesh" && p.kind != "control") {
            diag.push_back(fmt::format("links[{}].kind: expected 'mesh' or 'control'", i));
          }
          m.links.push_back(std::move(p));
        } catch (const nlohmann::json::exception& e) {
          diag.push_back(fmt::format("links[{}]: {}", i, e.what()));
        }
      }
    }
  }

  auto read_map = [&](std::string_view name, std::map<std::string, std::string>& out) {
    if (!j.contains(name)) return;
    const auto& obj = j[std::string(name)];
    if (!obj.is_object()) {
      diag.push_back(fmt::format("{}: expected an object", name));
      return;
    }
    for (const auto& [k, v] : obj.items()) {
      if (!v.is_string()) {
        diag.push_back(fmt::format("{}.{}: expected a string", name, k));
      } else {
        out[k] = v.get<std::string>();
      }
    }
  };
  read_map("addressing", m.addressing);
  read_map("dial_prefixes", m.dial_prefixes);

  if (!diag.empty()) throw ModelError(std::move(diag));
  return m;
}

inline DeploymentModel parse_model(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ParseError, fmt::format("model: {}", e.what()));
  }
  return parse_model(j);
}

}  // namespace phoenix::config
