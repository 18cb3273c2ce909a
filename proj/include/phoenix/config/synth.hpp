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

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "phoenix/config/model.hpp"
#include "phoenix/core/crypto.hpp"

namespace phoenix::config {

struct EnvironmentConfig {
  VlanType vlan{VlanType::Scada};
  overlay::Vni vni;
  overlay::Subnet subnet;
  std::vector<std::string> services;

  bool operator==(const EnvironmentConfig&) const = default;
};

struct NodeConfig {
  std::string utility;
  std::uint16_t utility_index{0};
  std::uint16_t substation{1};
  std::string dial_prefix;
  std::vector<EnvironmentConfig> environments;
  // Services of the shared management environment (present on every node,
  // configured or not).
  std::vector<std::string> management_services;

  const EnvironmentConfig* environment(VlanType v) const {
    for (const auto& e : environments) {
      if (e.vlan == v) return &e;
    }
    return nullptr;
  }

  bool operator==(const NodeConfig&) const = default;
};

using LibraryKey = std::pair<std::string, std::uint16_t>;

struct ConfigLibrary {
  std::map<LibraryKey, NodeConfig> configs;

  const NodeConfig& resolve(std::string_view utility, int substation) const {
    auto it = configs.find({std::string(utility), static_cast<std::uint16_t>(substation)});
    if (substation < 1 || substation > 0xFFFF || it == configs.end()) {
      throw Error(Errc::UnknownSubstation, fmt::format("no configuration for {}/{}", utility, substation));
    }
    return it->second;
  }

  std::size_t size() const { return configs.size(); }
  bool operator==(const ConfigLibrary&) const = default;
};

inline std::vector<std::string> services_for(VlanType v) {
  std::vector<std::string> s{"dhcp", "dns", "netmon-agent", "ntp"};
  switch (v) {
    case VlanType::Scada:
      s.insert(s.end(), {"ethershield-controller", "ids"});
      break;
    case VlanType::Voip:
      s.insert(s.end(), {"chat", "sip-registrar", "webrtc"});
      break;
    case VlanType::Management:
      s.insert(s.end(), {"deployment-manager"});
      break;
    case VlanType::It:
      break;
  }
  std::sort(s.begin(), s.end());
  return s;
}

inline void to_json(nlohmann::json& j, const EnvironmentConfig& e) {
  j = {{"vlan", e.vlan}, {"vni", e.vni.value}, {"subnet", e.subnet.to_string()}, {"services", e.services}};
}

inline void from_json(const nlohmann::json& j, EnvironmentConfig& e) {
  e.vlan = j.at("vlan").get<VlanType>();
  e.vni = overlay::Vni{j.at("vni").get<std::uint32_t>()};
  e.subnet = overlay::Subnet::parse(j.at("subnet").get<std::string>());
  e.services = j.at("services").get<std::vector<std::string>>();
}

inline void to_json(nlohmann::json& j, const NodeConfig& c) {
  j = {{"utility", c.utility},
       {"utility_index", c.utility_index},
       {"substation", c.substation},
       {"dial_prefix", c.dial_prefix},
       {"environments", c.environments},
       {"management_services", c.management_services}};
}

inline void from_json(const nlohmann::json& j, NodeConfig& c) {
  c.utility = j.at("utility").get<std::string>();
  c.utility_index = j.at("utility_index").get<std::uint16_t>();
  c.substation = j.at("substation").get<std::uint16_t>();
  c.dial_prefix = j.at("dial_prefix").get<std::string>();
  c.environments = j.at("environments").get<std::vector<EnvironmentConfig>>();
  c.management_services = j.at("management_services").get<std::vector<std::string>>();
}

inline nlohmann::json to_json(const ConfigLibrary& lib) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& [_, c] : lib.configs) arr.push_back(c);
  return {{"configs", arr}};
}

inline ConfigLibrary library_from_json(const nlohmann::json& j) {
  ConfigLibrary lib;
  try {
    for (const auto& c : j.at("configs")) {
      auto nc = c.get<NodeConfig>();
      lib.configs[{nc.utility, nc.substation}] = std::move(nc);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ParseError, fmt::format("config library: {}", e.what()));
  }
  return lib;
}

inline std::string serialize(const ConfigLibrary& lib) { return to_json(lib).dump(2) + "\n"; }

inline std::string library_hash(const ConfigLibrary& lib) { return crypto::sha256_hex(serialize(lib)); }

// Builds the per-(utility, substation) configuration library. Pure: the same
// model always yields the same library. Address and dial-plan overrides are
// checked for references to things the model does not contain and for
// collisions; problems are reported together.
inline ConfigLibrary synthesize(const DeploymentModel& model) {
  std::vector<std::string> diag;
  if (model.utilities.empty()) diag.emplace_back("utilities: at least one utility required");

  std::set<std::string> env_keys;
  std::set<std::string> sub_keys;
  for (const auto& u : model.utilities) {
    for (int s = 1; s <= u.substations; ++s) {
      sub_keys.insert(substation_key(u.name, s));
      for (auto v : u.vlans) env_keys.insert(environment_key(u.name, s, v));
    }
  }
  for (const auto& [k, cidr] : model.addressing) {
    if (env_keys.count(k) == 0) diag.push_back(fmt::format("addressing.{}: no such environment", k));
    try {
      overlay::Subnet::parse(cidr);
    } catch (const Error& e) {
      diag.push_back(fmt::format("addressing.{}: {}", k, e.what()));
    }
  }
  for (const auto& [k, prefix] : model.dial_prefixes) {
    if (sub_keys.count(k) == 0) diag.push_back(fmt::format("dial_prefixes.{}: no such substation", k));
    bool digits = prefix.size() == 2 && std::all_of(prefix.begin(), prefix.end(), ::isdigit);
    if (!digits) diag.push_back(fmt::format("dial_prefixes.{}: expected two digits", k));
  }
  if (!diag.empty()) throw ModelError(std::move(diag));

  ConfigLibrary lib;
  std::map<std::string, std::string> prefix_owner;
  std::map<overlay::Subnet, std::string> subnet_owner;
  for (std::size_t ui = 0; ui < model.utilities.size(); ++ui) {
    const auto& u = model.utilities[ui];
    for (int s = 1; s <= u.substations; ++s) {
      NodeConfig nc;
      nc.utility = u.name;
      nc.utility_index = static_cast<std::uint16_t>(ui);
      nc.substation = static_cast<std::uint16_t>(s);
      auto sk = substation_key(u.name, s);
      if (auto it = model.dial_prefixes.find(sk); it != model.dial_prefixes.end()) {
        nc.dial_prefix = it->second;
      } else {
        nc.dial_prefix = default_dial_prefix(ui, s);
      }
      if (nc.dial_prefix.size() != 2) {
        diag.push_back(fmt::format("dial_prefixes.{}: default prefix {} exceeds two digits", sk, nc.dial_prefix));
      }
      auto [pit, fresh] = prefix_owner.emplace(nc.dial_prefix, sk);
      if (!fresh) {
        diag.push_back(fmt::format("dial_prefixes.{}: prefix {} already used by {}", sk, nc.dial_prefix, pit->second));
      }
      for (auto v : u.vlans) {
        EnvironmentConfig ec;
        ec.vlan = v;
        try {
          ec.vni = overlay::allocate_vni(static_cast<std::uint32_t>(ui), static_cast<std::uint32_t>(v));
        } catch (const Error& e) {
          diag.push_back(fmt::format("utilities[{}]: {}", ui, e.what()));
        }
        auto ek = environment_key(u.name, s, v);
        if (auto it = model.addressing.find(ek); it != model.addressing.end()) {
          ec.subnet = overlay::Subnet::parse(it->second);
        } else {
          ec.subnet = default_subnet(ui, s, v);
        }
        auto [sit, sfresh] = subnet_owner.emplace(ec.subnet, ek);
        if (!sfresh) {
          diag.push_back(fmt::format("addressing.{}: subnet {} already used by {}", ek, ec.subnet.to_string(),
                                     sit->second));
        }
        ec.services = services_for(v);
        nc.environments.push_back(std::move(ec));
      }
      nc.management_services = services_for(VlanType::Management);
      lib.configs[{u.name, nc.substation}] = std::move(nc);
    }
  }
  if (!diag.empty()) throw ModelError(std::move(diag));
  return lib;
}

}  // namespace phoenix::config
