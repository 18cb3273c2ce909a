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

#include <array>
#include <cstdio>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "phoenix/core/types.hpp"

namespace phoenix::overlay {

enum class VlanType : std::uint8_t { Scada = 0, It = 1, Voip = 2, Management = 3 };

inline constexpr std::array<VlanType, 4> kAllVlanTypes{VlanType::Scada, VlanType::It, VlanType::Voip,
                                                       VlanType::Management};

constexpr std::string_view to_string(VlanType v) {
  switch (v) {
    case VlanType::Scada: return "SCADA";
    case VlanType::It: return "IT";
    case VlanType::Voip: return "VoIP";
    case VlanType::Management: return "Management";
  }
  return "?";
}

inline VlanType parse_vlan(std::string_view s) {
  for (auto v : kAllVlanTypes) {
    if (to_string(v) == s) return v;
  }
  throw Error(Errc::ParseError, fmt::format("unknown VLAN type '{}'", s));
}

inline void to_json(nlohmann::json& j, VlanType v) { j = std::string(to_string(v)); }
inline void from_json(const nlohmann::json& j, VlanType& v) { v = parse_vlan(j.get<std::string>()); }

// Utility index used for the management environment, which is shared by all
// utilities on a node.
inline constexpr std::uint16_t kSharedUtility = 0xFFFF;

// IPv4 prefix.
struct Subnet {
  std::uint32_t network{0};
  std::uint8_t prefix_len{24};

  static Subnet parse(std::string_view cidr) {
    unsigned a = 0, b = 0, c = 0, d = 0, len = 0;
    std::string s(cidr);
    if (std::sscanf(s.c_str(), "%u.%u.%u.%u/%u", &a, &b, &c, &d, &len) != 5 || a > 255 || b > 255 ||
        c > 255 || d > 255 || len > 32) {
      throw Error(Errc::ParseError, fmt::format("bad subnet '{}'", cidr));
    }
    std::uint32_t addr = (a << 24) | (b << 16) | (c << 8) | d;
    std::uint32_t mask = len == 0 ? 0 : ~std::uint32_t{0} << (32 - len);
    return Subnet{addr & mask, static_cast<std::uint8_t>(len)};
  }

  std::uint32_t mask() const { return prefix_len == 0 ? 0 : ~std::uint32_t{0} << (32 - prefix_len); }
  bool contains(std::uint32_t addr) const { return (addr & mask()) == network; }
  // Usable host addresses (network and broadcast excluded).
  std::uint32_t host_count() const {
    if (prefix_len >= 31) return 0;
    return (std::uint32_t{1} << (32 - prefix_len)) - 2;
  }
  std::uint32_t host(std::uint32_t index) const { return network + 1 + index; }

  std::string to_string() const {
    return fmt::format("{}.{}.{}.{}/{}", network >> 24, (network >> 16) & 0xFF, (network >> 8) & 0xFF,
                       network & 0xFF, prefix_len);
  }

  auto operator<=>(const Subnet&) const = default;
};

inline std::string ip_to_string(std::uint32_t a) {
  return fmt::format("{}.{}.{}.{}", a >> 24, (a >> 16) & 0xFF, (a >> 8) & 0xFF, a & 0xFF);
}

inline std::uint32_t parse_ip(std::string_view s) {
  unsigned a = 0, b = 0, c = 0, d = 0;
  std::string str(s);
  if (std::sscanf(str.c_str(), "%u.%u.%u.%u", &a, &b, &c, &d) != 4 || a > 255 || b > 255 || c > 255 ||
      d > 255) {
    throw Error(Errc::ParseError, fmt::format("bad address '{}'", s));
  }
  return (a << 24) | (b << 16) | (c << 8) | d;
}

// 24-bit virtual network identifier.
struct Vni {
  std::uint32_t value{0};
  auto operator<=>(const Vni&) const = default;
};

inline constexpr std::uint32_t kMaxVni = 0xFFFFFF;
inline constexpr std::uint32_t kVlanSlots = 16;
// Reserved for the node-local management environment; never produced by
// allocate_vni.
inline constexpr Vni kManagementVni{0};

// VNI for a (utility, VLAN) combination: utility * 16 + vlan + 1.
inline Vni allocate_vni(std::uint32_t utility_index, std::uint32_t vlan_index) {
  if (vlan_index >= kVlanSlots) {
    throw Error(Errc::ModelBounds, fmt::format("vlan index {} >= {}", vlan_index, kVlanSlots));
  }
  std::uint64_t v = std::uint64_t{utility_index} * kVlanSlots + vlan_index + 1;
  if (v > kMaxVni) throw Error(Errc::ModelBounds, fmt::format("utility index {} overflows VNI space", utility_index));
  return Vni{static_cast<std::uint32_t>(v)};
}

struct EnvironmentKey {
  std::uint16_t utility{kSharedUtility};
  VlanType vlan{VlanType::Management};
  auto operator<=>(const EnvironmentKey&) const = default;
};

inline nlohmann::json to_json_key(const EnvironmentKey& k) {
  return {{"utility", k.utility}, {"vlan", std::string(to_string(k.vlan))}};
}

struct NetworkEnvironment {
  EnvironmentKey key;
  Vni vni;
  Subnet subnet;
  std::set<DeviceId> attached_devices;
  std::set<std::string> services;

  std::uint16_t utility() const { return key.utility; }
  VlanType vlan_type() const { return key.vlan; }
  // First host address; the node's own interface in the environment.
  std::uint32_t gateway() const { return subnet.host(0); }
};

}  // namespace phoenix::overlay
