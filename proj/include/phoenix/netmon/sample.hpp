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
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phoenix/core/bytes.hpp"
#include "phoenix/overlay/environment.hpp"

namespace phoenix::netmon {

using overlay::VlanType;

enum class SampleKind : std::uint8_t { LinkStat, DeviceSeen, DeviceUnreachable, PortProbe, IdsEvent };

constexpr std::string_view to_string(SampleKind k) {
  switch (k) {
    case SampleKind::LinkStat: return "LinkStat";
    case SampleKind::DeviceSeen: return "DeviceSeen";
    case SampleKind::DeviceUnreachable: return "DeviceUnreachable";
    case SampleKind::PortProbe: return "PortProbe";
    case SampleKind::IdsEvent: return "IdsEvent";
  }
  return "?";
}

inline SampleKind parse_sample_kind(std::string_view s) {
  for (auto k : {SampleKind::LinkStat, SampleKind::DeviceSeen, SampleKind::DeviceUnreachable, SampleKind::PortProbe,
                 SampleKind::IdsEvent}) {
    if (to_string(k) == s) return k;
  }
  throw Error(Errc::ParseError, fmt::format("unknown sample kind '{}'", s));
}

struct MonitorSample {
  NodeId agent;
  SimTime at{0};
  std::uint64_t seq{0};
  SampleKind kind{SampleKind::LinkStat};
  VlanType vlan{VlanType::Management};
  nlohmann::json payload = nlohmann::json::object();

  bool operator==(const MonitorSample&) const = default;
};

inline void to_json(nlohmann::json& j, const MonitorSample& s) {
  j = {{"agent", s.agent.value},
       {"at", s.at},
       {"seq", s.seq},
       {"kind", std::string(to_string(s.kind))},
       {"vlan", s.vlan},
       {"payload", s.payload}};
}

inline void from_json(const nlohmann::json& j, MonitorSample& s) {
  s.agent = NodeId{j.at("agent").get<std::uint64_t>()};
  s.at = j.at("at").get<SimTime>();
  s.seq = j.at("seq").get<std::uint64_t>();
  s.kind = parse_sample_kind(j.at("kind").get<std::string>());
  s.vlan = j.at("vlan").get<VlanType>();
  s.payload = j.at("payload");
}

// Wire form: u64 agent, u64 at, u64 seq, u8 kind, u8 vlan, str16 JSON payload.
inline void write_sample(ByteWriter& w, const MonitorSample& s) {
  w.u64(s.agent.value).u64(static_cast<std::uint64_t>(s.at)).u64(s.seq);
  w.u8(static_cast<std::uint8_t>(s.kind)).u8(static_cast<std::uint8_t>(s.vlan)).str16(s.payload.dump());
}

inline MonitorSample read_sample(ByteReader& r) {
  MonitorSample s;
  s.agent = NodeId{r.u64()};
  s.at = static_cast<SimTime>(r.u64());
  s.seq = r.u64();
  auto kind = r.u8();
  auto vlan = r.u8();
  if (kind > 4 || vlan > 3) throw Error(Errc::Malformed, "sample kind or vlan out of range");
  s.kind = static_cast<SampleKind>(kind);
  s.vlan = static_cast<VlanType>(vlan);
  s.payload = nlohmann::json::parse(r.str16());
  return s;
}

enum class Severity : std::uint8_t { Info, Warning, Critical };

constexpr std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Info: return "info";
    case Severity::Warning: return "warning";
    case Severity::Critical: return "critical";
  }
  return "?";
}

inline Severity severity_for(std::string_view kind) {
  if (kind == "compromise") return Severity::Critical;
  if (kind == "unknown_vni" || kind == "cache_overflow" || kind == "voip_number_conflict" ||
      kind == "shield_drop" || kind == "hostname_conflict") {
    return Severity::Warning;
  }
  return Severity::Info;
}

struct Alert {
  std::string id;
  Severity severity{Severity::Info};
  std::string kind;
  NodeId source;
  std::string subject;
  SimTime raised_at{0};
  std::optional<SimTime> cleared_at;

  bool active() const { return !cleared_at.has_value(); }
  bool operator==(const Alert&) const = default;
};

inline void to_json(nlohmann::json& j, const Alert& a) {
  j = {{"id", a.id},
       {"severity", std::string(to_string(a.severity))},
       {"kind", a.kind},
       {"source", a.source.value},
       {"subject", a.subject},
       {"raised_at", a.raised_at},
       {"cleared_at", a.cleared_at ? nlohmann::json(*a.cleared_at) : nlohmann::json(nullptr)}};
}

struct DeviceView {
  std::string device;
  std::string address;
  VlanType vlan{VlanType::Management};
  bool reachable{false};
  SimTime last_seen{0};
  std::vector<std::uint16_t> open_ports;
  bool operator==(const DeviceView&) const = default;
};

struct LinkView {
  std::uint64_t link{0};
  NodeId a;
  NodeId b;
  bool up{false};
  std::string kind;
  std::int64_t bandwidth_kbps{0};
  SimTime as_of{0};
  bool operator==(const LinkView&) const = default;
};

struct NodeView {
  NodeId node;
  SimTime last_sample{0};
  std::uint64_t samples{0};
  nlohmann::json status = nlohmann::json::object();
  bool operator==(const NodeView&) const = default;
};

struct NetworkSnapshot {
  SimTime as_of{0};
  std::map<NodeId, NodeView> nodes;
  std::map<std::uint64_t, LinkView> links;
  std::map<NodeId, std::map<std::string, DeviceView>> devices;
  std::map<std::string, Alert> alerts;  // every alert raised so far, by id

  std::vector<Alert> active_alerts() const {
    std::vector<Alert> out;
    for (const auto& [_, a] : alerts) {
      if (a.active()) out.push_back(a);
    }
    return out;
  }

  bool empty() const { return nodes.empty() && links.empty() && devices.empty() && alerts.empty(); }
  bool operator==(const NetworkSnapshot&) const = default;
};

inline nlohmann::json to_json(const NetworkSnapshot& s) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [_, n] : s.nodes) {
    nodes.push_back({{"node", n.node.value}, {"last_sample", n.last_sample}, {"samples", n.samples},
                     {"status", n.status}});
  }
  nlohmann::json links = nlohmann::json::array();
  for (const auto& [_, l] : s.links) {
    links.push_back({{"link", l.link},
                     {"a", l.a.value},
                     {"b", l.b.value},
                     {"up", l.up},
                     {"kind", l.kind},
                     {"bandwidth_kbps", l.bandwidth_kbps},
                     {"as_of", l.as_of},
                     {"faulted", !l.up}});
  }
  nlohmann::json devices = nlohmann::json::object();
  for (const auto& [node, devs] : s.devices) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& [_, d] : devs) {
      arr.push_back({{"device", d.device},
                     {"address", d.address},
                     {"vlan", d.vlan},
                     {"reachable", d.reachable},
                     {"last_seen", d.last_seen},
                     {"open_ports", d.open_ports}});
    }
    devices[std::to_string(node.value)] = std::move(arr);
  }
  nlohmann::json alerts = nlohmann::json::array();
  for (const auto& a : s.active_alerts()) alerts.push_back(a);
  return {{"as_of", s.as_of}, {"nodes", nodes}, {"links", links}, {"devices", devices}, {"alerts", alerts}};
}

// Fold order for samples: time, then agent, then sequence.
inline bool fold_less(const MonitorSample& a, const MonitorSample& b) {
  return std::tie(a.at, a.agent, a.seq) < std::tie(b.at, b.agent, b.seq);
}

inline void apply_sample(NetworkSnapshot& s, const MonitorSample& m) {
  auto& nv = s.nodes[m.agent];
  nv.node = m.agent;
  nv.last_sample = std::max(nv.last_sample, m.at);
  ++nv.samples;
  const auto& p = m.payload;
  switch (m.kind) {
    case SampleKind::LinkStat: {
      auto id = p.at("link").get<std::uint64_t>();
      auto& l = s.links[id];
      l.link = id;
      NodeId peer{p.at("peer").get<std::uint64_t>()};
      l.a = std::min(m.agent, peer);
      l.b = std::max(m.agent, peer);
      l.up = p.at("up").get<bool>();
      l.kind = p.value("kind", std::string("mesh"));
      l.bandwidth_kbps = p.value("bandwidth_kbps", std::int64_t{0});
      l.as_of = m.at;
      if (p.contains("phase")) nv.status["phase"] = p["phase"];
      break;
    }
    case SampleKind::DeviceSeen: {
      auto name = p.at("device").get<std::string>();
      auto& d = s.devices[m.agent][name];
      d.device = name;
      d.address = p.value("address", std::string());
      d.vlan = m.vlan;
      d.reachable = true;
      d.last_seen = m.at;
      break;
    }
    case SampleKind::DeviceUnreachable: {
      auto name = p.at("device").get<std::string>();
      auto& d = s.devices[m.agent][name];
      d.device = name;
      d.vlan = m.vlan;
      d.reachable = false;
      break;
    }
    case SampleKind::PortProbe: {
      auto name = p.at("device").get<std::string>();
      auto& d = s.devices[m.agent][name];
      d.device = name;
      d.vlan = m.vlan;
      d.open_ports = p.at("open").get<std::vector<std::uint16_t>>();
      break;
    }
    case SampleKind::IdsEvent: {
      auto id = p.at("alert_id").get<std::string>();
      auto action = p.at("action").get<std::string>();
      if (action == "raise") {
        auto it = s.alerts.find(id);
        if (it == s.alerts.end() || !it->second.active()) {
          Alert a;
          a.id = id;
          a.kind = p.value("kind", std::string());
          a.severity = severity_for(a.kind);
          a.source = m.agent;
          a.subject = p.value("subject", std::string());
          a.raised_at = m.at;
          s.alerts[id] = a;
        }
      } else if (action == "clear") {
        auto it = s.alerts.find(id);
        if (it != s.alerts.end() && it->second.active()) it->second.cleared_at = m.at;
      }
      break;
    }
  }
}

// Snapshot as of `at` from an arbitrary collection of samples.
inline NetworkSnapshot fold_samples(std::vector<MonitorSample> samples, SimTime at) {
  std::erase_if(samples, [at](const MonitorSample& m) { return m.at > at; });
  std::sort(samples.begin(), samples.end(), fold_less);
  NetworkSnapshot s;
  s.as_of = at;
  for (const auto& m : samples) apply_sample(s, m);
  return s;
}

}  // namespace phoenix::netmon
