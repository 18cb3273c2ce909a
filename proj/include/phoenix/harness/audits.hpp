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
#include <vector>

#include "phoenix/harness/network.hpp"

namespace phoenix::harness {

enum class AuditStatus { Pass, Fail, NotApplicable };

constexpr std::string_view to_string(AuditStatus s) {
  switch (s) {
    case AuditStatus::Pass: return "PASS";
    case AuditStatus::Fail: return "FAIL";
    case AuditStatus::NotApplicable: return "N/A";
  }
  return "?";
}

inline AuditStatus parse_audit_status(std::string_view s) {
  for (auto v : {AuditStatus::Pass, AuditStatus::Fail, AuditStatus::NotApplicable}) {
    if (to_string(v) == s) return v;
  }
  throw Error(Errc::ParseError, fmt::format("unknown audit status '{}'", s));
}

struct AuditResult {
  std::string module;
  std::string name;
  AuditStatus status{AuditStatus::Pass};
  std::uint64_t checked{0};
  std::string detail;

  bool operator==(const AuditResult&) const = default;
};

inline void to_json(nlohmann::json& j, const AuditResult& a) {
  j = {{"module", a.module},
       {"name", a.name},
       {"status", std::string(to_string(a.status))},
       {"checked", a.checked},
       {"detail", a.detail}};
}

inline void from_json(const nlohmann::json& j, AuditResult& a) {
  a.module = j.at("module").get<std::string>();
  a.name = j.at("name").get<std::string>();
  a.status = parse_audit_status(j.at("status").get<std::string>());
  a.checked = j.value("checked", std::uint64_t{0});
  a.detail = j.value("detail", std::string());
}

namespace detail {

// Counts checks and the first few violations.
struct Tally {
  std::uint64_t checked{0};
  std::uint64_t failed{0};
  std::vector<std::string> samples;

  void check(bool ok, const std::function<std::string()>& why) {
    ++checked;
    if (ok) return;
    ++failed;
    if (samples.size() < 3) samples.push_back(why());
  }

  AuditResult result(std::string module, std::string name, std::string ok_detail = {}) const {
    AuditResult r{std::move(module), std::move(name), AuditStatus::Pass, checked, std::move(ok_detail)};
    if (failed != 0) {
      r.status = AuditStatus::Fail;
      r.detail = fmt::format("{} of {} violated", failed, checked);
      for (const auto& s : samples) r.detail += "; " + s;
    } else if (checked == 0) {
      r.status = AuditStatus::NotApplicable;
      if (r.detail.empty()) r.detail = "nothing to check";
    }
    return r;
  }
};

inline std::vector<const sim::LogRecord*> of_kind(const sim::EventLog& log, std::string_view kind) {
  return log.of_kind(kind);
}

}  // namespace detail

// ---- sim ----

inline AuditResult audit_log_order(const Network& net) {
  detail::Tally t;
  const auto& log = net.engine().log();
  SimTime last = 0;
  std::uint64_t last_seq = 0;
  bool first = true;
  for (const auto& r : log.records()) {
    t.check(first || (r.at >= last && r.seq > last_seq),
            [&] { return fmt::format("record {} at {} after {}", r.seq, r.at, last); });
    last = r.at;
    last_seq = r.seq;
    first = false;
  }
  SimTime last_frame = 0;
  for (const auto& f : log.frames()) {
    t.check(f.sent_at >= last_frame, [&] { return fmt::format("frame {} sent at {}", f.frame_id, f.sent_at); });
    last_frame = f.sent_at;
  }
  return t.result("sim", "log_order");
}

// Replays every link direction as a FIFO transmitter and compares delivery
// times with the recorded ones.
inline AuditResult audit_frame_timing(const Network& net) {
  detail::Tally t;
  const auto& medium = net.medium();
  std::map<std::pair<LinkId, NodeId>, SimTime> busy;
  for (const auto& f : net.engine().log().frames()) {
    const auto& l = medium.link(f.link);
    auto& b = busy[{f.link, f.from}];
    SimTime start = std::max(f.sent_at, b);
    SimTime ser = sim::serialization_delay_ms(f.size, l.bandwidth_kbps);
    b = start + ser;
    if (f.outcome == sim::FrameOutcome::Pending) continue;
    SimTime expect = start + ser + l.latency_ms;
    t.check(f.done_at == expect,
            [&] { return fmt::format("frame {} done at {} expected {}", f.frame_id, f.done_at, expect); });
  }
  return t.result("sim", "frame_timing");
}

// ---- mesh ----

inline AuditResult audit_routes(const Network& net) {
  detail::Tally t;
  for (const auto& [id, _] : net.nodes()) {
    if (!net.mesh().powered(id)) continue;
    auto expect = mesh::compute_routes(net.mesh().lsdb(id), id);
    t.check(expect == net.mesh().routes(id), [&] { return fmt::format("node {} routes stale", id.value); });
  }
  return t.result("mesh", "routes_match_lsdb");
}

inline AuditResult audit_multicast_once(const Network& net) {
  detail::Tally t;
  std::set<std::tuple<std::uint64_t, std::uint64_t, std::uint64_t>> seen;
  for (const auto* r : net.engine().log().of_kind("mcast_deliver")) {
    auto key = std::make_tuple(r->data["node"].get<std::uint64_t>(), r->data["origin"].get<std::uint64_t>(),
                               r->data["seq"].get<std::uint64_t>());
    t.check(seen.insert(key).second, [&] {
      return fmt::format("node {} got {}#{} twice", std::get<0>(key), std::get<1>(key), std::get<2>(key));
    });
  }
  return t.result("mesh", "multicast_delivered_once");
}

// ---- overlay ----

inline AuditResult audit_isolation(const Network& net) {
  detail::Tally t;
  for (const auto* r : net.engine().log().of_kind("device_deliver")) {
    const auto& d = r->data;
    if (d["injected"].get<bool>() || d["src_env"].is_null()) continue;
    t.check(d["src_env"] == d["dst_env"], [&] {
      return fmt::format("frame {} {} -> {} crossed environments", d["frame"].get<std::uint64_t>(),
                         d["src_device"].get<std::string>(), d["device"].get<std::string>());
    });
  }
  return t.result("overlay", "environment_isolation");
}

// Injected frames carrying a VNI the target does not host must never reach
// a device.
inline AuditResult audit_injection(const Network& net) {
  detail::Tally t;
  const auto& log = net.engine().log();
  std::set<std::uint64_t> delivered;
  for (const auto* r : log.of_kind("device_deliver")) delivered.insert(r->data["frame"].get<std::uint64_t>());
  std::set<std::uint64_t> dropped;
  for (const auto* r : log.of_kind("overlay_drop")) {
    if (r->data.value("reason", "") == "UnknownVni") dropped.insert(r->data.value("frame", std::uint64_t{0}));
  }
  std::uint64_t unknown = 0;
  std::uint64_t confirmed = 0;
  for (const auto* r : log.of_kind("overlay_inject")) {
    auto fid = r->data["frame"].get<std::uint64_t>();
    NodeId to{r->data["to"].get<std::uint64_t>()};
    std::uint32_t vni = r->data["vni"].get<std::uint32_t>();
    bool hosted = false;
    for (const auto& e : net.node(to).environments) hosted = hosted || e.vni.value == vni;
    if (hosted) continue;
    ++unknown;
    if (dropped.count(fid) != 0) ++confirmed;
    t.check(delivered.count(fid) == 0, [&] { return fmt::format("injected frame {} delivered", fid); });
  }
  return t.result("overlay", "unknown_vni_dropped",
                  fmt::format("{} injected, {} dropped as UnknownVni at the target", unknown, confirmed));
}

// ---- config ----

inline AuditResult audit_phase_demotions(const Network& net) {
  detail::Tally t;
  const auto& log = net.engine().log();
  const auto& mc = net.options().mesh;
  // Loss of capability surfaces after neighbor hold, advertisement hold and
  // one flood period at most.
  SimTime window = mc.hold_time_ms + mc.topology_hold_ms + mc.flood_interval_ms + mc.hello_interval_ms;
  std::vector<SimTime> removals;
  for (const auto* r : log.of_kind("scenario_event")) {
    auto k = sim::parse_event_kind(r->data["event"].get<std::string>());
    if (k && sim::removes_capability(*k)) removals.push_back(r->at);
  }
  bool lossy = false;
  for (const auto& l : net.medium().links()) lossy = lossy || l.loss_rate > 0;
  std::uint64_t unexplained = 0;
  for (const auto* r : log.of_kind("phase_change")) {
    int from = r->data["from"].get<int>();
    int to = r->data["to"].get<int>();
    if (to >= from) continue;
    auto it = std::upper_bound(removals.begin(), removals.end(), r->at);
    bool explained = it != removals.begin() && r->at - *std::prev(it) <= window;
    if (!explained && lossy) {
      ++unexplained;
      continue;
    }
    t.check(explained, [&] {
      return fmt::format("node {} fell {}->{} at {} with no removal before it", r->data["node"].get<std::uint64_t>(),
                         from, to, r->at);
    });
  }
  auto res = t.result("config", "phase_demotions_explained");
  if (unexplained != 0 && res.status != AuditStatus::Fail) {
    res.detail = fmt::format("{} demotion(s) on lossy links without a removal event", unexplained);
  }
  return res;
}

inline AuditResult audit_phase4_configured(const Network& net) {
  detail::Tally t;
  std::map<std::uint64_t, SimTime> configured_at;
  for (const auto* r : net.engine().log().of_kind("config_apply")) {
    configured_at.try_emplace(r->data["node"].get<std::uint64_t>(), r->at);
  }
  for (const auto& [id, rt] : net.nodes()) {
    for (const auto& [at, phase] : rt.phase_history) {
      if (phase != 4) continue;
      auto it = configured_at.find(id.value);
      t.check(it != configured_at.end() && it->second <= at,
              [&, at = at] { return fmt::format("node {} at phase 4 at {} unconfigured", id.value, at); });
    }
  }
  return t.result("config", "phase4_requires_config");
}

// ---- dns ----

inline AuditResult audit_dns_latency(const Network& net) {
  detail::Tally t;
  for (const auto* r : net.engine().log().of_kind("dns_resolve")) {
    const auto& d = r->data;
    auto latency = d["latency_ms"].get<SimTime>();
    if (d["local"].get<bool>()) {
      t.check(latency == 0, [&] { return fmt::format("local answer for {} took {}", d["name"].get<std::string>(), latency); });
    } else if (d["negative"].get<bool>()) {
      auto timeout = d["timeout_ms"].get<SimTime>();
      t.check(latency == timeout, [&] {
        return fmt::format("negative {} after {} (timeout {})", d["name"].get<std::string>(), latency, timeout);
      });
    } else {
      t.check(latency <= d["timeout_ms"].get<SimTime>(), [&] { return "positive answer after timeout"; });
    }
  }
  return t.result("dns", "resolve_latency");
}

// ---- voip ----

inline AuditResult audit_calls(Network& net) {
  detail::Tally t;
  std::set<std::string> conflict_alerts;
  for (const auto& s : net.backend().samples()) {
    if (s.kind == netmon::SampleKind::IdsEvent && s.payload.value("kind", "") == "voip_number_conflict") {
      conflict_alerts.insert(s.payload.value("subject", ""));
    }
  }
  for (const auto& c : net.voip().calls()) {
    switch (c.outcome) {
      case voip::CallOutcome::Connected:
      case voip::CallOutcome::Conflict:
        t.check(c.target.has_value(), [&] { return fmt::format("call {} connected without target", c.call_id); });
        break;
      case voip::CallOutcome::NotFound:
        t.check(!c.target && c.setup_latency >= net.options().dns.query_timeout_ms,
                [&] { return fmt::format("call {} NotFound after {} ms", c.call_id, c.setup_latency); });
        break;
      case voip::CallOutcome::Unreachable: t.check(!c.target, [] { return std::string("unreachable with target"); }); break;
    }
  }
  // Conflict alerts travel through the monitoring stream, so only calls
  // whose caller could reach the backend are held to it.
  std::uint64_t conflicts = 0;
  for (const auto& c : net.voip().calls()) {
    if (c.outcome == voip::CallOutcome::Conflict) ++conflicts;
  }
  auto r = t.result("voip", "call_outcomes");
  if (r.status == AuditStatus::Pass) {
    r.detail = fmt::format("{} calls, {} conflicts, {} conflict alerts at backend", net.voip().calls().size(), conflicts,
                           conflict_alerts.size());
  }
  return r;
}

// ---- netmon ----

inline AuditResult audit_netmon_sequence(const Network& net) {
  detail::Tally t;
  auto& backend = net.backend();
  for (const auto& [id, _] : net.nodes()) {
    auto samples = backend.samples_of(id);
    for (std::size_t i = 1; i < samples.size(); ++i) {
      t.check(samples[i].seq > samples[i - 1].seq && samples[i].at >= samples[i - 1].at,
              [&] { return fmt::format("agent {} seq {} out of order", id.value, samples[i].seq); });
    }
  }
  return t.result("netmon", "per_agent_order");
}

// Every generated sample is at the backend, still cached, or counted as
// dropped by cache overflow.
inline AuditResult audit_netmon_accounting(Network& net) {
  detail::Tally t;
  for (const auto& [id, _] : net.nodes()) {
    auto st = net.netmon().stats(id);
    std::set<std::uint64_t> seqs;
    for (const auto& s : net.backend().samples_of(id)) seqs.insert(s.seq);
    for (const auto& s : net.netmon().cache(id)) seqs.insert(s.seq);
    auto present = seqs.size();
    t.check(present <= st.generated && st.generated - present <= st.dropped, [&] {
      return fmt::format("agent {}: generated {} present {} dropped {}", id.value, st.generated, present, st.dropped);
    });
  }
  return t.result("netmon", "sample_accounting");
}

// ---- shield ----

inline AuditResult audit_shield_soundness(const Network& net) {
  detail::Tally t;
  const auto& log = net.engine().log();
  for (const auto* r : log.of_kind("shield_transit")) {
    const auto& d = r->data;
    if (d["direction"] != "to_device" || d["mode"] == "Open") continue;
    if (d["verdict"] != "Pass") continue;
    bool unshielded_ok = d["policy"] == "AllowUnshieldedLan" && !d["tagged"].get<bool>();
    t.check(d["tagged"].get<bool>() || unshielded_ok,
            [&] { return fmt::format("frame {} passed {} untagged", d["frame"].get<std::uint64_t>(), d["shield"].get<std::string>()); });
  }
  for (const auto* r : log.of_kind("lan_inject_result")) {
    const auto& d = r->data;
    if (d["mode"] == "Open") continue;
    if (d["tag"] == "none" && d["policy"] == "AllowUnshieldedLan") continue;
    t.check(d["verdict"] == "Drop", [&] {
      return fmt::format("{} injection reached {}", d["tag"].get<std::string>(), d["shield"].get<std::string>());
    });
    if (d["tag"] == "replay") {
      t.check(d["reason"] == "Replay", [&] { return std::string("replay dropped for the wrong reason"); });
    }
  }
  return t.result("shield", "soundness");
}

inline AuditResult audit_shield_completeness(const Network& net) {
  detail::Tally t;
  for (const auto* r : net.engine().log().of_kind("shield_transit")) {
    const auto& d = r->data;
    if (!d["peer_tagged"].get<bool>()) continue;
    t.check(d["verdict"] == "Pass",
            [&] { return fmt::format("tagged frame {} dropped", d["frame"].get<std::uint64_t>()); });
  }
  return t.result("shield", "completeness");
}

inline AuditResult audit_shield_open(const Network& net) {
  detail::Tally t;
  for (const auto* r : net.engine().log().of_kind("shield_transit")) {
    const auto& d = r->data;
    if (d["mode"] != "Open") continue;
    t.check(d["verdict"] == "Pass" && d["in_hash"] == d["out_hash"],
            [&] { return fmt::format("open shield altered frame {}", d["frame"].get<std::uint64_t>()); });
  }
  return t.result("shield", "open_mode_transparent");
}

// ---- harness ----

inline AuditResult audit_completeness(const Network& net) {
  detail::Tally t;
  const auto& log = net.engine().log();
  auto logged = log.of_kind("scenario_event").size();
  t.check(logged == net.counters().events,
          [&] { return fmt::format("{} events logged, {} executed", logged, net.counters().events); });
  for (const auto* r : log.of_kind("event_rejected")) {
    t.check(!r->data["error"].get<std::string>().empty(), [] { return std::string("rejection without error code"); });
  }
  return t.result("harness", "event_completeness");
}

inline std::vector<AuditResult> run_audits(Network& net) {
  return {audit_log_order(net),         audit_frame_timing(net),       audit_routes(net),
          audit_multicast_once(net),    audit_isolation(net),          audit_injection(net),
          audit_phase_demotions(net),   audit_phase4_configured(net),  audit_dns_latency(net),
          audit_calls(net),             audit_netmon_sequence(net),    audit_netmon_accounting(net),
          audit_shield_soundness(net),  audit_shield_completeness(net), audit_shield_open(net),
          audit_completeness(net)};
}

}  // namespace phoenix::harness
