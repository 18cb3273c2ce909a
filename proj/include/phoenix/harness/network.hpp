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
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phoenix/config/phase.hpp"
#include "phoenix/config/synth.hpp"
#include "phoenix/dns/dns_service.hpp"
#include "phoenix/harness/scenario.hpp"
#include "phoenix/netmon/agent.hpp"
#include "phoenix/overlay/overlay_frame.hpp"
#include "phoenix/shield/ethershield.hpp"
#include "phoenix/voip/voip.hpp"

namespace phoenix::harness {

using overlay::EnvironmentKey;
using overlay::VlanType;

struct NetworkOptions {
  mesh::MeshConfig mesh;
  dns::DnsConfig dns;
  voip::VoipConfig voip;
  netmon::NetmonConfig netmon;
  std::int64_t slow_threshold_kbps{sim::kDefaultSlowLinkKbps};

  static NetworkOptions from_json(const nlohmann::json& j) {
    NetworkOptions o;
    auto num = [](const nlohmann::json& obj, const char* key, auto& out) {
      if (obj.is_object() && obj.contains(key)) out = obj[key].get<std::decay_t<decltype(out)>>();
    };
    if (j.contains("mesh")) {
      const auto& m = j["mesh"];
      num(m, "hello_interval_ms", o.mesh.hello_interval_ms);
      num(m, "hold_time_ms", o.mesh.hold_time_ms);
      num(m, "flood_interval_ms", o.mesh.flood_interval_ms);
      num(m, "topology_hold_ms", o.mesh.topology_hold_ms);
      num(m, "default_ttl", o.mesh.default_ttl);
    }
    if (j.contains("dns")) {
      const auto& d = j["dns"];
      num(d, "query_timeout_ms", o.dns.query_timeout_ms);
      num(d, "gather_window_ms", o.dns.gather_window_ms);
      num(d, "publish_interval_ms", o.dns.publish_interval_ms);
    }
    if (j.contains("voip")) {
      const auto& v = j["voip"];
      num(v, "registration_ttl_ms", o.voip.registration_ttl_ms);
      num(v, "refresh_interval_ms", o.voip.refresh_interval_ms);
      num(v, "signal_timeout_ms", o.voip.signal_timeout_ms);
    }
    if (j.contains("netmon")) {
      const auto& n = j["netmon"];
      num(n, "scan_interval_ms", o.netmon.scan_interval_ms);
      num(n, "link_stat_interval_ms", o.netmon.link_stat_interval_ms);
      num(n, "cache_capacity", o.netmon.cache_capacity);
      num(n, "retransmit_ms", o.netmon.retransmit_ms);
      num(n, "window", o.netmon.window);
      num(n, "dedup_window_ms", o.netmon.dedup_window_ms);
      num(n, "probe_ports", o.netmon.probe_ports);
    }
    num(j, "slow_threshold_kbps", o.slow_threshold_kbps);
    o.voip.slow_threshold_kbps = o.slow_threshold_kbps;
    return o;
  }
};

// Outcome of one action, whether scheduled or submitted through the API.
struct Ack {
  bool accepted{true};
  std::string error;
  std::string message;
  nlohmann::json result = nlohmann::json::object();
};

inline void to_json(nlohmann::json& j, const Ack& a) {
  j = {{"accepted", a.accepted}, {"result", a.result}};
  if (!a.accepted) {
    j["error"] = a.error;
    j["message"] = a.message;
  }
}

struct DeviceInfo {
  DeviceId id;
  NodeId node;
  EnvironmentKey env;
  std::uint32_t address{0};
  std::vector<std::uint16_t> services;
  bool compromised{false};
  bool quarantined{false};
};

struct Counters {
  std::uint64_t frames_sent{0};
  std::uint64_t deliveries{0};
  std::uint64_t drops{0};
  std::uint64_t injections{0};
  std::uint64_t events{0};
  std::uint64_t rejected{0};
};

inline constexpr std::string_view kAttacker = "attacker";

class Network {
 public:
  struct NodeRuntime {
    NodeSpec spec;
    std::size_t index{0};
    std::optional<config::NodeConfig> config;
    std::vector<overlay::NetworkEnvironment> environments;
    shield::CredentialStore creds;
    // Mode the node last activated per shield; decides whether it tags.
    std::map<std::string, shield::Mode> shield_modes;
    int phase{1};
    std::vector<std::pair<SimTime, int>> phase_history;
    std::map<EnvironmentKey, std::uint32_t> next_host;

    overlay::NetworkEnvironment* environment(const EnvironmentKey& k) {
      for (auto& e : environments) {
        if (e.key == k) return &e;
      }
      return nullptr;
    }
  };

  struct ShieldRuntime {
    shield::ShieldState state;
    NodeId lan_node;
    std::optional<shield::LanFrame> last_peer_frame;
  };

  explicit Network(std::uint64_t seed, NetworkOptions options = {})
      : options_(options),
        engine_(seed),
        medium_(engine_),
        mesh_(engine_, medium_, options_.mesh),
        dns_(engine_, mesh_, options_.dns),
        voip_(engine_, medium_, mesh_, dns_, directory_, options_.voip),
        netmon_(engine_, medium_, mesh_, dns_, directory_, backend_, options_.netmon) {
    medium_.set_receiver(
        [this](NodeId to, NodeId from, LinkId link, const sim::Packet& p) { mesh_.handle_frame(to, from, link, p); });
    mesh_.on_app(mesh::AppKind::Overlay,
                 [this](NodeId at, NodeId origin, const Bytes& d) { on_overlay(at, origin, d); });
    mesh_.on_routes_changed([this](NodeId n) {
      phase_dirty_.insert(n);
      engine_.schedule_after(0, [this, n]() { netmon_.routes_changed(n); });
    });
    mesh_.on_config_learned([this](NodeId n) { phase_dirty_.insert(n); });
    engine_.on_scenario_event([this](const sim::ScenarioEvent& ev) { execute(ev); });
    engine_.on_after_event([this]() { update_phases(); });
    voip_.set_host_info([this](NodeId n) -> std::optional<voip::VoipHost> {
      auto it = nodes_.find(n);
      if (it == nodes_.end() || !it->second.config) return std::nullopt;
      const auto& c = *it->second.config;
      return voip::VoipHost{c.environment(VlanType::Voip) != nullptr, c.dial_prefix};
    });
    voip_.on_alert([this](NodeId at, std::string_view kind, const nlohmann::json& detail) {
      netmon_.ingest_ids_event(at, kind, detail.value("number", std::string()), VlanType::Voip, detail);
    });
    netmon_.set_scan_source([this](NodeId n) { return scan_view(n); });
    netmon_.set_phase_source([this](NodeId n) { return phase(n); });
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  // Builds a world from a scenario; `model` and `seed` override the file.
  static std::unique_ptr<Network> from_scenario(const Scenario& s,
                                                std::optional<config::DeploymentModel> model = std::nullopt,
                                                std::optional<std::uint64_t> seed = std::nullopt) {
    auto net = std::make_unique<Network>(seed.value_or(s.seed), NetworkOptions::from_json(s.config));
    auto m = model ? model : s.model;
    if (m) net->set_model(*m);
    for (const auto& n : s.nodes) net->add_node(n);
    if (m) {
      for (const auto& l : m->links) {
        net->add_link(LinkDecl{l.a, l.b, l.latency_ms, l.bandwidth_kbps, l.loss_rate, l.kind, true, 0});
      }
    }
    for (const auto& l : s.links) net->add_link(l);
    for (const auto& sh : s.shields) net->declare_shield(sh);
    for (const auto& [id, numbers] : s.groups) net->voip().define_group(id, numbers);
    net->scenario_name_ = s.name;
    net->start();
    for (const auto& ev : s.events) net->engine().schedule(ev);
    return net;
  }

  // ---- construction ----

  void set_model(config::DeploymentModel model) {
    library_ = config::synthesize(model);
    model_ = std::move(model);
  }

  NodeId add_node(NodeSpec spec) {
    if (started_) throw Error(Errc::InvalidArgument, "nodes are fixed once the network has started");
    if (spec.id.value == 0) spec.id = NodeId{nodes_.size() + 1};
    if (nodes_.size() >= 254) throw Error(Errc::ModelBounds, "at most 254 nodes");
    directory_.add(spec.id, spec.name);
    NodeRuntime rt;
    rt.spec = spec;
    rt.index = nodes_.size() + 1;
    overlay::NetworkEnvironment mgmt;
    mgmt.key = EnvironmentKey{overlay::kSharedUtility, VlanType::Management};
    mgmt.vni = overlay::kManagementVni;
    mgmt.subnet = overlay::Subnet{(10u << 24) | (255u << 16) | (static_cast<std::uint32_t>(rt.index) << 8), 24};
    auto svc = config::services_for(VlanType::Management);
    mgmt.services = {svc.begin(), svc.end()};
    rt.environments.push_back(std::move(mgmt));
    nodes_.emplace(spec.id, std::move(rt));
    mesh_.add_node(spec.id);
    dns_.add_node(spec.id);
    netmon_.add_agent(spec.id);
    if (spec.control_center) control_centers_.insert(spec.id);
    return spec.id;
  }

  LinkId add_link(const LinkDecl& d) {
    auto spec = sim::make_link(require_node(d.a), require_node(d.b), d.latency_ms, d.bandwidth_kbps, d.loss_rate,
                               options_.slow_threshold_kbps);
    spec.kind = d.kind == "control" ? sim::LinkKind::Control : sim::LinkKind::Mesh;
    spec.up = d.up;
    spec.interface_index = d.interface_index;
    return medium_.add_link(spec);
  }

  void declare_shield(const ShieldDecl& d) {
    if (shields_.count(d.id) != 0) throw Error(Errc::DuplicateName, fmt::format("shield {}", d.id));
    ShieldRuntime rt{shield::make_shield(d.id, d.device), d.node.empty() ? NodeId{} : require_node(d.node), {}};
    shields_.emplace(d.id, std::move(rt));
  }

  void start() {
    if (started_) return;
    started_ = true;
    for (auto& [id, rt] : nodes_) {
      if (rt.spec.powered) {
        power_on(id);
      } else {
        medium_.set_node_powered(id, false);
      }
    }
    for (auto& [id, rt] : nodes_) {
      rt.phase = compute_phase(id);
      rt.phase_history.push_back({engine_.now(), rt.phase});
    }
  }

  void run_until(SimTime t) { engine_.advance_to(t); }

  // ---- actions ----

  // Applies an action now and logs a rejection.
  Ack execute(const sim::ScenarioEvent& ev) {
    ++counters_.events;
    Ack ack = apply(ev);
    if (!ack.accepted) {
      ++counters_.rejected;
      engine_.log().append(engine_.now(), "event_rejected",
                           {{"event", std::string(to_string(ev.kind))}, {"error", ack.error}, {"message", ack.message}});
    }
    if (sim::removes_capability(ev.kind)) last_removal_ = engine_.now();
    return ack;
  }

  // Entry point for externally submitted actions: stamped with the current
  // time and logged like a scheduled event.
  Ack submit(sim::ScenarioEvent ev) {
    ev.at = engine_.now();
    nlohmann::json data = ev.payload;
    data["event"] = std::string(to_string(ev.kind));
    data["source"] = "api";
    engine_.log().append(engine_.now(), "scenario_event", std::move(data));
    auto ack = execute(ev);
    update_phases();
    return ack;
  }

  Ack apply(const sim::ScenarioEvent& ev) {
    Ack ack;
    try {
      ack.result = dispatch(ev);
    } catch (const Error& e) {
      ack.accepted = false;
      ack.error = std::string(to_string(e.code()));
      ack.message = e.what();
    } catch (const nlohmann::json::exception& e) {
      ack.accepted = false;
      ack.error = std::string(to_string(Errc::InvalidArgument));
      ack.message = e.what();
    }
    return ack;
  }

  // ---- accessors ----

  sim::Engine& engine() { return engine_; }
  const sim::Engine& engine() const { return engine_; }
  sim::Medium& medium() { return medium_; }
  const sim::Medium& medium() const { return medium_; }
  mesh::Mesh& mesh() { return mesh_; }
  const mesh::Mesh& mesh() const { return mesh_; }
  dns::DnsService& dns() { return dns_; }
  voip::Voip& voip() { return voip_; }
  netmon::NetmonService& netmon() { return netmon_; }
  netmon::Backend& backend() { return backend_; }
  const netmon::Backend& backend() const { return backend_; }
  const NodeDirectory& directory() const { return directory_; }
  const NetworkOptions& options() const { return options_; }
  const std::optional<config::DeploymentModel>& model() const { return model_; }
  const std::optional<config::ConfigLibrary>& library() const { return library_; }
  const std::map<NodeId, NodeRuntime>& nodes() const { return nodes_; }
  const NodeRuntime& node(NodeId n) const { return runtime(n); }
  const std::map<DeviceId, DeviceInfo>& devices() const { return devices_; }
  const std::map<std::string, ShieldRuntime>& shields() const { return shields_; }
  const std::set<NodeId>& control_centers() const { return control_centers_; }
  const Counters& counters() const { return counters_; }
  const std::string& scenario_name() const { return scenario_name_; }
  SimTime now() const { return engine_.now(); }

  NodeId id(std::string_view name) const { return require_node(name); }
  int phase(NodeId n) const { return runtime(n).phase; }

  std::string utility_name(std::uint16_t index) const {
    if (index == overlay::kSharedUtility) return "shared";
    if (model_ && index < model_->utilities.size()) return model_->utilities[index].name;
    return fmt::format("u{}", index);
  }

  std::string env_label(const EnvironmentKey& k) const {
    if (k.vlan == VlanType::Management) return "Management";
    return fmt::format("{}/{}", utility_name(k.utility), to_string(k.vlan));
  }

  nlohmann::json environments_json(NodeId n) const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : runtime(n).environments) {
      out.push_back({{"environment", env_label(e.key)},
                     {"vni", e.vni.value},
                     {"subnet", e.subnet.to_string()},
                     {"devices", std::vector<std::string>(e.attached_devices.begin(), e.attached_devices.end())},
                     {"services", std::vector<std::string>(e.services.begin(), e.services.end())}});
    }
    return out;
  }

 private:
  // ---- helpers ----

  NodeRuntime& runtime(NodeId n) {
    auto it = nodes_.find(n);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, fmt::format("node {}", n.value));
    return it->second;
  }
  const NodeRuntime& runtime(NodeId n) const {
    auto it = nodes_.find(n);
    if (it == nodes_.end()) throw Error(Errc::UnknownNode, fmt::format("node {}", n.value));
    return it->second;
  }

  NodeId require_node(std::string_view name) const {
    auto id = directory_.find(name);
    if (!id) throw Error(Errc::UnknownNode, fmt::format("no node named '{}'", name));
    return *id;
  }

  static std::string str(const nlohmann::json& p, const char* key) {
    if (!p.contains(key) || !p[key].is_string()) {
      throw Error(Errc::InvalidArgument, fmt::format("missing string field '{}'", key));
    }
    return p[key].get<std::string>();
  }

  static std::string str_or(const nlohmann::json& p, const char* key, std::string fallback) {
    return p.contains(key) && p[key].is_string() ? p[key].get<std::string>() : std::move(fallback);
  }

  NodeId node_field(const nlohmann::json& p, const char* key = "node") const { return require_node(str(p, key)); }

  DeviceInfo& device(const std::string& id) {
    auto it = devices_.find(id);
    if (it == devices_.end()) throw Error(Errc::UnknownDevice, fmt::format("device '{}'", id));
    return it->second;
  }

  ShieldRuntime* shield_of(const DeviceId& d) {
    for (auto& [_, s] : shields_) {
      if (s.state.protected_device == d) return &s;
    }
    return nullptr;
  }

  crypto::Key random_key() {
    crypto::Key k{};
    for (std::size_t i = 0; i < k.size(); i += 8) {
      auto v = engine_.rng().next();
      for (std::size_t b = 0; b < 8; ++b) k[i + b] = static_cast<std::uint8_t>(v >> (8 * b));
    }
    return k;
  }

  void alert(NodeId n, std::string_view kind, std::string_view subject, VlanType vlan, nlohmann::json detail = {}) {
    if (!mesh_.powered(n)) return;
    netmon_.ingest_ids_event(n, kind, subject, vlan, detail.is_null() ? nlohmann::json::object() : std::move(detail));
  }

  // ---- power and phases ----

  void power_on(NodeId n) {
    mesh_.power_on(n);
    dns_.node_up(n);
    if (control_centers_.count(n) != 0 && !netmon_.backend_node()) {
      netmon_.host_backend(n);
      dns_.register_record(n, {netmon_.backend_host(n), dns::RrType::A, 0,
                               overlay::ip_to_string(runtime(n).environments.front().gateway()), n});
    }
    netmon_.start(n);
    phase_dirty_.insert(n);
    engine_.log().append(engine_.now(), "node_up", {{"node", n.value}});
  }

  void power_off(NodeId n) {
    netmon_.stop(n);
    dns_.node_down(n);
    mesh_.power_off(n);
    phase_dirty_.insert(n);
    engine_.log().append(engine_.now(), "node_down", {{"node", n.value}});
  }

  int compute_phase(NodeId n) const {
    const auto& rt = runtime(n);
    std::optional<mesh::ConfigKey> key;
    std::size_t substations = 0;
    if (rt.config) {
      key = mesh::ConfigKey{rt.config->utility_index, rt.config->substation};
      if (model_ && rt.config->utility_index < model_->utilities.size()) {
        substations = model_->utilities[rt.config->utility_index].substations;
      }
    }
    return config::formation_phase(config::phase_inputs(mesh_, medium_, n, control_centers_, key, substations));
  }

  void update_phases() {
    if (phase_dirty_.empty()) return;
    auto dirty = std::move(phase_dirty_);
    phase_dirty_.clear();
    for (auto n : dirty) {
      auto& rt = runtime(n);
      int p = compute_phase(n);
      if (p == rt.phase) continue;
      engine_.log().append(engine_.now(), "phase_change", {{"node", n.value}, {"from", rt.phase}, {"to", p}});
      rt.phase = p;
      rt.phase_history.push_back({engine_.now(), p});
    }
  }

  // ---- scanning ----

  std::vector<netmon::ScanEnvironment> scan_view(NodeId n) const {
    std::vector<netmon::ScanEnvironment> out;
    for (const auto& e : runtime(n).environments) {
      netmon::ScanEnvironment se{e.key.vlan, e.subnet, {}};
      for (const auto& d : e.attached_devices) {
        const auto& info = devices_.at(d);
        se.devices.push_back({d, info.address, info.services});
      }
      out.push_back(std::move(se));
    }
    return out;
  }

  // ---- frame path ----

  // Inner payload carries a small trace header ahead of the device bytes.
  static Bytes frame_payload(std::uint64_t fid, std::uint16_t ethertype, bool injected, const Bytes& body) {
    ByteWriter w;
    w.u64(fid).u16(ethertype).u8(injected ? 1 : 0).bytes(body);
    return std::move(w).take();
  }

  struct Traced {
    std::uint64_t fid{0};
    std::uint16_t ethertype{shield::kEtherTypeIpv4};
    bool injected{true};
    Bytes body;
  };

  static Traced read_payload(const Bytes& b) {
    Traced t;
    if (b.size() < 11) {
      t.body = b;
      return t;
    }
    ByteReader r(b);
    t.fid = r.u64();
    t.ethertype = r.u16();
    t.injected = r.u8() != 0;
    auto rest = r.rest();
    t.body.assign(rest.begin(), rest.end());
    return t;
  }

  nlohmann::json env_json(const EnvironmentKey& k) const {
    return {{"utility", k.utility}, {"vlan", std::string(to_string(k.vlan))}};
  }

  void log_drop(std::string_view kind, nlohmann::json data) {
    ++counters_.drops;
    engine_.log().append(engine_.now(), std::string(kind), std::move(data));
  }

  nlohmann::json send_frame(const nlohmann::json& p) {
    auto src = str(p, "from");
    auto dst = str(p, "to");
    auto& info = device(src);
    Bytes body = to_bytes(str_or(p, "payload", ""));
    auto ethertype = p.value("ethertype", static_cast<int>(shield::kEtherTypeIpv4));
    auto size = p.value("size", static_cast<std::uint32_t>(std::max<std::size_t>(body.size(), 64)));
    auto fid = ++next_frame_;
    ++counters_.frames_sent;
    NodeId at = info.node;
    if (info.quarantined) {
      log_drop("frame_drop", {{"frame", fid}, {"node", at.value}, {"device", src}, {"reason", "quarantined"}});
      return {{"frame", fid}, {"status", "quarantined"}};
    }
    engine_.log().append(engine_.now(), "frame_send",
                         {{"frame", fid}, {"node", at.value}, {"src", src}, {"dst", dst}, {"env", env_json(info.env)}});
    shield::LanFrame lf{src, dst, static_cast<std::uint16_t>(ethertype), body, true, std::nullopt};
    if (auto* sh = shield_of(src); sh && sh->lan_node == at) {
      auto [next, r] = shield::filter_frame(sh->state, lf, shield::Direction::FromDevice);
      log_transit(*sh, shield::Direction::FromDevice, lf, r, false, fid);
      sh->state = std::move(next);
      if (r.verdict == shield::Verdict::Divert) {
        engine_.log().append(engine_.now(), "shield_divert", {{"frame", fid}, {"shield", sh->state.id}});
        return {{"frame", fid}, {"status", "diverted"}};
      }
      if (r.verdict == shield::Verdict::PassAugmented) {
        auto& creds = runtime(at).creds;
        if (!creds.contains(sh->state.id) || !creds.verify(r.frame)) {
          log_drop("frame_drop", {{"frame", fid}, {"node", at.value}, {"device", src}, {"reason", "bad_shield_tag"}});
          return {{"frame", fid}, {"status", "dropped"}};
        }
        r.frame.tag.reset();
      }
      lf = r.frame;
    }
    auto& rt = runtime(at);
    auto* env = rt.environment(info.env);
    if (env == nullptr) throw Error(Errc::NotAttached, fmt::format("device '{}' has no environment", src));
    overlay::InnerFrame inner =
        overlay::InnerFrame::make(src, dst, frame_payload(fid, lf.ethertype, false, lf.payload), size);

    std::set<NodeId> remote;
    if (dst == overlay::kBroadcastDevice) {
      deliver_local(at, *env, inner, at);
      if (info.env.vlan != VlanType::Management) {
        for (const auto& [origin, adv] : mesh_.lsdb(at).advertisements()) {
          if (origin != at && adv.config.utility_index == info.env.utility && mesh_.reachable(at, origin)) {
            remote.insert(origin);
          }
        }
      }
    } else {
      auto it = devices_.find(dst);
      if (it == devices_.end()) {
        log_drop("frame_drop", {{"frame", fid}, {"node", at.value}, {"device", src}, {"reason", "unknown_destination"}});
        return {{"frame", fid}, {"status", "dropped"}};
      }
      if (it->second.node == at) {
        deliver_local(at, *env, inner, at);
        return {{"frame", fid}, {"status", "local"}};
      }
      if (info.env.vlan == VlanType::Management) {
        log_drop("frame_drop", {{"frame", fid}, {"node", at.value}, {"device", src}, {"reason", "management_is_local"}});
        return {{"frame", fid}, {"status", "dropped"}};
      }
      remote.insert(it->second.node);
    }
    for (auto dst_node : remote) {
      auto frame = overlay::encapsulate(inner, *env, at, dst_node);
      bool sent = mesh_.send_unicast(at, dst_node, mesh::AppKind::Overlay, overlay::encode(frame), frame.size());
      if (!sent) {
        log_drop("frame_drop", {{"frame", fid}, {"node", at.value}, {"to", dst_node.value}, {"reason", "no_route"}});
      }
    }
    return {{"frame", fid}, {"status", "sent"}, {"remote", remote.size()}};
  }

  // Same-node delivery never leaves the node; it is decapsulated against the
  // node's own environments like any overlay frame.
  void deliver_local(NodeId at, const overlay::NetworkEnvironment& env, const overlay::InnerFrame& inner, NodeId src) {
    overlay::OverlayFrame f{env.vni, src, at, inner};
    deliver_overlay(at, f);
  }

  void on_overlay(NodeId at, NodeId origin, const Bytes& data) {
    overlay::OverlayFrame f;
    try {
      f = overlay::decode(data);
    } catch (const Error& e) {
      log_drop("overlay_drop", {{"node", at.value}, {"origin", origin.value}, {"reason", "Malformed"}});
      return;
    }
    deliver_overlay(at, f);
  }

  void deliver_overlay(NodeId at, const overlay::OverlayFrame& f) {
    auto& rt = runtime(at);
    auto traced = read_payload(f.inner.payload);
    overlay::Delivery d;
    try {
      d = overlay::decapsulate_deliver(f, rt.environments);
    } catch (const Error& e) {
      if (e.code() != Errc::UnknownVni) throw;
      log_drop("overlay_drop", {{"node", at.value},
                                {"frame", traced.fid},
                                {"vni", f.vni.value},
                                {"src_node", f.src_node.value},
                                {"reason", "UnknownVni"},
                                {"inner_hash", overlay::inner_hash(f.inner)}});
      alert(at, "unknown_vni", fmt::format("vni-{}", f.vni.value), VlanType::Management,
            {{"vni", f.vni.value}, {"src_node", f.src_node.value}});
      return;
    }
    if (d.devices.empty()) {
      if (f.inner.dst_device == overlay::kBroadcastDevice) return;
      log_drop("frame_drop", {{"frame", traced.fid},
                              {"node", at.value},
                              {"device", f.inner.dst_device},
                              {"reason", "not_in_environment"},
                              {"env", env_json(d.environment)}});
      return;
    }
    bool same_lan = f.src_node == at;
    for (const auto& dev : d.devices) {
      shield::LanFrame lf{f.inner.src_device, dev, traced.ethertype, traced.body, same_lan, std::nullopt};
      to_device(at, d.environment, lf, traced.fid, traced.injected);
    }
  }

  void log_transit(const ShieldRuntime& sh, shield::Direction dir, const shield::LanFrame& in,
                   const shield::FilterResult& r, bool peer_tagged, std::uint64_t fid) {
    bool dropped = r.verdict == shield::Verdict::Drop || r.verdict == shield::Verdict::Divert;
    engine_.log().append(
        engine_.now(), "shield_transit",
        {{"frame", fid},
         {"shield", sh.state.id},
         {"direction", dir == shield::Direction::ToDevice ? "to_device" : "from_device"},
         {"mode", std::string(shield::to_string(sh.state.mode))},
         {"policy", std::string(shield::to_string(sh.state.policy))},
         {"verdict", std::string(shield::to_string(r.verdict))},
         {"reason", std::string(shield::to_string(r.reason))},
         {"tagged", in.tag.has_value()},
         {"peer_tagged", peer_tagged},
         {"in_hash", crypto::sha256_hex(shield::wire_bytes(in)).substr(0, 16)},
         {"out_hash", dropped ? std::string() : crypto::sha256_hex(shield::wire_bytes(r.frame)).substr(0, 16)}});
  }

  // Final hop onto the LAN. A paired node tags frames it forwards to a
  // shielded device it has switched to a secure mode.
  void to_device(NodeId at, const EnvironmentKey& env, shield::LanFrame lf, std::uint64_t fid, bool injected,
                 std::string_view inject_kind = {}) {
    const auto dev = lf.dst_device;
    bool authenticated = false;
    std::string shield_id;
    std::string mode = "none";
    std::string policy;
    if (auto* sh = shield_of(dev); sh && sh->lan_node == at) {
      shield_id = sh->state.id;
      auto& rt = runtime(at);
      bool peer_tagged = false;
      if (!lf.from_lan && inject_kind.empty() && rt.creds.contains(shield_id)) {
        auto m = rt.shield_modes.find(shield_id);
        if (m != rt.shield_modes.end() && m->second != shield::Mode::Open) {
          lf = rt.creds.tag(shield_id, std::move(lf));
          sh->last_peer_frame = lf;
          peer_tagged = true;
        }
      }
      mode = std::string(shield::to_string(sh->state.mode));
      policy = std::string(shield::to_string(sh->state.policy));
      auto [next, r] = shield::filter_frame(sh->state, lf, shield::Direction::ToDevice);
      log_transit(*sh, shield::Direction::ToDevice, lf, r, peer_tagged, fid);
      sh->state = std::move(next);
      if (!inject_kind.empty()) {
        engine_.log().append(engine_.now(), "lan_inject_result",
                             {{"frame", fid},
                              {"shield", shield_id},
                              {"tag", std::string(inject_kind)},
                              {"mode", mode},
                              {"policy", policy},
                              {"verdict", std::string(shield::to_string(r.verdict))},
                              {"reason", std::string(shield::to_string(r.reason))}});
      }
      if (r.verdict == shield::Verdict::Drop) {
        log_drop("shield_drop", {{"frame", fid},
                                 {"shield", shield_id},
                                 {"device", dev},
                                 {"reason", std::string(shield::to_string(r.reason))},
                                 {"peer_tagged", peer_tagged},
                                 {"injected", injected}});
        alert(at, "shield_drop", shield_id, env.vlan, {{"reason", std::string(shield::to_string(r.reason))}});
        return;
      }
      if (r.verdict == shield::Verdict::Divert) {
        engine_.log().append(engine_.now(), "shield_divert", {{"frame", fid}, {"shield", shield_id}});
        return;
      }
      authenticated = sh->state.secure() && lf.tag.has_value();
      lf = r.frame;
    }
    ++counters_.deliveries;
    nlohmann::json src_env = nullptr;
    if (auto it = devices_.find(lf.src_device); it != devices_.end()) src_env = env_json(it->second.env);
    engine_.log().append(engine_.now(), "device_deliver",
                         {{"frame", fid},
                          {"node", at.value},
                          {"device", dev},
                          {"src_device", lf.src_device},
                          {"src_env", src_env},
                          {"dst_env", env_json(env)},
                          {"injected", injected},
                          {"shield", shield_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(shield_id)},
                          {"shield_mode", mode},
                          {"authenticated", authenticated},
                          {"payload_hash", crypto::sha256_hex(lf.payload).substr(0, 16)}});
  }

  nlohmann::json inject_overlay(const nlohmann::json& p) {
    NodeId from = node_field(p);
    NodeId to = p.contains("to") ? node_field(p, "to") : from;
    std::uint32_t vni = p.at("vni").get<std::uint32_t>();
    if (vni > overlay::kMaxVni) throw Error(Errc::InvalidArgument, "VNI exceeds 24 bits");
    auto fid = ++next_frame_;
    ++counters_.injections;
    Bytes body = to_bytes(str_or(p, "payload", "injected"));
    overlay::InnerFrame inner = overlay::InnerFrame::make(str_or(p, "src_device", std::string(kAttacker)),
                                                          str_or(p, "dst_device", "*"),
                                                          frame_payload(fid, shield::kEtherTypeIpv4, true, body));
    overlay::OverlayFrame f{overlay::Vni{vni}, from, to, inner};
    engine_.log().append(engine_.now(), "overlay_inject",
                         {{"frame", fid},
                          {"from", from.value},
                          {"to", to.value},
                          {"vni", vni},
                          {"inner_hash", overlay::inner_hash(inner)}});
    if (from == to) {
      engine_.schedule_after(0, [this, to, f]() { deliver_overlay(to, f); });
    } else if (!mesh_.send_unicast(from, to, mesh::AppKind::Overlay, overlay::encode(f), f.size())) {
      log_drop("frame_drop", {{"frame", fid}, {"node", from.value}, {"to", to.value}, {"reason", "no_route"}});
    }
    return {{"frame", fid}};
  }

  nlohmann::json inject_lan(const nlohmann::json& p) {
    auto dev = str(p, "device");
    auto& info = device(dev);
    auto kind = str_or(p, "tag", "none");
    auto fid = ++next_frame_;
    ++counters_.injections;
    shield::LanFrame lf{str_or(p, "src_device", std::string(kAttacker)), dev, shield::kEtherTypeIpv4,
                        to_bytes(str_or(p, "payload", "injected")), true, std::nullopt};
    auto* sh = shield_of(dev);
    if (kind == "replay") {
      if (sh == nullptr || !sh->last_peer_frame) {
        throw Error(Errc::InvalidArgument, fmt::format("no captured frame to replay toward '{}'", dev));
      }
      lf = *sh->last_peer_frame;
    } else if (kind == "forged") {
      std::string sid = sh ? sh->state.id : "unknown";
      std::uint64_t seq = sh ? sh->state.rx_seq + 1 : 1;
      lf.tag = shield::AuthTag{sid, seq, shield::tag_mac(random_key(), lf, seq, sid)};
    } else if (kind != "none") {
      throw Error(Errc::InvalidArgument, fmt::format("unknown tag kind '{}'", kind));
    }
    engine_.log().append(engine_.now(), "lan_inject", {{"frame", fid}, {"device", dev}, {"tag", kind}});
    to_device(info.node, info.env, lf, fid, true, kind);
    return {{"frame", fid}};
  }

  // ---- dispatch ----

  nlohmann::json dispatch(const sim::ScenarioEvent& ev) {
    using sim::EventKind;
    const auto& p = ev.payload;
    switch (ev.kind) {
      case EventKind::NodeJoin: {
        auto n = node_field(p);
        if (!mesh_.powered(n)) power_on(n);
        return {};
      }
      case EventKind::NodeLeave: {
        auto n = node_field(p);
        if (mesh_.powered(n)) power_off(n);
        return {};
      }
      case EventKind::LinkUp:
      case EventKind::LinkDown: {
        LinkId link = 0;
        if (p.contains("link")) {
          link = p["link"].get<LinkId>();
          if (link >= medium_.links().size()) throw Error(Errc::InvalidArgument, fmt::format("no link {}", link));
        } else {
          auto a = node_field(p, "a");
          auto b = node_field(p, "b");
          auto found = medium_.find_link(a, b);
          if (!found) throw Error(Errc::InvalidArgument, fmt::format("no link {}-{}", str(p, "a"), str(p, "b")));
          link = *found;
        }
        medium_.set_up(link, ev.kind == EventKind::LinkUp);
        phase_dirty_.insert(medium_.link(link).endpoint_a);
        phase_dirty_.insert(medium_.link(link).endpoint_b);
        return {{"link", link}};
      }
      case EventKind::ConfigApply: return config_apply(p);
      case EventKind::DeviceAttach: return attach(p);
      case EventKind::DeviceDetach: {
        auto dev = str(p, "device");
        auto& info = device(dev);
        if (auto* env = runtime(info.node).environment(info.env)) env->attached_devices.erase(dev);
        engine_.log().append(engine_.now(), "device_detach", {{"device", dev}, {"node", info.node.value}});
        devices_.erase(dev);
        return {};
      }
      case EventKind::DeviceCompromise: {
        auto dev = str(p, "device");
        auto& info = device(dev);
        info.compromised = true;
        alert(info.node, "compromise", dev, info.env.vlan, {{"device", dev}});
        return {};
      }
      case EventKind::QuarantineDevice: {
        auto dev = str(p, "device");
        auto& info = device(dev);
        info.quarantined = true;
        engine_.log().append(engine_.now(), "quarantine", {{"device", dev}, {"node", info.node.value}});
        if (mesh_.powered(info.node)) netmon_.clear_alert(info.node, "compromise", dev, info.env.vlan);
        return {};
      }
      case EventKind::RegisterClient: {
        auto n = node_field(p);
        voip::VoipClient c{str(p, "number"), p.contains("home") ? node_field(p, "home") : n,
                           voip::parse_client_kind(str_or(p, "client_kind", "DECT"))};
        auto reg = voip_.register_client(c, n);
        return {{"expires_at", reg.expires_at}};
      }
      case EventKind::PlaceCall: {
        auto n = node_field(p);
        voip_.route_call(n, str(p, "number"), [](const voip::CallAttempt&) {});
        return {};
      }
      case EventKind::RoamClient: {
        auto reg = voip_.roam(str(p, "number"), node_field(p));
        return {{"registrar", reg.registrar.value}};
      }
      case EventKind::SendMessage: {
        voip_.send_message(str(p, "from"), str(p, "to"), str_or(p, "body", ""),
                           [this](const std::vector<voip::MessageReceipt>& rs) {
                             nlohmann::json out = nlohmann::json::array();
                             for (const auto& r : rs) {
                               out.push_back({{"message_id", r.message_id},
                                              {"to", r.to_number},
                                              {"outcome", std::string(voip::to_string(r.outcome))}});
                             }
                             engine_.log().append(engine_.now(), "message_receipts", {{"receipts", out}});
                           });
        return {};
      }
      case EventKind::ShieldPair: return shield_pair(p);
      case EventKind::ShieldActivate: return shield_activate(p);
      case EventKind::AgentPartition: {
        netmon_.partition(node_field(p), p.value("duration_ms", SimTime{0}));
        return {};
      }
      case EventKind::SendFrame: return send_frame(p);
      case EventKind::InjectOverlay: return inject_overlay(p);
      case EventKind::InjectLanFrame: return inject_lan(p);
      case EventKind::AssignHostname: {
        auto dev = str(p, "device");
        auto& info = device(dev);
        auto n = p.contains("node") ? node_field(p) : info.node;
        if (n != info.node) throw Error(Errc::NotAttached, fmt::format("device '{}' is not at that node", dev));
        return {{"name", dns_.assign_hostname(n, dev, info.address)}};
      }
      case EventKind::RegisterRecord: {
        auto n = node_field(p);
        dns::ResourceRecord r{str(p, "name"), dns::parse_rrtype(str(p, "type")), p.value("ttl", 0u), str(p, "rdata"),
                              n};
        dns_.register_record(n, r);
        return {};
      }
      case EventKind::IdsEvent: {
        auto n = node_field(p);
        auto vlan = overlay::parse_vlan(str_or(p, "vlan", "Management"));
        auto s = netmon_.ingest_ids_event(n, str(p, "alert"), str(p, "subject"), vlan,
                                          p.value("detail", nlohmann::json::object()));
        return {{"deduplicated", !s.has_value()}};
      }
    }
    throw Error(Errc::InvalidArgument, "unhandled event kind");
  }

  nlohmann::json config_apply(const nlohmann::json& p) {
    auto n = node_field(p);
    if (!library_) throw Error(Errc::UnknownSubstation, "no deployment model loaded");
    const auto& cfg = library_->resolve(str(p, "utility"), p.at("substation").get<int>());
    auto& rt = runtime(n);
    if (rt.config) {
      if (*rt.config == cfg) return {{"unchanged", true}};
      throw Error(Errc::AlreadyConfigured,
                  fmt::format("{} already runs {}/{}", rt.spec.name, rt.config->utility, rt.config->substation));
    }
    for (const auto& [id, other] : nodes_) {
      if (other.config && other.config->utility == cfg.utility && other.config->substation == cfg.substation) {
        throw Error(Errc::AlreadyConfigured,
                    fmt::format("{}/{} is already served by {}", cfg.utility, cfg.substation, other.spec.name));
      }
    }
    rt.config = cfg;
    for (const auto& e : cfg.environments) {
      overlay::NetworkEnvironment env;
      env.key = EnvironmentKey{cfg.utility_index, e.vlan};
      env.vni = e.vni;
      env.subnet = e.subnet;
      env.services = {e.services.begin(), e.services.end()};
      rt.environments.push_back(std::move(env));
    }
    rt.environments.front().services = {cfg.management_services.begin(), cfg.management_services.end()};
    mesh_.set_config_key(n, mesh::ConfigKey{cfg.utility_index, cfg.substation});
    if (const auto* v = cfg.environment(VlanType::Voip)) {
      dns_.register_record(n, {voip_.registrar_host(n), dns::RrType::A, 0, overlay::ip_to_string(v->subnet.host(0)), n});
      voip_.advertise_registrar(n);
    }
    phase_dirty_.insert(n);
    engine_.log().append(engine_.now(), "config_apply",
                         {{"node", n.value},
                          {"utility", cfg.utility},
                          {"substation", cfg.substation},
                          {"config_hash", crypto::sha256_hex(nlohmann::json(cfg).dump()).substr(0, 16)}});
    return {{"environments", cfg.environments.size() + 1}};
  }

  nlohmann::json attach(const nlohmann::json& p) {
    auto n = node_field(p);
    auto dev = str(p, "device");
    if (dev == overlay::kBroadcastDevice || dev.empty()) throw Error(Errc::InvalidArgument, "reserved device name");
    if (devices_.count(dev) != 0) throw Error(Errc::DuplicateName, fmt::format("device '{}' exists", dev));
    auto vlan = overlay::parse_vlan(str(p, "vlan"));
    auto& rt = runtime(n);
    EnvironmentKey key{overlay::kSharedUtility, VlanType::Management};
    if (vlan != VlanType::Management) {
      if (!rt.config) throw Error(Errc::EnvironmentMissing, fmt::format("{} is not configured", rt.spec.name));
      key = EnvironmentKey{rt.config->utility_index, vlan};
    }
    auto* env = rt.environment(key);
    if (env == nullptr) {
      throw Error(Errc::EnvironmentMissing, fmt::format("{} hosts no {} environment", rt.spec.name, to_string(vlan)));
    }
    std::uint32_t addr = 0;
    if (p.contains("address")) {
      addr = overlay::parse_ip(str(p, "address"));
      if (!env->subnet.contains(addr) || addr == env->gateway()) {
        throw Error(Errc::InvalidArgument, fmt::format("address outside {}", env->subnet.to_string()));
      }
    } else {
      auto& next = rt.next_host[key];
      if (next == 0) next = 1;
      if (next >= env->subnet.host_count()) throw Error(Errc::ModelBounds, "subnet exhausted");
      addr = env->subnet.host(next++);
    }
    DeviceInfo info{dev, n, key, addr, p.value("services", std::vector<std::uint16_t>{}), false, false};
    env->attached_devices.insert(dev);
    devices_.emplace(dev, info);
    engine_.log().append(engine_.now(), "device_attach",
                         {{"device", dev},
                          {"node", n.value},
                          {"env", env_json(key)},
                          {"address", overlay::ip_to_string(addr)}});
    return {{"address", overlay::ip_to_string(addr)}};
  }

  ShieldRuntime& shield_named(const std::string& id) {
    auto it = shields_.find(id);
    if (it == shields_.end()) throw Error(Errc::UnknownDevice, fmt::format("no shield '{}'", id));
    return it->second;
  }

  nlohmann::json shield_pair(const nlohmann::json& p) {
    auto id = str(p, "shield");
    if (shields_.count(id) == 0 && p.contains("device")) {
      declare_shield(ShieldDecl{id, str(p, "node"), str(p, "device")});
    }
    auto& sh = shield_named(id);
    NodeId n = p.contains("node") ? node_field(p) : sh.lan_node;
    if (n.value == 0) throw Error(Errc::InvalidArgument, "pairing needs a node");
    if (sh.lan_node.value == 0) sh.lan_node = n;
    auto key = random_key();
    sh.state = shield::pair(sh.state, n, key);
    runtime(n).creds.add(id, sh.state.protected_device, key);
    engine_.log().append(engine_.now(), "shield_pair", {{"shield", id}, {"node", n.value}});
    return {};
  }

  nlohmann::json shield_activate(const nlohmann::json& p) {
    auto id = str(p, "shield");
    auto& sh = shield_named(id);
    NodeId n = p.contains("node") ? node_field(p) : sh.lan_node;
    auto mode = shield::parse_mode(str_or(p, "mode", "Secure8021X"));
    auto policy = shield::parse_policy(str_or(p, "policy", "AuthenticatedOnly"));
    Bytes frame;
    if (p.value("forged", false)) {
      shield::ActivationCommand c{n, sh.state.control_seq + 1, id, mode, policy};
      frame = shield::encode_activation(c, random_key());
    } else {
      frame = runtime(n).creds.make_activation(n, id, mode, policy);
    }
    sh.state = shield::handle_control(sh.state, frame);
    runtime(n).shield_modes[id] = mode;
    engine_.log().append(engine_.now(), "shield_activate",
                         {{"shield", id},
                          {"node", n.value},
                          {"mode", std::string(shield::to_string(mode))},
                          {"policy", std::string(shield::to_string(policy))}});
    return {{"mode", std::string(shield::to_string(mode))}};
  }

  NetworkOptions options_;
  sim::Engine engine_;
  sim::Medium medium_;
  mesh::Mesh mesh_;
  dns::DnsService dns_;
  NodeDirectory directory_;
  netmon::Backend backend_;
  voip::Voip voip_;
  netmon::NetmonService netmon_;

  std::optional<config::DeploymentModel> model_;
  std::optional<config::ConfigLibrary> library_;
  std::map<NodeId, NodeRuntime> nodes_;
  std::map<DeviceId, DeviceInfo> devices_;
  std::map<std::string, ShieldRuntime> shields_;
  std::set<NodeId> control_centers_;
  std::set<NodeId> phase_dirty_;
  Counters counters_;
  std::uint64_t next_frame_{0};
  SimTime last_removal_{-1};
  bool started_{false};
  std::string scenario_name_;
};

}  // namespace phoenix::harness
