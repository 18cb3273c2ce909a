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

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "phoenix/dns/dns_service.hpp"

namespace phoenix::voip {

enum class ClientKind : std::uint8_t { Dect, Desk, Web, Mobile };

constexpr std::string_view to_string(ClientKind k) {
  switch (k) {
    case ClientKind::Dect: return "DECT";
    case ClientKind::Desk: return "Desk";
    case ClientKind::Web: return "Web";
    case ClientKind::Mobile: return "Mobile";
  }
  return "?";
}

inline ClientKind parse_client_kind(std::string_view s) {
  for (auto k : {ClientKind::Dect, ClientKind::Desk, ClientKind::Web, ClientKind::Mobile}) {
    if (to_string(k) == s) return k;
  }
  throw Error(Errc::ParseError, fmt::format("unknown client kind '{}'", s));
}

struct VoipClient {
  std::string number;
  NodeId home_node;
  ClientKind kind{ClientKind::Dect};
};

struct Registration {
  std::string number;
  NodeId registrar;
  SimTime expires_at{0};
};

enum class CallOutcome : std::uint8_t { Connected, NotFound, Conflict, Unreachable };

constexpr std::string_view to_string(CallOutcome o) {
  switch (o) {
    case CallOutcome::Connected: return "Connected";
    case CallOutcome::NotFound: return "NotFound";
    case CallOutcome::Conflict: return "Conflict";
    case CallOutcome::Unreachable: return "Unreachable";
  }
  return "?";
}

struct CallAttempt {
  std::uint64_t call_id{0};
  NodeId caller_node;
  std::string callee_number;
  CallOutcome outcome{CallOutcome::NotFound};
  std::optional<NodeId> target;
  SimTime placed_at{0};
  SimTime setup_latency{0};
  bool transcoded{false};
};

inline void to_json(nlohmann::json& j, const CallAttempt& c) {
  j = {{"call_id", c.call_id},
       {"caller_node", c.caller_node.value},
       {"callee_number", c.callee_number},
       {"outcome", std::string(to_string(c.outcome))},
       {"target", c.target ? nlohmann::json(c.target->value) : nlohmann::json(nullptr)},
       {"placed_at", c.placed_at},
       {"setup_latency_ms", c.setup_latency},
       {"transcoded", c.transcoded}};
}

struct MessageReceipt {
  std::uint64_t message_id{0};
  std::string to_number;
  CallOutcome outcome{CallOutcome::NotFound};
  std::optional<NodeId> node;
};

struct ChatEntry {
  std::uint64_t message_id{0};
  SimTime at{0};
  std::string from;
  std::string to;
  std::string group;
  std::string body;
};

inline void to_json(nlohmann::json& j, const ChatEntry& e) {
  j = {{"message_id", e.message_id}, {"at", e.at},       {"from", e.from},
       {"to", e.to},                 {"group", e.group}, {"body", e.body}};
}

struct VoipConfig {
  SimTime registration_ttl_ms{120'000};
  SimTime refresh_interval_ms{60'000};
  SimTime signal_timeout_ms{3000};
  std::int64_t slow_threshold_kbps{sim::kDefaultSlowLinkKbps};
};

// What the VoIP layer needs to know about a node's configuration.
struct VoipHost {
  bool has_voip{false};
  std::string dial_prefix;
};

inline std::string number_name(std::string_view number) { return fmt::format("{}._voip.{}", number, dns::kDomain); }

// Call signaling over the mesh. Numbers map to registrar nodes only through
// DNS; there is no dial-plan table anywhere.
class Voip {
 public:
  using HostFn = std::function<std::optional<VoipHost>(NodeId)>;
  using AlertFn = std::function<void(NodeId at, std::string_view kind, const nlohmann::json& detail)>;
  using CallFn = std::function<void(const CallAttempt&)>;
  using ReceiptFn = std::function<void(const std::vector<MessageReceipt>&)>;

  Voip(sim::Engine& engine, const sim::Medium& medium, mesh::Mesh& mesh, dns::DnsService& dns,
       const NodeDirectory& directory, VoipConfig config = {})
      : engine_(engine), medium_(medium), mesh_(mesh), dns_(dns), directory_(directory), config_(config) {
    mesh_.on_app(mesh::AppKind::VoipSignal,
                 [this](NodeId at, NodeId origin, const Bytes& d) { on_signal(at, origin, d); });
    mesh_.on_app(mesh::AppKind::Chat, [this](NodeId at, NodeId origin, const Bytes& d) { on_chat(at, origin, d); });
  }

  Voip(const Voip&) = delete;
  Voip& operator=(const Voip&) = delete;

  void set_host_info(HostFn fn) { host_ = std::move(fn); }
  void on_alert(AlertFn fn) { alert_ = std::move(fn); }

  std::string registrar_host(NodeId n) const { return fmt::format("voip-{}.{}", directory_.name(n), dns::kDomain); }

  // Publishes the node's SIP registrar for service discovery.
  void advertise_registrar(NodeId n) {
    auto host = registrar_host(n);
    auto instance = fmt::format("voip-{}._sip._udp.{}", directory_.name(n), dns::kDomain);
    dns_.register_record(n, {fmt::format("_sip._udp.{}", dns::kDomain), dns::RrType::PTR, 0, instance, n});
    dns_.register_record(n, {instance, dns::RrType::SRV, 0, dns::srv_rdata({10, 0, 5060, host}), n});
  }

  Registration register_client(const VoipClient& client, NodeId node) {
    auto info = host_ ? host_(node) : std::nullopt;
    if (!info || !info->has_voip) {
      throw Error(Errc::EnvironmentMissing, fmt::format("node {} has no VoIP environment", directory_.name(node)));
    }
    if (client.number.size() != 4 || !std::all_of(client.number.begin(), client.number.end(), ::isdigit)) {
      throw Error(Errc::InvalidArgument, fmt::format("'{}' is not a four-digit number", client.number));
    }
    auto key = std::make_pair(client.number, node);
    bool roaming = client.kind == ClientKind::Mobile && client.home_node != node;
    if (!roaming && !info->dial_prefix.empty() && client.number.rfind(info->dial_prefix, 0) != 0) {
      throw Error(Errc::InvalidArgument,
                  fmt::format("number {} outside prefix {} of node {}", client.number, info->dial_prefix,
                              directory_.name(node)));
    }
    auto& st = registrations_[key];
    st.client = client;
    st.reg = Registration{client.number, node, engine_.now() + config_.registration_ttl_ms};
    ++st.generation;
    forwards_.erase(key);
    dns_.register_record(node, {number_name(client.number), dns::RrType::CNAME,
                                static_cast<std::uint32_t>(config_.registration_ttl_ms / 1000), registrar_host(node),
                                node});
    engine_.log().append(engine_.now(), "voip_register",
                         {{"number", client.number}, {"node", node.value}, {"kind", std::string(to_string(client.kind))}});
    schedule_refresh(key, st.generation);
    return st.reg;
  }

  void unregister(const std::string& number, NodeId node) {
    auto key = std::make_pair(number, node);
    if (registrations_.erase(key) == 0) return;
    dns_.withdraw(node, number_name(number), dns::RrType::CNAME);
    engine_.log().append(engine_.now(), "voip_unregister", {{"number", number}, {"node", node.value}});
  }

  // Moves a mobile client's registration. The old registrar withdraws its
  // record and keeps a forwarding pointer so calls routed on stale replicas
  // still complete.
  Registration roam(const std::string& number, NodeId new_node) {
    auto regs = registrations_of(number);
    if (regs.empty()) throw Error(Errc::InvalidArgument, fmt::format("number {} not registered", number));
    const auto* from = &regs.front();
    for (const auto& r : regs) {
      if (registrations_.at({number, r.registrar}).client.kind == ClientKind::Mobile) from = &r;
    }
    auto state = registrations_.at({number, from->registrar});
    if (state.client.kind != ClientKind::Mobile) {
      throw Error(Errc::InvalidArgument, fmt::format("client {} is not mobile", number));
    }
    if (from->registrar == new_node) return state.reg;
    NodeId old = from->registrar;
    auto reg = register_client(state.client, new_node);
    unregister(number, old);
    forwards_[{number, old}] = new_node;
    engine_.log().append(engine_.now(), "voip_roam", {{"number", number}, {"from", old.value}, {"to", new_node.value}});
    return reg;
  }

  std::vector<Registration> registrations_of(const std::string& number) const {
    std::vector<Registration> out;
    for (auto it = registrations_.lower_bound({number, NodeId{0}});
         it != registrations_.end() && it->first.first == number; ++it) {
      out.push_back(it->second.reg);
    }
    return out;
  }

  // True when any link on the unicast path is below the slow threshold.
  bool plan_media_path(NodeId caller, NodeId target) const {
    if (caller == target) return false;
    auto path = mesh_.path(caller, target);
    if (!path) {
      throw Error(Errc::NoRoute, fmt::format("no route {} -> {}", directory_.name(caller), directory_.name(target)));
    }
    for (std::size_t i = 0; i + 1 < path->size(); ++i) {
      auto link = medium_.usable_mesh_link((*path)[i], (*path)[i + 1]);
      if (!link) throw Error(Errc::NoRoute, "path crosses an unusable link");
      if (medium_.link(*link).bandwidth_kbps < config_.slow_threshold_kbps) return true;
    }
    return false;
  }

  void route_call(NodeId caller, const std::string& number, CallFn done) {
    auto call = std::make_shared<CallState>();
    call->attempt.call_id = ++next_call_;
    call->attempt.caller_node = caller;
    call->attempt.callee_number = number;
    call->attempt.placed_at = engine_.now();
    call->done = std::move(done);
    lookup_and_invite(call, /*network_only=*/false);
  }

  void define_group(const std::string& id, std::vector<std::string> numbers) { groups_[id] = std::move(numbers); }

  // Unicast to a number, or fan-out to every member of a group. Each
  // recipient yields one receipt.
  void send_message(const std::string& from_number, const std::string& to, std::string body, ReceiptFn done) {
    auto regs = registrations_of(from_number);
    if (regs.empty()) throw Error(Errc::InvalidArgument, fmt::format("sender {} not registered", from_number));
    NodeId from_node = regs.front().registrar;
    std::vector<std::string> recipients;
    std::string group;
    if (auto g = groups_.find(to); g != groups_.end()) {
      group = to;
      for (const auto& n : g->second) {
        if (n != from_number) recipients.push_back(n);
      }
    } else {
      recipients.push_back(to);
    }
    auto batch = std::make_shared<Batch>();
    batch->remaining = recipients.size();
    batch->done = std::move(done);
    batch->receipts.resize(recipients.size());
    if (recipients.empty()) {
      engine_.schedule_after(0, [batch]() { batch->done({}); });
      return;
    }
    for (std::size_t i = 0; i < recipients.size(); ++i) {
      auto mid = ++next_message_;
      batch->receipts[i].message_id = mid;
      batch->receipts[i].to_number = recipients[i];
      ChatEntry entry{mid, 0, from_number, recipients[i], group, body};
      dns_.resolve(from_node, number_name(recipients[i]), dns::RrType::CNAME,
                   [this, batch, i, from_node, entry](const dns::QueryResult& q) {
                     auto targets = targets_of(q);
                     if (targets.empty()) {
                       complete_receipt(batch, i, CallOutcome::NotFound, std::nullopt);
                       return;
                     }
                     NodeId target = *targets.begin();
                     messages_pending_[entry.message_id] = {batch, i};
                     engine_.schedule_after(config_.signal_timeout_ms, [this, mid = entry.message_id]() {
                       auto it = messages_pending_.find(mid);
                       if (it == messages_pending_.end()) return;
                       auto [b, idx] = it->second;
                       messages_pending_.erase(it);
                       complete_receipt(b, idx, CallOutcome::Unreachable, std::nullopt);
                     });
                     ByteWriter w;
                     w.u64(entry.message_id).str16(entry.from).str16(entry.to).str16(entry.group).str16(entry.body);
                     mesh_.send_unicast(from_node, target, mesh::AppKind::Chat, std::move(w).take());
                   });
    }
  }

  const std::vector<ChatEntry>& message_log(NodeId n) const {
    static const std::vector<ChatEntry> empty;
    auto it = chat_log_.find(n);
    return it == chat_log_.end() ? empty : it->second;
  }

  const std::vector<CallAttempt>& calls() const { return calls_; }

  // Calls and per-node message logs as newline-delimited JSON.
  std::string export_ndjson() const {
    std::string out;
    for (const auto& c : calls_) {
      nlohmann::json j = c;
      j["record"] = "call";
      out += j.dump() + "\n";
    }
    for (const auto& [node, entries] : chat_log_) {
      for (const auto& e : entries) {
        nlohmann::json j = e;
        j["record"] = "message";
        j["node"] = node.value;
        out += j.dump() + "\n";
      }
    }
    return out;
  }

 private:
  static constexpr std::uint8_t kInvite = 1;
  static constexpr std::uint8_t kOk = 2;
  static constexpr std::uint8_t kNotFound = 3;

  struct ClientState {
    VoipClient client;
    Registration reg;
    std::uint64_t generation{0};
  };

  struct CallState {
    CallAttempt attempt;
    CallFn done;
    sim::EventId timer{0};
    bool requeried{false};
  };

  struct Batch {
    std::size_t remaining{0};
    std::vector<MessageReceipt> receipts;
    ReceiptFn done;
  };

  using RegKey = std::pair<std::string, NodeId>;

  std::set<NodeId> targets_of(const dns::QueryResult& q) const {
    std::set<NodeId> out;
    std::string prefix = "voip-";
    std::string suffix = fmt::format(".{}", dns::kDomain);
    for (const auto& r : q.records) {
      const auto& t = r.rdata;
      if (t.rfind(prefix, 0) != 0 || t.size() <= prefix.size() + suffix.size()) continue;
      auto name = t.substr(prefix.size(), t.size() - prefix.size() - suffix.size());
      if (auto id = directory_.find(name)) out.insert(*id);
    }
    return out;
  }

  // Resolves the callee and sends an INVITE to the registrar found. A 404
  // from a registrar means our replica was stale; the lookup is repeated
  // once against the network before giving up.
  void lookup_and_invite(const std::shared_ptr<CallState>& call, bool network_only) {
    auto& a = call->attempt;
    dns_.resolve(
        a.caller_node, number_name(a.callee_number), dns::RrType::CNAME,
        [this, call](const dns::QueryResult& q) {
          auto targets = targets_of(q);
          auto& a = call->attempt;
          if (targets.empty()) {
            a.outcome = CallOutcome::NotFound;
            a.target.reset();
            finish_call(call);
            return;
          }
          NodeId target = *targets.begin();
          a.target = target;
          a.outcome = CallOutcome::Connected;
          if (targets.size() > 1) {
            a.outcome = CallOutcome::Conflict;
            std::vector<std::uint64_t> ids;
            for (auto t : targets) ids.push_back(t.value);
            if (alert_) alert_(a.caller_node, "voip_number_conflict", {{"number", a.callee_number}, {"targets", ids}});
          }
          if (target == a.caller_node) {
            finish_call(call);
            return;
          }
          calls_pending_[a.call_id] = call;
          call->timer = engine_.schedule_after(config_.signal_timeout_ms, [this, id = a.call_id]() {
            auto it = calls_pending_.find(id);
            if (it == calls_pending_.end()) return;
            auto c = it->second;
            calls_pending_.erase(it);
            c->attempt.outcome = CallOutcome::Unreachable;
            finish_call(c);
          });
          ByteWriter w;
          w.u8(kInvite).u64(a.call_id).str16(a.callee_number);
          mesh_.send_unicast(a.caller_node, target, mesh::AppKind::VoipSignal, std::move(w).take());
        },
        std::nullopt, network_only);
  }

  void schedule_refresh(const RegKey& key, std::uint64_t generation) {
    engine_.schedule_after(config_.refresh_interval_ms, [this, key, generation]() {
      auto it = registrations_.find(key);
      if (it == registrations_.end() || it->second.generation != generation) return;
      auto& st = it->second;
      if (mesh_.powered(key.second)) {
        st.reg.expires_at = engine_.now() + config_.registration_ttl_ms;
      } else if (engine_.now() >= st.reg.expires_at) {
        engine_.log().append(engine_.now(), "voip_registration_expired",
                             {{"number", key.first}, {"node", key.second.value}});
        dns_.withdraw(key.second, number_name(key.first), dns::RrType::CNAME);
        registrations_.erase(it);
        return;
      }
      schedule_refresh(key, generation);
    });
  }

  bool serves(NodeId at, const std::string& number) const {
    return registrations_.count({number, at}) != 0 || forwards_.count({number, at}) != 0;
  }

  void on_signal(NodeId at, NodeId origin, const Bytes& data) {
    ByteReader r(data);
    auto op = r.u8();
    auto call_id = r.u64();
    if (op == kInvite) {
      auto number = r.str16();
      bool ok = serves(at, number);
      if (auto f = forwards_.find({number, at}); ok && f != forwards_.end()) {
        engine_.log().append(engine_.now(), "voip_forward",
                             {{"call_id", call_id}, {"number", number}, {"via", at.value}, {"to", f->second.value}});
      }
      ByteWriter w;
      w.u8(ok ? kOk : kNotFound).u64(call_id);
      mesh_.send_unicast(at, origin, mesh::AppKind::VoipSignal, std::move(w).take());
      return;
    }
    auto it = calls_pending_.find(call_id);
    if (it == calls_pending_.end()) return;
    auto call = it->second;
    calls_pending_.erase(it);
    engine_.cancel(call->timer);
    if (op == kNotFound) {
      if (!call->requeried) {
        call->requeried = true;
        lookup_and_invite(call, /*network_only=*/true);
        return;
      }
      call->attempt.outcome = CallOutcome::NotFound;
    }
    finish_call(call);
  }

  void on_chat(NodeId at, NodeId, const Bytes& data) {
    ByteReader r(data);
    ChatEntry e;
    e.message_id = r.u64();
    e.from = r.str16();
    e.to = r.str16();
    e.group = r.str16();
    e.body = r.str16();
    e.at = engine_.now();
    bool ok = serves(at, e.to);
    if (ok) {
      chat_log_[at].push_back(e);
      engine_.log().append(engine_.now(), "chat_delivered",
                           {{"node", at.value}, {"message_id", e.message_id}, {"from", e.from}, {"to", e.to}});
    }
    auto it = messages_pending_.find(e.message_id);
    if (it == messages_pending_.end()) return;
    auto [batch, idx] = it->second;
    messages_pending_.erase(it);
    complete_receipt(batch, idx, ok ? CallOutcome::Connected : CallOutcome::NotFound,
                     ok ? std::optional<NodeId>(at) : std::nullopt);
  }

  void complete_receipt(const std::shared_ptr<Batch>& b, std::size_t idx, CallOutcome outcome,
                        std::optional<NodeId> node) {
    b->receipts[idx].outcome = outcome;
    b->receipts[idx].node = node;
    if (--b->remaining == 0) b->done(b->receipts);
  }

  void finish_call(const std::shared_ptr<CallState>& call) {
    auto& a = call->attempt;
    a.setup_latency = engine_.now() - a.placed_at;
    if (a.target && (a.outcome == CallOutcome::Connected || a.outcome == CallOutcome::Conflict)) {
      try {
        a.transcoded = plan_media_path(a.caller_node, *a.target);
      } catch (const Error&) {
        a.transcoded = false;
      }
    }
    if (a.outcome == CallOutcome::NotFound || a.outcome == CallOutcome::Unreachable) a.target.reset();
    calls_.push_back(a);
    nlohmann::json j = a;
    engine_.log().append(engine_.now(), "call", std::move(j));
    if (call->done) call->done(a);
  }

  sim::Engine& engine_;
  const sim::Medium& medium_;
  mesh::Mesh& mesh_;
  dns::DnsService& dns_;
  const NodeDirectory& directory_;
  VoipConfig config_;
  HostFn host_;
  AlertFn alert_;
  std::map<RegKey, ClientState> registrations_;
  std::map<RegKey, NodeId> forwards_;
  std::map<std::string, std::vector<std::string>> groups_;
  std::map<std::uint64_t, std::shared_ptr<CallState>> calls_pending_;
  std::map<std::uint64_t, std::pair<std::shared_ptr<Batch>, std::size_t>> messages_pending_;
  std::map<NodeId, std::vector<ChatEntry>> chat_log_;
  std::vector<CallAttempt> calls_;
  std::uint64_t next_call_{0};
  std::uint64_t next_message_{0};
};

}  // namespace phoenix::voip
