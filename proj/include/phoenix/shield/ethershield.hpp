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
#include <optional>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "phoenix/core/crypto.hpp"
#include "phoenix/mesh/control_frame.hpp"

namespace phoenix::shield {

inline constexpr std::uint16_t kEtherTypeEapol = 0x888E;
inline constexpr std::uint16_t kEtherTypeIpv4 = 0x0800;

enum class Mode : std::uint8_t { Open = 0, Secure8021X = 1, SecureIpsec = 2 };
enum class Policy : std::uint8_t { AuthenticatedOnly = 0, AllowUnshieldedLan = 1 };
enum class Direction : std::uint8_t { ToDevice, FromDevice };

constexpr std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Open: return "Open";
    case Mode::Secure8021X: return "Secure8021X";
    case Mode::SecureIpsec: return "SecureIpsec";
  }
  return "?";
}

constexpr std::string_view to_string(Policy p) {
  return p == Policy::AuthenticatedOnly ? "AuthenticatedOnly" : "AllowUnshieldedLan";
}

inline Mode parse_mode(std::string_view s) {
  for (auto m : {Mode::Open, Mode::Secure8021X, Mode::SecureIpsec}) {
    if (to_string(m) == s) return m;
  }
  throw Error(Errc::ParseError, fmt::format("unknown shield mode '{}'", s));
}

inline Policy parse_policy(std::string_view s) {
  for (auto p : {Policy::AuthenticatedOnly, Policy::AllowUnshieldedLan}) {
    if (to_string(p) == s) return p;
  }
  throw Error(Errc::ParseError, fmt::format("unknown shield policy '{}'", s));
}

struct AuthTag {
  std::string shield_id;
  std::uint64_t seq{0};
  crypto::Digest mac{};
  bool operator==(const AuthTag&) const = default;
};

// Ethernet-level frame on the substation LAN.
struct LanFrame {
  std::string src_device;
  std::string dst_device;
  std::uint16_t ethertype{kEtherTypeIpv4};
  Bytes payload;
  // Source sits on the same substation LAN (as opposed to arriving from
  // beyond the Phoenix node).
  bool from_lan{true};
  std::optional<AuthTag> tag;

  bool operator==(const LanFrame&) const = default;
};

// Bytes covered by the MAC: str16 src, str16 dst, u16 ethertype, u8 from_lan,
// payload.
inline Bytes frame_bytes(const LanFrame& f) {
  ByteWriter w;
  w.str16(f.src_device).str16(f.dst_device).u16(f.ethertype).u8(f.from_lan ? 1 : 0).bytes(f.payload);
  return std::move(w).take();
}

// Full wire form including the optional tag trailer: u8 tagged, then
// str16 shield id, u64 seq, 32-byte MAC.
inline Bytes wire_bytes(const LanFrame& f) {
  ByteWriter w;
  w.bytes(frame_bytes(f));
  w.u8(f.tag ? 1 : 0);
  if (f.tag) w.str16(f.tag->shield_id).u64(f.tag->seq).bytes(f.tag->mac);
  return std::move(w).take();
}

inline crypto::Digest tag_mac(const crypto::Key& key, const LanFrame& f, std::uint64_t seq,
                              std::string_view shield_id) {
  ByteWriter w;
  w.bytes(frame_bytes(f)).u64(seq).str16(shield_id);
  return crypto::hmac(key, w.data());
}

struct ShieldState {
  std::string id;
  DeviceId protected_device;
  std::optional<NodeId> paired_node;
  std::optional<crypto::Key> key;
  Mode mode{Mode::Open};
  Policy policy{Policy::AuthenticatedOnly};
  std::uint64_t tx_seq{0};       // tags we produced
  std::uint64_t rx_seq{0};       // highest tag sequence accepted
  std::uint32_t control_seq{0};  // highest control frame sequence accepted

  bool secure() const { return mode != Mode::Open; }
  bool operator==(const ShieldState&) const = default;
};

inline ShieldState make_shield(std::string id, DeviceId protected_device) {
  ShieldState s;
  s.id = std::move(id);
  s.protected_device = std::move(protected_device);
  return s;
}

// Out-of-band pairing. The shield stays in Open mode.
inline ShieldState pair(ShieldState s, NodeId node, const crypto::Key& key) {
  if (s.paired_node) throw Error(Errc::AlreadyPaired, fmt::format("shield {} already paired", s.id));
  s.paired_node = node;
  s.key = key;
  return s;
}

enum class Verdict : std::uint8_t { Pass, PassAugmented, Drop, Divert };
enum class DropReason : std::uint8_t { None, BadMac, Replay, Unauthenticated };

constexpr std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "Pass";
    case Verdict::PassAugmented: return "PassAugmented";
    case Verdict::Drop: return "Drop";
    case Verdict::Divert: return "Divert";
  }
  return "?";
}

constexpr std::string_view to_string(DropReason r) {
  switch (r) {
    case DropReason::None: return "None";
    case DropReason::BadMac: return "BadMac";
    case DropReason::Replay: return "Replay";
    case DropReason::Unauthenticated: return "Unauthenticated";
  }
  return "?";
}

struct FilterResult {
  Verdict verdict{Verdict::Pass};
  DropReason reason{DropReason::None};
  LanFrame frame;  // what leaves the shield (meaningless on Drop)
};

// Pure: returns the next shield state and the verdict for one frame.
inline std::pair<ShieldState, FilterResult> filter_frame(ShieldState s, const LanFrame& in, Direction dir) {
  FilterResult r;
  r.frame = in;
  if (!s.secure()) return {std::move(s), std::move(r)};
  if (s.mode == Mode::Secure8021X && in.ethertype == kEtherTypeEapol) {
    r.verdict = Verdict::Divert;
    return {std::move(s), std::move(r)};
  }
  const auto& key = *s.key;
  if (dir == Direction::FromDevice) {
    LanFrame out = in;
    out.tag.reset();
    auto seq = ++s.tx_seq;
    out.tag = AuthTag{s.id, seq, tag_mac(key, out, seq, s.id)};
    r.verdict = Verdict::PassAugmented;
    r.frame = std::move(out);
    return {std::move(s), std::move(r)};
  }
  if (!in.tag) {
    if (s.policy == Policy::AllowUnshieldedLan && in.from_lan) return {std::move(s), std::move(r)};
    r.verdict = Verdict::Drop;
    r.reason = DropReason::Unauthenticated;
    return {std::move(s), std::move(r)};
  }
  const auto& tag = *in.tag;
  LanFrame bare = in;
  bare.tag.reset();
  if (tag.shield_id != s.id || !crypto::equal_constant_time(tag.mac, tag_mac(key, bare, tag.seq, s.id))) {
    r.verdict = Verdict::Drop;
    r.reason = DropReason::BadMac;
    return {std::move(s), std::move(r)};
  }
  if (tag.seq <= s.rx_seq) {
    r.verdict = Verdict::Drop;
    r.reason = DropReason::Replay;
    return {std::move(s), std::move(r)};
  }
  s.rx_seq = tag.seq;
  r.frame = std::move(bare);
  return {std::move(s), std::move(r)};
}

// Activation control frame:
//
//   offset 0   u8    type (0x05)
//   offset 1   u64   origin node id
//   offset 9   u32   sequence
//   offset 13  str16 shield id
//   ...        u8    mode
//   ...        u8    policy
//   ...        32    HMAC-SHA256 over all preceding bytes, keyed with the
//                    pairing key
struct ActivationCommand {
  NodeId origin;
  std::uint32_t seq{0};
  std::string shield_id;
  Mode mode{Mode::Open};
  Policy policy{Policy::AuthenticatedOnly};
};

inline Bytes activation_body(const ActivationCommand& c) {
  ByteWriter w;
  w.u8(static_cast<std::uint8_t>(mesh::FrameType::ShieldControl)).u64(c.origin.value).u32(c.seq);
  w.str16(c.shield_id).u8(static_cast<std::uint8_t>(c.mode)).u8(static_cast<std::uint8_t>(c.policy));
  return std::move(w).take();
}

inline Bytes encode_activation(const ActivationCommand& c, const crypto::Key& key) {
  auto body = activation_body(c);
  auto mac = crypto::hmac(key, body);
  body.insert(body.end(), mac.begin(), mac.end());
  return body;
}

inline std::pair<ActivationCommand, crypto::Digest> decode_activation(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  if (r.u8() != static_cast<std::uint8_t>(mesh::FrameType::ShieldControl)) {
    throw Error(Errc::Malformed, "not a shield control frame");
  }
  ActivationCommand c;
  c.origin = NodeId{r.u64()};
  c.seq = r.u32();
  c.shield_id = r.str16();
  auto mode = r.u8();
  auto policy = r.u8();
  if (mode > 2 || policy > 1) throw Error(Errc::Malformed, "shield mode or policy out of range");
  c.mode = static_cast<Mode>(mode);
  c.policy = static_cast<Policy>(policy);
  crypto::Digest mac{};
  auto tail = r.bytes(mac.size());
  std::copy(tail.begin(), tail.end(), mac.begin());
  if (r.remaining() != 0) throw Error(Errc::Malformed, "trailing bytes after shield control frame");
  return {c, mac};
}

// Applies an activation frame received over the LAN. Mode and policy change
// together or not at all.
inline ShieldState handle_control(ShieldState s, std::span<const std::uint8_t> frame) {
  if (!s.paired_node || !s.key) throw Error(Errc::NotPaired, fmt::format("shield {} is not paired", s.id));
  ActivationCommand c;
  crypto::Digest mac{};
  try {
    std::tie(c, mac) = decode_activation(frame);
  } catch (const Error& e) {
    throw Error(Errc::BadControlAuth, e.what());
  }
  auto expect = crypto::hmac(*s.key, activation_body(c));
  if (!crypto::equal_constant_time(mac, expect) || c.shield_id != s.id || c.origin != *s.paired_node) {
    throw Error(Errc::BadControlAuth, fmt::format("activation for shield {} failed authentication", s.id));
  }
  if (c.seq <= s.control_seq) throw Error(Errc::BadControlAuth, "replayed activation frame");
  s.control_seq = c.seq;
  s.mode = c.mode;
  s.policy = c.policy;
  return s;
}

// Node-side record of paired shields. The node tags frames it forwards to a
// protected device.
class CredentialStore {
 public:
  struct Entry {
    DeviceId protected_device;
    crypto::Key key{};
    std::uint64_t tx_seq{0};
    std::uint32_t control_seq{0};
  };

  void add(const std::string& shield_id, DeviceId device, const crypto::Key& key) {
    if (entries_.count(shield_id) != 0) throw Error(Errc::AlreadyPaired, fmt::format("shield {}", shield_id));
    entries_[shield_id] = Entry{std::move(device), key, 0, 0};
  }

  bool contains(const std::string& shield_id) const { return entries_.count(shield_id) != 0; }
  const Entry* find(const std::string& shield_id) const {
    auto it = entries_.find(shield_id);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::optional<std::string> shield_for(const DeviceId& device) const {
    for (const auto& [id, e] : entries_) {
      if (e.protected_device == device) return id;
    }
    return std::nullopt;
  }

  Bytes make_activation(NodeId self, const std::string& shield_id, Mode mode, Policy policy) {
    auto it = entries_.find(shield_id);
    if (it == entries_.end()) throw Error(Errc::NotPaired, fmt::format("shield {} is not paired", shield_id));
    ActivationCommand c{self, ++it->second.control_seq, shield_id, mode, policy};
    return encode_activation(c, it->second.key);
  }

  LanFrame tag(const std::string& shield_id, LanFrame f) {
    auto& e = entries_.at(shield_id);
    f.tag.reset();
    auto seq = ++e.tx_seq;
    f.tag = AuthTag{shield_id, seq, tag_mac(e.key, f, seq, shield_id)};
    return f;
  }

  // Verifies a tag produced by the shield on a frame leaving its device.
  bool verify(const LanFrame& f) const {
    if (!f.tag) return false;
    auto it = entries_.find(f.tag->shield_id);
    if (it == entries_.end()) return false;
    LanFrame bare = f;
    bare.tag.reset();
    return crypto::equal_constant_time(f.tag->mac, tag_mac(it->second.key, bare, f.tag->seq, f.tag->shield_id));
  }

  nlohmann::json dump() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [id, e] : entries_) {
      j[id] = {{"protected_device", e.protected_device},
               {"key_fingerprint", crypto::sha256_hex(std::span<const std::uint8_t>(e.key)).substr(0, 16)},
               {"tx_seq", e.tx_seq},
               {"control_seq", e.control_seq}};
    }
    return j;
  }

 private:
  std::map<std::string, Entry> entries_;
};

}  // namespace phoenix::shield
