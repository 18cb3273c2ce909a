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

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <variant>
#include <vector>

#include "phoenix/core/bytes.hpp"

namespace phoenix::mesh {

// Wire layout shared by every control frame:
//
//   offset 0   u8   type
//   offset 1   u64  origin node id (big-endian)
//   offset 9   u32  sequence number (big-endian)
//   offset 13  ...  type-specific payload
inline constexpr std::size_t kControlHeaderSize = 13;

enum class FrameType : std::uint8_t {
  Hello = 0x01,
  Topology = 0x02,
  Multicast = 0x03,
  Unicast = 0x04,
  ShieldControl = 0x05,
};

// Application carried inside multicast and unicast frames.
enum class AppKind : std::uint8_t {
  DnsQuery = 1,
  DnsAnswer = 2,
  DnsPublish = 3,
  Overlay = 4,
  VoipSignal = 5,
  NetmonSample = 6,
  NetmonAck = 7,
  Chat = 8,
};

inline constexpr std::uint16_t kNoUtility = 0xFFFF;

// Utility/substation an origin has been configured for, advertised with its
// topology so peers can tell which substations of a utility are reachable.
struct ConfigKey {
  std::uint16_t utility_index{kNoUtility};
  std::uint16_t substation{0};
  bool configured() const { return utility_index != kNoUtility; }
  auto operator<=>(const ConfigKey&) const = default;
};

struct ControlHeader {
  FrameType type{FrameType::Hello};
  NodeId origin;
  std::uint32_t seq{0};
};

// Hello payload: u16 count, count x u64 heard neighbors on this interface.
struct Hello {
  std::vector<NodeId> heard;
};

// Topology payload: u16 utility index (0xFFFF = unconfigured), u16 substation,
// u16 count, count x u64 symmetric neighbors.
struct Topology {
  ConfigKey config;
  std::vector<NodeId> neighbors;
};

// Multicast payload: u8 app kind, remaining bytes are application data. The
// (origin, seq) pair in the header is the deduplication id.
struct Multicast {
  AppKind app{AppKind::DnsQuery};
  Bytes data;
};

// Unicast payload: u64 destination, u8 ttl, u8 app kind, application data.
struct Unicast {
  NodeId destination;
  std::uint8_t ttl{64};
  AppKind app{AppKind::DnsQuery};
  Bytes data;
};

using ControlBody = std::variant<Hello, Topology, Multicast, Unicast>;

struct ControlFrame {
  ControlHeader header;
  ControlBody body;
};

inline void write_header(ByteWriter& w, const ControlHeader& h) {
  w.u8(static_cast<std::uint8_t>(h.type)).u64(h.origin.value).u32(h.seq);
}

inline ControlHeader read_header(ByteReader& r) {
  ControlHeader h;
  h.type = static_cast<FrameType>(r.u8());
  h.origin = NodeId{r.u64()};
  h.seq = r.u32();
  return h;
}

inline Bytes encode(const ControlFrame& f) {
  ByteWriter w(64);
  ControlHeader h = f.header;
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, Hello>) {
          h.type = FrameType::Hello;
          write_header(w, h);
          w.u16(static_cast<std::uint16_t>(body.heard.size()));
          for (auto n : body.heard) w.u64(n.value);
        } else if constexpr (std::is_same_v<T, Topology>) {
          h.type = FrameType::Topology;
          write_header(w, h);
          w.u16(body.config.utility_index).u16(body.config.substation);
          w.u16(static_cast<std::uint16_t>(body.neighbors.size()));
          for (auto n : body.neighbors) w.u64(n.value);
        } else if constexpr (std::is_same_v<T, Multicast>) {
          h.type = FrameType::Multicast;
          write_header(w, h);
          w.u8(static_cast<std::uint8_t>(body.app)).bytes(body.data);
        } else {
          h.type = FrameType::Unicast;
          write_header(w, h);
          w.u64(body.destination.value).u8(body.ttl).u8(static_cast<std::uint8_t>(body.app));
          w.bytes(body.data);
        }
      },
      f.body);
  return std::move(w).take();
}

inline ControlFrame decode(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  ControlFrame f;
  f.header = read_header(r);
  switch (f.header.type) {
    case FrameType::Hello: {
      Hello h;
      auto n = r.u16();
      for (std::uint16_t i = 0; i < n; ++i) h.heard.push_back(NodeId{r.u64()});
      f.body = std::move(h);
      break;
    }
    case FrameType::Topology: {
      Topology t;
      t.config.utility_index = r.u16();
      t.config.substation = r.u16();
      auto n = r.u16();
      for (std::uint16_t i = 0; i < n; ++i) t.neighbors.push_back(NodeId{r.u64()});
      f.body = std::move(t);
      break;
    }
    case FrameType::Multicast: {
      Multicast m;
      m.app = static_cast<AppKind>(r.u8());
      auto rest = r.rest();
      m.data.assign(rest.begin(), rest.end());
      f.body = std::move(m);
      break;
    }
    case FrameType::Unicast: {
      Unicast u;
      u.destination = NodeId{r.u64()};
      u.ttl = r.u8();
      u.app = static_cast<AppKind>(r.u8());
      auto rest = r.rest();
      u.data.assign(rest.begin(), rest.end());
      f.body = std::move(u);
      break;
    }
    default:
      throw Error(Errc::Malformed, fmt::format("unknown control frame type {}",
                                               static_cast<int>(f.header.type)));
  }
  if (r.remaining() != 0) throw Error(Errc::Malformed, "trailing bytes in control frame");
  return f;
}

}  // namespace phoenix::mesh
