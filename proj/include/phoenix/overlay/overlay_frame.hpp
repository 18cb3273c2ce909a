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
#include <span>
#include <string>
#include <vector>

#include "phoenix/core/bytes.hpp"
#include "phoenix/core/crypto.hpp"
#include "phoenix/overlay/environment.hpp"

namespace phoenix::overlay {

// Modeled encapsulation cost, VxLAN-typical (outer Ethernet + IP + UDP + VxLAN).
inline constexpr std::uint32_t kEncapOverhead = 50;

// Overlay header, bit-exact:
//
//   offset 0   u24  VNI
//   offset 3   u64  source node id
//   offset 11  u64  destination node id
//   offset 19  u16  length of the inner frame encoding that follows
inline constexpr std::size_t kOverlayHeaderSize = 21;

inline constexpr std::string_view kBroadcastDevice = "*";

struct InnerFrame {
  DeviceId src_device;
  DeviceId dst_device;
  Bytes payload;
  // Modeled Ethernet frame size in bytes.
  std::uint32_t size{0};

  static InnerFrame make(DeviceId src, DeviceId dst, Bytes payload, std::uint32_t size = 0) {
    InnerFrame f{std::move(src), std::move(dst), std::move(payload), size};
    if (f.size == 0) f.size = static_cast<std::uint32_t>(f.payload.size());
    return f;
  }

  bool operator==(const InnerFrame&) const = default;
};

struct OverlayFrame {
  Vni vni;
  NodeId src_node;
  NodeId dst_node;
  InnerFrame inner;

  std::uint32_t size() const { return inner.size + kEncapOverhead; }
  bool operator==(const OverlayFrame&) const = default;
};

// Inner encoding: str16 src device, str16 dst device, u32 modeled size,
// payload bytes.
inline Bytes encode_inner(const InnerFrame& f) {
  ByteWriter w;
  w.str16(f.src_device).str16(f.dst_device).u32(f.size).bytes(f.payload);
  return std::move(w).take();
}

inline InnerFrame decode_inner(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  InnerFrame f;
  f.src_device = r.str16();
  f.dst_device = r.str16();
  f.size = r.u32();
  auto rest = r.rest();
  f.payload.assign(rest.begin(), rest.end());
  return f;
}

inline std::string inner_hash(const InnerFrame& f) { return crypto::sha256_hex(encode_inner(f)); }

inline Bytes encode(const OverlayFrame& f) {
  auto inner = encode_inner(f.inner);
  if (inner.size() > 0xFFFF) throw Error(Errc::InvalidArgument, "inner frame too large");
  if (f.vni.value > kMaxVni) throw Error(Errc::InvalidArgument, "VNI exceeds 24 bits");
  ByteWriter w(kOverlayHeaderSize + inner.size());
  w.u24(f.vni.value).u64(f.src_node.value).u64(f.dst_node.value);
  w.u16(static_cast<std::uint16_t>(inner.size())).bytes(inner);
  return std::move(w).take();
}

inline OverlayFrame decode(std::span<const std::uint8_t> b) {
  ByteReader r(b);
  OverlayFrame f;
  f.vni = Vni{r.u24()};
  f.src_node = NodeId{r.u64()};
  f.dst_node = NodeId{r.u64()};
  auto len = r.u16();
  f.inner = decode_inner(r.bytes(len));
  if (r.remaining() != 0) throw Error(Errc::Malformed, "trailing bytes after overlay frame");
  return f;
}

// Wraps a frame from a device attached to `env` for transit to `dst_node`.
inline OverlayFrame encapsulate(const InnerFrame& inner, const NetworkEnvironment& env, NodeId src_node,
                                NodeId dst_node) {
  if (env.attached_devices.count(inner.src_device) == 0) {
    throw Error(Errc::NotAttached, fmt::format("device '{}' is not attached to environment {}/{}",
                                               inner.src_device, env.key.utility, to_string(env.key.vlan)));
  }
  return OverlayFrame{env.vni, src_node, dst_node, inner};
}

struct Delivery {
  EnvironmentKey environment;
  std::vector<DeviceId> devices;
};

// Hands the inner frame to the environment whose VNI matches. Only that
// environment's devices are candidates. Throws UnknownVni when the node hosts
// no such environment.
template <typename Environments>
Delivery decapsulate_deliver(const OverlayFrame& frame, const Environments& environments) {
  for (const NetworkEnvironment& env : environments) {
    if (env.vni != frame.vni) continue;
    Delivery d{env.key, {}};
    if (frame.inner.dst_device == kBroadcastDevice) {
      for (const auto& dev : env.attached_devices) {
        if (dev != frame.inner.src_device) d.devices.push_back(dev);
      }
    } else if (env.attached_devices.count(frame.inner.dst_device) != 0) {
      d.devices.push_back(frame.inner.dst_device);
    }
    return d;
  }
  throw Error(Errc::UnknownVni, fmt::format("VNI {} not hosted at node {}", frame.vni.value, frame.dst_node));
}

}  // namespace phoenix::overlay
