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
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "phoenix/core/bytes.hpp"
#include "phoenix/sim/engine.hpp"

namespace phoenix::sim {

inline constexpr std::int64_t kDefaultSlowLinkKbps = 128;

enum class LinkKind : std::uint8_t {
  Mesh,     // carries MANET traffic
  Control,  // low-speed bidirectional command-and-control channel to the CC
};

struct LinkSpec {
  NodeId endpoint_a;
  NodeId endpoint_b;
  std::int64_t latency_ms{1};
  std::int64_t bandwidth_kbps{10'000};
  double loss_rate{0.0};
  bool up{true};
  bool slow{false};
  LinkKind kind{LinkKind::Mesh};
  int interface_index{0};

  NodeId peer_of(NodeId n) const { return n == endpoint_a ? endpoint_b : endpoint_a; }
  bool touches(NodeId n) const { return n == endpoint_a || n == endpoint_b; }
};

// Builds a validated link; `slow` is derived from the bandwidth threshold.
inline LinkSpec make_link(NodeId a, NodeId b, std::int64_t latency_ms, std::int64_t bandwidth_kbps,
                          double loss_rate = 0.0,
                          std::int64_t slow_threshold_kbps = kDefaultSlowLinkKbps) {
  LinkSpec l;
  l.endpoint_a = a;
  l.endpoint_b = b;
  l.latency_ms = latency_ms;
  l.bandwidth_kbps = bandwidth_kbps;
  l.loss_rate = loss_rate;
  l.slow = bandwidth_kbps < slow_threshold_kbps;
  return l;
}

struct Packet {
  Bytes bytes;
  // Modeled on-the-wire size; may exceed bytes.size() for encapsulated frames.
  std::uint32_t wire_size{0};

  std::uint32_t size() const { return wire_size != 0 ? wire_size : static_cast<std::uint32_t>(bytes.size()); }
};

// Serialization delay in whole milliseconds, rounded up.
constexpr SimTime serialization_delay_ms(std::uint64_t size_bytes, std::int64_t bandwidth_kbps) {
  std::uint64_t bits = size_bytes * 8;
  auto bw = static_cast<std::uint64_t>(bandwidth_kbps);
  return static_cast<SimTime>((bits + bw - 1) / bw);
}

// Point-to-point links between nodes. Each direction is a FIFO transmitter:
// a frame starts serializing once the previous one has left.
class Medium {
 public:
  using Receiver = std::function<void(NodeId to, NodeId from, LinkId link, const Packet&)>;

  explicit Medium(Engine& engine) : engine_(engine) {}

  LinkId add_link(LinkSpec spec) {
    if (spec.endpoint_a == spec.endpoint_b) {
      throw Error(Errc::InvalidArgument, "link endpoints must differ");
    }
    if (spec.bandwidth_kbps <= 0 || spec.latency_ms < 0 || spec.loss_rate < 0.0 ||
        spec.loss_rate > 1.0) {
      throw Error(Errc::InvalidArgument, "link parameters out of range");
    }
    for (const auto& l : links_) {
      bool same_pair = (l.endpoint_a == spec.endpoint_a && l.endpoint_b == spec.endpoint_b) ||
                       (l.endpoint_a == spec.endpoint_b && l.endpoint_b == spec.endpoint_a);
      if (same_pair && l.interface_index == spec.interface_index && l.kind == spec.kind) {
        throw Error(Errc::InvalidArgument,
                    fmt::format("duplicate link {}-{} on interface {}", spec.endpoint_a,
                                spec.endpoint_b, spec.interface_index));
      }
    }
    links_.push_back(spec);
    busy_until_.push_back({0, 0});
    return static_cast<LinkId>(links_.size() - 1);
  }

  const LinkSpec& link(LinkId id) const { return links_.at(id); }
  const std::vector<LinkSpec>& links() const { return links_; }

  void set_up(LinkId id, bool up) {
    auto& l = links_.at(id);
    if (l.up == up) return;
    l.up = up;
    engine_.log().append(engine_.now(), up ? "link_up" : "link_down",
                         {{"link", id}, {"a", l.endpoint_a.value}, {"b", l.endpoint_b.value}});
  }

  void set_node_powered(NodeId n, bool powered) {
    if (powered) {
      down_nodes_.erase(n);
    } else {
      down_nodes_.insert(n);
    }
  }

  bool node_powered(NodeId n) const { return down_nodes_.count(n) == 0; }

  // Links usable right now: up and both endpoints powered.
  bool usable(LinkId id) const {
    const auto& l = links_.at(id);
    return l.up && node_powered(l.endpoint_a) && node_powered(l.endpoint_b);
  }

  std::vector<LinkId> links_of(NodeId n) const {
    std::vector<LinkId> out;
    for (LinkId i = 0; i < links_.size(); ++i) {
      if (links_[i].touches(n)) out.push_back(i);
    }
    return out;
  }

  std::optional<LinkId> find_link(NodeId a, NodeId b, std::optional<LinkKind> kind = {}) const {
    for (LinkId i = 0; i < links_.size(); ++i) {
      const auto& l = links_[i];
      if (l.touches(a) && l.peer_of(a) == b && (!kind || l.kind == *kind)) return i;
    }
    return std::nullopt;
  }

  // Lowest-numbered usable mesh link between two nodes.
  std::optional<LinkId> usable_mesh_link(NodeId a, NodeId b) const {
    for (LinkId i = 0; i < links_.size(); ++i) {
      const auto& l = links_[i];
      if (l.kind == LinkKind::Mesh && l.touches(a) && l.peer_of(a) == b && usable(i)) return i;
    }
    return std::nullopt;
  }

  void set_receiver(Receiver r) { receiver_ = std::move(r); }

  // Schedules delivery at start + serialization + latency, where start is the
  // later of now and the end of the previous transmission in this direction.
  // Loss is a Bernoulli draw from the engine's seeded stream.
  std::uint64_t transmit(LinkId id, NodeId from, Packet pkt, std::uint8_t type) {
    const auto& l = links_.at(id);
    if (!l.touches(from)) throw Error(Errc::InvalidArgument, "sender is not a link endpoint");
    if (!l.up) throw Error(Errc::LinkDown, fmt::format("link {}", id));
    NodeId to = l.peer_of(from);
    SimTime now = engine_.now();
    auto& busy = busy_until_[id][from == l.endpoint_a ? 0 : 1];
    SimTime start = std::max(now, busy);
    SimTime ser = serialization_delay_ms(pkt.size(), l.bandwidth_kbps);
    busy = start + ser;
    SimTime deliver_at = start + ser + l.latency_ms;
    bool lost = engine_.rng().bernoulli(l.loss_rate);

    FrameRecord rec;
    rec.sent_at = now;
    rec.latency_ms = l.latency_ms;
    rec.link = id;
    rec.from = from;
    rec.to = to;
    rec.type = type;
    rec.size = pkt.size();
    auto frame_id = engine_.log().open_frame(rec);
    ++in_flight_;

    engine_.schedule_at(deliver_at, [this, frame_id, id, from, to, lost, p = std::move(pkt)]() {
      --in_flight_;
      auto& fr = engine_.log().frame(frame_id);
      fr.done_at = engine_.now();
      if (lost) {
        fr.outcome = FrameOutcome::Lost;
      } else if (!links_[id].up) {
        fr.outcome = FrameOutcome::LinkDown;
      } else if (!node_powered(to) || !node_powered(from)) {
        fr.outcome = FrameOutcome::NodeDown;
      } else {
        fr.outcome = FrameOutcome::Delivered;
        if (receiver_) receiver_(to, from, id, p);
      }
    });
    return frame_id;
  }

  std::size_t in_flight() const { return in_flight_; }

 private:
  Engine& engine_;
  std::vector<LinkSpec> links_;
  std::vector<std::array<SimTime, 2>> busy_until_;
  std::set<NodeId> down_nodes_;
  Receiver receiver_;
  std::size_t in_flight_{0};
};

}  // namespace phoenix::sim
