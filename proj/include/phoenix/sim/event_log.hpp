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
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phoenix/core/crypto.hpp"
#include "phoenix/core/types.hpp"

namespace phoenix::sim {

enum class FrameOutcome : std::uint8_t { Pending, Delivered, Lost, LinkDown, NodeDown };

constexpr std::string_view to_string(FrameOutcome o) {
  switch (o) {
    case FrameOutcome::Pending: return "pending";
    case FrameOutcome::Delivered: return "delivered";
    case FrameOutcome::Lost: return "lost";
    case FrameOutcome::LinkDown: return "link_down";
    case FrameOutcome::NodeDown: return "node_down";
  }
  return "?";
}

// One link-level transmission. Kept out of the JSON record stream because
// control traffic dominates the volume.
struct FrameRecord {
  std::uint64_t frame_id{0};
  std::uint64_t log_seq{0};
  SimTime sent_at{0};
  SimTime done_at{0};
  SimTime latency_ms{0};
  LinkId link{0};
  NodeId from;
  NodeId to;
  std::uint8_t type{0};
  std::uint32_t size{0};
  FrameOutcome outcome{FrameOutcome::Pending};
};

struct LogRecord {
  std::uint64_t seq{0};
  SimTime at{0};
  std::string kind;
  nlohmann::json data;
};

class EventLog {
 public:
  void append(SimTime at, std::string kind, nlohmann::json data = nlohmann::json::object()) {
    records_.push_back(LogRecord{next_seq_++, at, std::move(kind), std::move(data)});
  }

  std::uint64_t open_frame(FrameRecord rec) {
    rec.frame_id = frames_.size();
    rec.log_seq = next_seq_++;
    frames_.push_back(rec);
    return rec.frame_id;
  }

  FrameRecord& frame(std::uint64_t id) { return frames_.at(id); }

  const std::vector<LogRecord>& records() const { return records_; }
  const std::vector<FrameRecord>& frames() const { return frames_; }

  std::vector<const LogRecord*> of_kind(std::string_view kind) const {
    std::vector<const LogRecord*> out;
    for (const auto& r : records_) {
      if (r.kind == kind) out.push_back(&r);
    }
    return out;
  }

  static nlohmann::json to_json(const LogRecord& r) {
    nlohmann::json j = r.data.is_object() ? r.data : nlohmann::json{{"value", r.data}};
    j["t"] = r.at;
    j["kind"] = r.kind;
    return j;
  }

  static nlohmann::json to_json(const FrameRecord& f) {
    return {{"t", f.sent_at},       {"kind", "frame"},          {"id", f.frame_id},
            {"done", f.done_at},    {"link", f.link},           {"from", f.from.value},
            {"to", f.to.value},     {"type", f.type},           {"size", f.size},
            {"outcome", to_string(f.outcome)}};
  }

  // Calls fn(line) for each record in log order, one JSON document per line.
  template <typename Fn>
  void for_each_line(Fn&& fn) const {
    std::size_t r = 0;
    std::size_t f = 0;
    while (r < records_.size() || f < frames_.size()) {
      bool take_frame =
          r == records_.size() || (f < frames_.size() && frames_[f].log_seq < records_[r].seq);
      if (take_frame) {
        fn(to_json(frames_[f++]).dump());
      } else {
        fn(to_json(records_[r++]).dump());
      }
    }
  }

  std::string to_ndjson() const {
    std::string out;
    for_each_line([&](const std::string& line) {
      out += line;
      out += '\n';
    });
    return out;
  }

  std::string digest() const {
    crypto::Sha256 h;
    for_each_line([&](const std::string& line) {
      h.update(line);
      h.update(std::string_view("\n"));
    });
    return to_hex(h.finish());
  }

  std::size_t size() const { return records_.size() + frames_.size(); }
  std::uint64_t next_seq() const { return next_seq_; }

  // Copy of everything logged at or after sequence number `seq`.
  EventLog slice_from(std::uint64_t seq) const {
    EventLog out;
    auto r = std::lower_bound(records_.begin(), records_.end(), seq,
                              [](const LogRecord& rec, std::uint64_t s) { return rec.seq < s; });
    out.records_.assign(r, records_.end());
    auto f = std::lower_bound(frames_.begin(), frames_.end(), seq,
                              [](const FrameRecord& fr, std::uint64_t s) { return fr.log_seq < s; });
    out.frames_.assign(f, frames_.end());
    out.next_seq_ = next_seq_;
    return out;
  }

 private:
  std::vector<LogRecord> records_;
  std::vector<FrameRecord> frames_;
  std::uint64_t next_seq_{0};
};

}  // namespace phoenix::sim
