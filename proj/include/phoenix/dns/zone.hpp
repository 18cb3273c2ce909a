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
#include <vector>

#include "phoenix/dns/record.hpp"

namespace phoenix::dns {

// One node's view of the shared namespace: records it is authoritative for,
// plus the latest published set of every other origin it has heard from.
class SharedZone {
 public:
  struct Replica {
    std::uint64_t serial{0};
    std::vector<ResourceRecord> records;
    SimTime expires_at{0};
  };

  explicit SharedZone(NodeId self = {}) : self_(self) {}

  NodeId self() const { return self_; }

  // Returns false when an identical record is already present.
  bool add_own(ResourceRecord r) {
    r.origin = self_;
    for (auto& o : own_) {
      if (o.same_identity(r)) {
        if (o == r) return false;
        o = std::move(r);
        ++serial_;
        return true;
      }
    }
    own_.push_back(std::move(r));
    ++serial_;
    return true;
  }

  // Removes own records matching name and type (and rdata when given).
  std::size_t remove_own(std::string_view name, RrType type, std::optional<std::string_view> rdata = {}) {
    auto before = own_.size();
    std::erase_if(own_, [&](const ResourceRecord& r) {
      return r.name == name && r.type == type && (!rdata || r.rdata == *rdata);
    });
    auto removed = before - own_.size();
    if (removed != 0) ++serial_;
    return removed;
  }

  // Replaces the stored set for `origin` if `serial` is newer, or refreshes
  // the hold timer when it is the same serial. Returns true if contents changed.
  bool apply_publish(NodeId origin, std::uint64_t serial, std::vector<ResourceRecord> records,
                     SimTime expires_at) {
    if (origin == self_) return false;
    auto it = replicas_.find(origin);
    if (it != replicas_.end()) {
      if (serial < it->second.serial) return false;
      if (serial == it->second.serial) {
        it->second.expires_at = std::max(it->second.expires_at, expires_at);
        return false;
      }
    }
    for (auto& r : records) r.origin = origin;
    replicas_[origin] = Replica{serial, std::move(records), expires_at};
    return true;
  }

  std::vector<NodeId> expire(SimTime now) {
    std::vector<NodeId> gone;
    for (auto it = replicas_.begin(); it != replicas_.end();) {
      if (it->second.expires_at <= now) {
        gone.push_back(it->first);
        it = replicas_.erase(it);
      } else {
        ++it;
      }
    }
    return gone;
  }

  void clear_replicas() { replicas_.clear(); }
  void clear_own() {
    if (!own_.empty()) ++serial_;
    own_.clear();
  }

  std::uint64_t serial() const { return serial_; }
  const std::vector<ResourceRecord>& own() const { return own_; }
  const std::map<NodeId, Replica>& replicas() const { return replicas_; }

  // Own records matching (name, type), merge-ordered.
  std::vector<ResourceRecord> lookup_own(std::string_view name, RrType type) const {
    std::vector<ResourceRecord> out;
    for (const auto& r : own_) {
      if (r.name == name && r.type == type) out.push_back(r);
    }
    sort_merged(out);
    return out;
  }

  // Own and replicated records matching (name, type), merge-ordered. For
  // hostname claims only the winning claim is visible.
  std::vector<ResourceRecord> lookup(std::string_view name, RrType type) const {
    std::vector<ResourceRecord> out;
    auto take = [&](const std::vector<ResourceRecord>& rs) {
      for (const auto& r : rs) {
        if (r.name == name && r.type == type) out.push_back(r);
      }
    };
    take(own_);
    for (const auto& [_, rep] : replicas_) take(rep.records);
    if (auto w = winning_claim(name); w && type == RrType::A) {
      std::erase_if(out, [&](const ResourceRecord& r) { return r.is_claim() && r.origin != w->origin; });
    }
    sort_merged(out);
    return out;
  }

  // Earliest claim on a hostname across everything this node knows; ties go
  // to the lower origin id.
  std::optional<ResourceRecord> winning_claim(std::string_view name) const {
    std::optional<ResourceRecord> best;
    auto consider = [&](const std::vector<ResourceRecord>& rs) {
      for (const auto& r : rs) {
        if (r.name != name || !r.is_claim()) continue;
        if (!best || std::tie(r.claimed_at, r.origin) < std::tie(best->claimed_at, best->origin)) best = r;
      }
    };
    consider(own_);
    for (const auto& [_, rep] : replicas_) consider(rep.records);
    return best;
  }

  std::vector<ResourceRecord> all() const {
    std::vector<ResourceRecord> out = own_;
    for (const auto& [_, rep] : replicas_) out.insert(out.end(), rep.records.begin(), rep.records.end());
    sort_merged(out);
    return out;
  }

 private:
  NodeId self_;
  std::vector<ResourceRecord> own_;
  std::uint64_t serial_{0};
  std::map<NodeId, Replica> replicas_;
};

}  // namespace phoenix::dns
