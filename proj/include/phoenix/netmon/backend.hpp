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
#include <mutex>
#include <shared_mutex>
#include <vector>

#include "phoenix/netmon/sample.hpp"

namespace phoenix::netmon {

// Time-indexed sample store at the control center, one partition per VLAN.
// Written by the simulation thread only; readers (API server) take a shared
// lock.
class Backend {
 public:
  // Called on the writer thread for every accepted sample.
  using Subscriber = std::function<void(const MonitorSample&)>;

  void accept(const MonitorSample& s) {
    std::vector<Subscriber> subs;
    {
      std::unique_lock lock(mutex_);
      partitions_[s.vlan].push_back(s);
      ++per_agent_[s.agent];
      ++total_;
      for (const auto& [_, fn] : subscribers_) subs.push_back(fn);
    }
    for (const auto& fn : subs) fn(s);
  }

  int subscribe(Subscriber fn) {
    std::unique_lock lock(mutex_);
    subscribers_.emplace(++next_subscriber_, std::move(fn));
    return next_subscriber_;
  }

  void unsubscribe(int id) {
    std::unique_lock lock(mutex_);
    subscribers_.erase(id);
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return total_;
  }

  std::size_t count_for(NodeId agent) const {
    std::shared_lock lock(mutex_);
    auto it = per_agent_.find(agent);
    return it == per_agent_.end() ? 0 : it->second;
  }

  // Every stored sample in arrival order within each VLAN partition.
  std::vector<MonitorSample> samples() const {
    std::shared_lock lock(mutex_);
    std::vector<MonitorSample> out;
    out.reserve(total_);
    for (const auto& [_, part] : partitions_) out.insert(out.end(), part.begin(), part.end());
    return out;
  }

  std::vector<MonitorSample> samples(VlanType vlan) const {
    std::shared_lock lock(mutex_);
    auto it = partitions_.find(vlan);
    return it == partitions_.end() ? std::vector<MonitorSample>{} : it->second;
  }

  std::vector<MonitorSample> samples_of(NodeId agent) const {
    std::shared_lock lock(mutex_);
    std::vector<MonitorSample> out;
    for (const auto& [_, part] : partitions_) {
      for (const auto& s : part) {
        if (s.agent == agent) out.push_back(s);
      }
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
    return out;
  }

  // Snapshot derived only from samples stamped at or before `at`.
  NetworkSnapshot query_state(SimTime at) const { return fold_samples(samples(), at); }

  // All alerts known as of `at`, active and cleared.
  std::vector<Alert> alerts(SimTime at) const {
    auto snap = query_state(at);
    std::vector<Alert> out;
    for (auto& [_, a] : snap.alerts) out.push_back(std::move(a));
    std::sort(out.begin(), out.end(), [](const Alert& a, const Alert& b) {
      return std::tie(a.raised_at, a.id) < std::tie(b.raised_at, b.id);
    });
    return out;
  }

 private:
  mutable std::shared_mutex mutex_;
  std::map<VlanType, std::vector<MonitorSample>> partitions_;
  std::map<NodeId, std::size_t> per_agent_;
  std::size_t total_{0};
  std::map<int, Subscriber> subscribers_;
  int next_subscriber_{0};
};

}  // namespace phoenix::netmon
