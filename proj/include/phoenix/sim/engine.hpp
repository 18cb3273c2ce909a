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
#include <functional>
#include <queue>
#include <random>
#include <unordered_map>
#include <variant>
#include <vector>

#include "phoenix/sim/event_log.hpp"
#include "phoenix/sim/scenario_event.hpp"

namespace phoenix::sim {

using EventId = std::uint64_t;
using Action = std::function<void()>;

// Seeded 64-bit stream. Uniform doubles are built from the top 53 bits so the
// sequence does not depend on the standard library's distribution code.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  bool bernoulli(double p) { return uniform() < p; }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : gen_() % n; }

 private:
  std::mt19937_64 gen_;
};

// Discrete-event engine. Events are ordered by (time, insertion sequence).
class Engine {
 public:
  explicit Engine(std::uint64_t seed = 0) : seed_(seed), rng_(seed) {}

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  SimTime now() const { return now_; }
  std::uint64_t seed() const { return seed_; }

  EventId schedule(ScenarioEvent ev) {
    SimTime at = ev.at;
    return push(at, Payload{std::move(ev)});
  }

  EventId schedule_at(SimTime at, Action fn) { return push(at, Payload{std::move(fn)}); }
  EventId schedule_after(SimTime delay, Action fn) { return push(now_ + delay, Payload{std::move(fn)}); }

  bool cancel(EventId id) { return payloads_.erase(id) != 0; }

  void on_scenario_event(std::function<void(const ScenarioEvent&)> handler) {
    scenario_handler_ = std::move(handler);
  }

  // Invoked after every processed event; used for phase tracking.
  void on_after_event(std::function<void()> hook) { after_event_ = std::move(hook); }

  // Processes every event with at <= t, then sets now = t. Returns the log
  // entries produced during this call.
  EventLog run_until(SimTime t) {
    auto mark = log_.next_seq();
    advance_to(t);
    return log_.slice_from(mark);
  }

  // Same as run_until without materializing the slice.
  void advance_to(SimTime t) {
    if (t < now_) throw Error(Errc::PastTime, fmt::format("run_until({}) with now={}", t, now_));
    while (!queue_.empty() && queue_.top().at <= t) {
      Entry e = queue_.top();
      queue_.pop();
      auto it = payloads_.find(e.id);
      if (it == payloads_.end()) continue;
      Payload p = std::move(it->second);
      payloads_.erase(it);
      now_ = e.at;
      ++processed_;
      dispatch(p);
      if (after_event_) after_event_();
    }
    now_ = t;
  }

  std::size_t queue_length() const { return payloads_.size(); }
  std::uint64_t processed() const { return processed_; }

  EventLog& log() { return log_; }
  const EventLog& log() const { return log_; }
  Rng& rng() { return rng_; }

 private:
  using Payload = std::variant<Action, ScenarioEvent>;

  struct Entry {
    SimTime at;
    EventId id;
    bool operator>(const Entry& o) const { return at != o.at ? at > o.at : id > o.id; }
  };

  EventId push(SimTime at, Payload p) {
    if (at < now_) throw Error(Errc::PastTime, fmt::format("event at {} before now={}", at, now_));
    EventId id = next_id_++;
    payloads_.emplace(id, std::move(p));
    queue_.push(Entry{at, id});
    return id;
  }

  void dispatch(Payload& p) {
    if (auto* fn = std::get_if<Action>(&p)) {
      (*fn)();
      return;
    }
    auto& ev = std::get<ScenarioEvent>(p);
    nlohmann::json data = ev.payload;
    data["event"] = to_string(ev.kind);
    log_.append(now_, "scenario_event", std::move(data));
    if (scenario_handler_) scenario_handler_(ev);
  }

  std::uint64_t seed_;
  SimTime now_{0};
  EventId next_id_{0};
  std::uint64_t processed_{0};
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> queue_;
  std::unordered_map<EventId, Payload> payloads_;
  std::function<void(const ScenarioEvent&)> scenario_handler_;
  std::function<void()> after_event_;
  EventLog log_;
  Rng rng_;
};

}  // namespace phoenix::sim
