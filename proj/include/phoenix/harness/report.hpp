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
#include <memory>
#include <string>
#include <vector>

#include "phoenix/harness/audits.hpp"

namespace phoenix::harness {

struct RunReport {
  std::string scenario;
  std::uint64_t seed{0};
  SimTime duration_ms{0};
  std::vector<AuditResult> audits;
  std::map<std::string, std::uint64_t> counters;
  std::string digest;

  bool passed() const {
    return std::none_of(audits.begin(), audits.end(), [](const auto& a) { return a.status == AuditStatus::Fail; });
  }
  int exit_code() const { return passed() ? 0 : 1; }

  std::string to_text() const {
    std::string out = fmt::format("scenario {} seed {} duration {} ms\n", scenario, seed, duration_ms);
    for (const auto& a : audits) {
      out += fmt::format("  {:<4} {}.{} ({} checked){}\n", to_string(a.status), a.module, a.name, a.checked,
                         a.detail.empty() ? "" : " " + a.detail);
    }
    for (const auto& [k, v] : counters) out += fmt::format("  {} = {}\n", k, v);
    out += fmt::format("digest {}\nresult {}\n", digest, passed() ? "PASS" : "FAIL");
    return out;
  }

  bool operator==(const RunReport&) const = default;
};

inline void to_json(nlohmann::json& j, const RunReport& r) {
  j = {{"scenario", r.scenario}, {"seed", r.seed},     {"duration_ms", r.duration_ms}, {"audits", r.audits},
       {"counters", r.counters}, {"digest", r.digest}, {"passed", r.passed()}};
}

inline void from_json(const nlohmann::json& j, RunReport& r) {
  r.scenario = j.at("scenario").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.duration_ms = j.at("duration_ms").get<SimTime>();
  r.audits = j.at("audits").get<std::vector<AuditResult>>();
  r.counters = j.at("counters").get<std::map<std::string, std::uint64_t>>();
  r.digest = j.at("digest").get<std::string>();
}

inline RunReport make_report(Network& net) {
  RunReport r;
  r.scenario = net.scenario_name();
  r.seed = net.engine().seed();
  r.duration_ms = net.now();
  r.audits = run_audits(net);
  const auto& c = net.counters();
  r.counters = {{"frames", net.engine().log().frames().size()},
                {"frames_sent", c.frames_sent},
                {"deliveries", c.deliveries},
                {"drops", c.drops},
                {"injections", c.injections},
                {"events", c.events},
                {"rejected", c.rejected},
                {"alerts", net.backend().alerts(net.now()).size()},
                {"backend_samples", net.backend().size()},
                {"calls", net.voip().calls().size()}};
  r.digest = net.engine().log().digest();
  return r;
}

struct RunOutcome {
  std::unique_ptr<Network> network;
  RunReport report;
};

// Runs a scenario to its end (or `until`) and audits the result.
inline RunOutcome run_scenario(const Scenario& s, std::optional<config::DeploymentModel> model = std::nullopt,
                               std::optional<std::uint64_t> seed = std::nullopt,
                               std::optional<SimTime> until = std::nullopt) {
  RunOutcome out;
  out.network = Network::from_scenario(s, std::move(model), seed);
  out.network->run_until(until.value_or(s.duration_ms));
  out.report = make_report(*out.network);
  return out;
}

}  // namespace phoenix::harness
