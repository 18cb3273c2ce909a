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

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "phoenix/harness/api_server.hpp"
#include "phoenix/harness/random_scenario.hpp"
#include "phoenix/harness/report.hpp"

namespace {

using namespace phoenix;
using namespace phoenix::harness;

struct Common {
  std::string scenario;
  std::string model;
  std::optional<std::uint64_t> seed;
  std::optional<SimTime> until;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("scenario", c.scenario, "scenario JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--model", c.model, "deployment model JSON (overrides the scenario's)")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the scenario seed");
  cmd->add_option("--until", c.until, "stop at this simulated time (ms)");
}

std::optional<config::DeploymentModel> model_of(const Common& c) {
  if (c.model.empty()) return std::nullopt;
  return load_model(c.model);
}

RunOutcome run(const Common& c) {
  auto s = load_scenario(c.scenario);
  spdlog::info("running {} (seed {}, {} events)", s.name, c.seed.value_or(s.seed), s.events.size());
  auto out = run_scenario(s, model_of(c), c.seed, c.until);
  spdlog::info("finished at {} ms, digest {}", out.network->now(), out.report.digest);
  return out;
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(Errc::InvalidArgument, fmt::format("cannot write '{}'", path));
  f << text;
}

void init_logging() {
  auto logger = spdlog::stderr_color_mt("phoenix");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("%H:%M:%S.%e %^%l%$ %v");
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("PHOENIX_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

std::pair<std::string, std::uint16_t> parse_bind(const std::string& bind) {
  auto colon = bind.rfind(':');
  if (colon == std::string::npos) return {"127.0.0.1", static_cast<std::uint16_t>(std::stoi(bind))};
  return {bind.substr(0, colon), static_cast<std::uint16_t>(std::stoi(bind.substr(colon + 1)))};
}

// Runs the scenario, submits one more event, and keeps going until `settle`
// ms have passed so asynchronous outcomes land.
std::unique_ptr<Network> run_then(const Common& c, sim::ScenarioEvent ev, SimTime settle, Ack& ack) {
  auto s = load_scenario(c.scenario);
  auto net = Network::from_scenario(s, model_of(c), c.seed);
  net->run_until(c.until.value_or(s.duration_ms));
  ack = net->submit(std::move(ev));
  net->run_until(net->now() + settle);
  return net;
}

}  // namespace

int main(int argc, char** argv) {
  init_logging();
  CLI::App app{"PhoenixSEN substation network simulator"};
  app.require_subcommand(1);

  std::string model_path;
  std::string out_path;
  auto* synth = app.add_subcommand("synth", "synthesize the per-substation configuration library");
  synth->add_option("model", model_path, "deployment model JSON, or a scenario embedding one")->required()->check(CLI::ExistingFile);
  synth->add_option("-o,--output", out_path, "output file (default stdout)");

  Common run_opts;
  bool run_json = false;
  auto* run_cmd = app.add_subcommand("run", "run a scenario and print the audit report");
  add_common(run_cmd, run_opts);
  run_cmd->add_flag("--json", run_json, "print the report as JSON");

  Common audit_opts;
  auto* audit = app.add_subcommand("audit", "run a scenario and write the JSON report");
  add_common(audit, audit_opts);
  audit->add_option("-o,--output", out_path, "output file (default stdout)");

  Common serve_opts;
  bool live = false;
  double pace = 1.0;
  std::string bind = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "serve the HTTP/WebSocket API");
  add_common(serve, serve_opts);
  serve->add_flag("--live", live, "pace simulated time against the wall clock");
  serve->add_option("--pace", pace, "simulated ms per wall-clock ms in live mode")->check(CLI::PositiveNumber);
  serve->add_option("--bind", bind, "address:port to listen on");

  Common export_opts;
  std::string what = "log";
  std::string node_name;
  std::optional<SimTime> at;
  auto* exp = app.add_subcommand("export", "run a scenario and export an artifact");
  add_common(exp, export_opts);
  exp->add_option("what", what, "log | calls | zone | library | snapshot | report | report-text")
      ->check(CLI::IsMember({"log", "calls", "zone", "library", "snapshot", "report", "report-text"}));
  exp->add_option("--node", node_name, "node whose zone view to export");
  exp->add_option("--at", at, "snapshot time (ms)");
  exp->add_option("-o,--output", out_path, "output file (default stdout)");

  Common call_opts;
  std::string call_from;
  std::string call_number;
  auto* call = app.add_subcommand("call", "run a scenario, then place a call from a node");
  add_common(call, call_opts);
  call->add_option("--from", call_from, "calling node")->required();
  call->add_option("--number", call_number, "dialed number")->required();

  Common msg_opts;
  std::string msg_from;
  std::string msg_to;
  std::string msg_body;
  auto* msg = app.add_subcommand("msg", "run a scenario, then send a text message");
  add_common(msg, msg_opts);
  msg->add_option("--from", msg_from, "sending number")->required();
  msg->add_option("--to", msg_to, "number or group")->required();
  msg->add_option("--body", msg_body, "message text");

  std::uint64_t random_seed = 1;
  RandomScenarioOptions ropts;
  auto* rnd = app.add_subcommand("random", "emit a random scenario");
  rnd->add_option("--seed", random_seed, "generator seed");
  rnd->add_option("--nodes", ropts.max_nodes, "maximum node count")->check(CLI::Range(2, 64));
  rnd->add_option("--loss", ropts.loss_rate, "per-link loss rate")->check(CLI::Range(0.0, 1.0));
  rnd->add_flag("--faults", ropts.link_faults, "add link down/up pairs");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      auto lib = config::synthesize(load_model(model_path));
      write_out(out_path, config::serialize(lib));
      spdlog::info("library hash {}", config::library_hash(lib));
      return 0;
    }
    if (run_cmd->parsed()) {
      auto out = run(run_opts);
      std::cout << (run_json ? nlohmann::json(out.report).dump(2) + "\n" : out.report.to_text());
      return out.report.exit_code();
    }
    if (audit->parsed()) {
      auto out = run(audit_opts);
      write_out(out_path, nlohmann::json(out.report).dump(2) + "\n");
      return out.report.exit_code();
    }
    if (serve->parsed()) {
      auto s = load_scenario(serve_opts.scenario);
      auto net = Network::from_scenario(s, model_of(serve_opts), serve_opts.seed);
      ServeOptions so;
      std::tie(so.address, so.port) = parse_bind(bind);
      so.live = live;
      so.pace = pace;
      so.until = serve_opts.until.value_or(live ? 0 : s.duration_ms);
      so.handle_signals = true;
      if (!live) net->run_until(so.until);
      ApiServer server(*net, so);
      auto port = server.start();
      std::cout << fmt::format("serving {} on http://{}:{} ({}, t={} ms)", s.name, so.address, port,
                               live ? "live" : "inspection", net->now())
                << std::endl;
      server.wait();
      server.stop();
      return 0;
    }
    if (exp->parsed()) {
      if (what == "library") {
        auto s = load_scenario(export_opts.scenario);
        auto m = export_opts.model.empty() ? s.model : model_of(export_opts);
        if (!m) throw Error(Errc::ModelInvalid, "scenario has no model");
        write_out(out_path, config::serialize(config::synthesize(*m)));
        return 0;
      }
      auto out = run(export_opts);
      auto& net = *out.network;
      std::string text;
      if (what == "log") {
        text = net.engine().log().to_ndjson();
      } else if (what == "calls") {
        text = nlohmann::json(net.voip().calls()).dump(2) + "\n";
      } else if (what == "zone") {
        NodeId n = node_name.empty() ? *net.control_centers().begin() : net.id(node_name);
        text = dns::dump_zone(net.dns().zone(n).all());
      } else if (what == "snapshot") {
        text = netmon::to_json(net.backend().query_state(at.value_or(net.now()))).dump(2) + "\n";
      } else if (what == "report") {
        text = nlohmann::json(out.report).dump(2) + "\n";
      } else {
        text = out.report.to_text();
      }
      write_out(out_path, text);
      return 0;
    }
    if (call->parsed()) {
      Ack ack;
      auto net = run_then(call_opts,
                          sim::ScenarioEvent{0, sim::EventKind::PlaceCall, {{"node", call_from}, {"number", call_number}}},
                          30'000, ack);
      if (!ack.accepted) {
        std::cout << nlohmann::json(ack).dump() << "\n";
        return 1;
      }
      const auto& calls = net->voip().calls();
      if (calls.empty()) return 1;
      std::cout << nlohmann::json(calls.back()).dump(2) << "\n";
      return calls.back().outcome == voip::CallOutcome::Connected ? 0 : 1;
    }
    if (msg->parsed()) {
      Ack ack;
      auto net = run_then(
          msg_opts,
          sim::ScenarioEvent{0, sim::EventKind::SendMessage, {{"from", msg_from}, {"to", msg_to}, {"body", msg_body}}},
          30'000, ack);
      if (!ack.accepted) {
        std::cout << nlohmann::json(ack).dump() << "\n";
        return 1;
      }
      auto receipts = net->engine().log().of_kind("message_receipts");
      if (receipts.empty()) return 1;
      std::cout << receipts.back()->data.dump(2) << "\n";
      return 0;
    }
    if (rnd->parsed()) {
      std::cout << random_scenario_json(random_seed, ropts).dump(2) << "\n";
      return 0;
    }
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    std::cerr << e.what() << "\n";
    return 2;
  }
  return 0;
}
