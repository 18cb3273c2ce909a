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

#include <atomic>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <csignal>
#include <deque>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "phoenix/harness/network.hpp"

namespace phoenix::harness {

struct ApiResponse {
  int status{200};
  nlohmann::json body;
};

// Maps requests to the simulated world. Holds `world` while touching the
// network; backend reads rely on the backend's own lock.
class ApiRouter {
 public:
  ApiRouter(Network& net, std::mutex& world) : net_(net), world_(world) {}

  ApiResponse handle(std::string_view method, std::string_view target, std::string_view body) {
    try {
      return route(method, target, body);
    } catch (const Error& e) {
      return {e.code() == Errc::UnknownNode ? 404 : 400, {{"error", std::string(to_string(e.code()))}, {"message", e.what()}}};
    } catch (const std::exception& e) {
      return {400, {{"error", "InvalidArgument"}, {"message", e.what()}}};
    }
  }

 private:
  static std::map<std::string, std::string> query(std::string_view q) {
    std::map<std::string, std::string> out;
    while (!q.empty()) {
      auto amp = q.find('&');
      auto part = q.substr(0, amp);
      auto eq = part.find('=');
      if (eq == std::string_view::npos) {
        out[std::string(part)] = "";
      } else {
        out[std::string(part.substr(0, eq))] = std::string(part.substr(eq + 1));
      }
      if (amp == std::string_view::npos) break;
      q.remove_prefix(amp + 1);
    }
    return out;
  }

  SimTime now() {
    std::lock_guard lock(world_);
    return net_.now();
  }

  SimTime at_param(const std::map<std::string, std::string>& q) {
    auto it = q.find("at");
    if (it == q.end() || it->second.empty()) return now();
    std::size_t pos = 0;
    long long v = std::stoll(it->second, &pos);
    if (pos != it->second.size() || v < 0) throw Error(Errc::InvalidArgument, "at must be a non-negative integer");
    return v;
  }

  ApiResponse route(std::string_view method, std::string_view target, std::string_view body) {
    auto qpos = target.find('?');
    auto path = target.substr(0, qpos);
    auto q = query(qpos == std::string_view::npos ? std::string_view{} : target.substr(qpos + 1));

    if (method == "GET" && path == "/health") return {200, {{"now", now()}, {"scenario", net_.scenario_name()}}};
    if (method == "GET" && path == "/snapshot") {
      auto at = at_param(q);
      return {200, to_json(net_.backend().query_state(at))};
    }
    if (method == "GET" && path == "/alerts") {
      auto at = at_param(q);
      bool active_only = q.count("active") != 0 && q["active"] != "0";
      nlohmann::json out = nlohmann::json::array();
      for (const auto& a : net_.backend().alerts(at)) {
        if (!active_only || a.active()) out.push_back(a);
      }
      return {200, out};
    }
    if (method == "GET" && path.rfind("/devices/", 0) == 0) return devices(path.substr(9));
    if (method == "POST" && path == "/actions") return action(body);
    if (path == "/snapshot" || path == "/alerts" || path == "/actions" || path == "/health") {
      return {405, {{"error", "MethodNotAllowed"}}};
    }
    return {404, {{"error", "NotFound"}, {"path", std::string(path)}}};
  }

  ApiResponse devices(std::string_view key) {
    NodeId id;
    nlohmann::json envs;
    int phase = 0;
    std::string name;
    SimTime at = 0;
    {
      std::lock_guard lock(world_);
      if (auto found = net_.directory().find(key)) {
        id = *found;
      } else {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(key.data(), key.data() + key.size(), v);
        if (ec != std::errc() || p != key.data() + key.size() || !net_.directory().contains(NodeId{v})) {
          throw Error(Errc::UnknownNode, fmt::format("no node '{}'", key));
        }
        id = NodeId{v};
      }
      name = net_.directory().name(id);
      envs = net_.environments_json(id);
      phase = net_.phase(id);
      at = net_.now();
    }
    auto snap = net_.backend().query_state(at);
    nlohmann::json devs = nlohmann::json::array();
    if (auto it = snap.devices.find(id); it != snap.devices.end()) {
      for (const auto& [_, d] : it->second) {
        devs.push_back({{"device", d.device},
                        {"address", d.address},
                        {"vlan", d.vlan},
                        {"reachable", d.reachable},
                        {"last_seen", d.last_seen},
                        {"open_ports", d.open_ports}});
      }
    }
    return {200,
            {{"node", id.value}, {"name", name}, {"phase", phase}, {"environments", envs}, {"devices", devs}, {"as_of", at}}};
  }

  ApiResponse action(std::string_view body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) return {400, {{"error", "ParseError"}, {"message", "body must be a JSON object"}}};
    auto kind = sim::parse_event_kind(j.value("kind", ""));
    if (!kind) return {400, {{"error", "ParseError"}, {"message", "unknown action kind"}}};
    sim::ScenarioEvent ev;
    ev.kind = *kind;
    ev.payload = j;
    ev.payload.erase("kind");
    ev.payload.erase("at");
    std::lock_guard lock(world_);
    Ack ack = net_.submit(std::move(ev));
    nlohmann::json out = ack;
    out["at"] = net_.now();
    return {200, out};
  }

  Network& net_;
  std::mutex& world_;
};

struct ServeOptions {
  std::string address{"127.0.0.1"};
  std::uint16_t port{8080};
  bool live{false};
  // Simulated milliseconds per wall-clock millisecond.
  double pace{1.0};
  SimTime until{0};
  bool handle_signals{false};
};

class ApiServer;

namespace detail {

namespace beast = boost::beast;
namespace http = boost::beast::http;
namespace websocket = boost::beast::websocket;
namespace asio = boost::asio;
using tcp = boost::asio::ip::tcp;

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket s, ApiServer& server) : ws_(std::move(s)), server_(server) {}
  void run(http::request<http::string_body> req);
  void send(std::shared_ptr<const std::string> msg);
  void close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void do_read();
  void do_write();

  websocket::stream<beast::tcp_stream> ws_;
  ApiServer& server_;
  http::request<http::string_body> req_;
  beast::flat_buffer buffer_;
  std::deque<std::shared_ptr<const std::string>> queue_;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket s, ApiServer& server) : stream_(std::move(s)), server_(server) {}
  void run() { do_read(); }

 private:
  void do_read();
  void on_read(beast::error_code ec);

  beast::tcp_stream stream_;
  ApiServer& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace detail

// HTTP + WebSocket front end. The io_context runs on one thread, so session
// bookkeeping needs no locking; the live clock runs on another.
class ApiServer {
 public:
  ApiServer(Network& net, ServeOptions options) : net_(net), options_(std::move(options)), router_(net_, world_) {}
  ~ApiServer() { stop(); }

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  // Binds and starts serving; returns the bound port.
  std::uint16_t start() {
    namespace asio = boost::asio;
    boost::system::error_code ec;
    auto addr = asio::ip::make_address(options_.address, ec);
    if (ec) throw Error(Errc::BindFailure, fmt::format("bad address '{}'", options_.address));
    detail::tcp::endpoint ep{addr, options_.port};
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(asio::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(asio::socket_base::max_listen_connections, ec);
    if (ec) throw Error(Errc::BindFailure, fmt::format("{}:{}: {}", options_.address, options_.port, ec.message()));
    port_ = acceptor_.local_endpoint().port();

    subscription_ = net_.backend().subscribe([this](const netmon::MonitorSample& s) { publish(s); });
    if (options_.handle_signals) {
      signals_.add(SIGINT);
      signals_.add(SIGTERM);
      signals_.async_wait([this](const boost::system::error_code& e, int) {
        if (!e) request_stop();
      });
    }
    do_accept();
    running_ = true;
    io_thread_ = std::thread([this]() { ioc_.run(); });
    if (options_.live) clock_thread_ = std::thread([this]() { live_clock(); });
    return port_;
  }

  // Blocks until stop is requested (signal or request_stop).
  void wait() {
    std::unique_lock lock(stop_mutex_);
    stop_cv_.wait(lock, [this]() { return stop_requested_; });
  }

  void request_stop() {
    {
      std::lock_guard lock(stop_mutex_);
      stop_requested_ = true;
    }
    stop_cv_.notify_all();
  }

  void stop() {
    if (!running_.exchange(false)) return;
    request_stop();
    if (clock_thread_.joinable()) clock_thread_.join();
    net_.backend().unsubscribe(subscription_);
    boost::asio::post(ioc_, [this]() {
      boost::system::error_code ec;
      acceptor_.close(ec);
      signals_.cancel(ec);
      for (const auto& s : sessions_) s->close();
      sessions_.clear();
      ioc_.stop();
    });
    if (io_thread_.joinable()) io_thread_.join();
  }

  std::uint16_t port() const { return port_; }
  std::mutex& world() { return world_; }
  ApiRouter& router() { return router_; }
  std::size_t ws_clients() const { return ws_count_.load(); }
  std::uint64_t pushed() const { return pushed_.load(); }

  // Session bookkeeping; io thread only.
  void join(const std::shared_ptr<detail::WsSession>& s) {
    sessions_.insert(s);
    ws_count_ = sessions_.size();
  }
  void leave(const std::shared_ptr<detail::WsSession>& s) {
    sessions_.erase(s);
    ws_count_ = sessions_.size();
  }
  void upgrade(detail::tcp::socket socket, detail::http::request<detail::http::string_body> req) {
    std::make_shared<detail::WsSession>(std::move(socket), *this)->run(std::move(req));
  }

 private:
  void do_accept() {
    acceptor_.async_accept(boost::asio::make_strand(ioc_), [this](boost::system::error_code ec, detail::tcp::socket s) {
      if (ec) return;
      std::make_shared<detail::HttpSession>(std::move(s), *this)->run();
      do_accept();
    });
  }

  // Called from whichever thread advanced the world; forwards to sockets on
  // the io thread.
  void publish(const netmon::MonitorSample& s) {
    nlohmann::json msg = {{"type", "sample"}, {"sample", s}};
    auto text = std::make_shared<const std::string>(msg.dump());
    std::shared_ptr<const std::string> alert;
    if (s.kind == netmon::SampleKind::IdsEvent) {
      nlohmann::json a = {{"type", "alert"},
                          {"action", s.payload.value("action", "raise")},
                          {"id", s.payload.value("alert_id", "")},
                          {"kind", s.payload.value("kind", "")},
                          {"severity", s.payload.value("severity", "info")},
                          {"subject", s.payload.value("subject", "")},
                          {"source", s.agent.value},
                          {"at", s.at}};
      alert = std::make_shared<const std::string>(a.dump());
    }
    boost::asio::post(ioc_, [this, text, alert]() {
      for (const auto& sess : sessions_) {
        sess->send(text);
        if (alert) sess->send(alert);
      }
      pushed_ += sessions_.size();
    });
  }

  // Advances simulated time in step with the wall clock.
  void live_clock() {
    using clock = std::chrono::steady_clock;
    auto wall0 = clock::now();
    SimTime sim0 = 0;
    {
      std::lock_guard lock(world_);
      sim0 = net_.now();
    }
    while (running_) {
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
      auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(clock::now() - wall0).count();
      auto target = sim0 + static_cast<SimTime>(static_cast<double>(elapsed) * options_.pace);
      if (options_.until > 0) target = std::min(target, options_.until);
      std::lock_guard lock(world_);
      if (target > net_.now()) net_.run_until(target);
    }
  }

  Network& net_;
  ServeOptions options_;
  std::mutex world_;
  ApiRouter router_;
  boost::asio::io_context ioc_{1};
  boost::asio::executor_work_guard<boost::asio::io_context::executor_type> work_{boost::asio::make_work_guard(ioc_)};
  detail::tcp::acceptor acceptor_{ioc_};
  boost::asio::signal_set signals_{ioc_};
  std::set<std::shared_ptr<detail::WsSession>> sessions_;
  std::atomic<std::size_t> ws_count_{0};
  std::atomic<std::uint64_t> pushed_{0};
  std::atomic<bool> running_{false};
  std::thread io_thread_;
  std::thread clock_thread_;
  int subscription_{0};
  std::uint16_t port_{0};
  std::mutex stop_mutex_;
  std::condition_variable stop_cv_;
  bool stop_requested_{false};
};

namespace detail {

inline void WsSession::run(http::request<http::string_body> req) {
  req_ = std::move(req);
  ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws_.async_accept(req_, [self = shared_from_this()](beast::error_code ec) {
    if (ec) return;
    self->server_.join(self);
    self->do_read();
  });
}

inline void WsSession::send(std::shared_ptr<const std::string> msg) {
  queue_.push_back(std::move(msg));
  if (queue_.size() > 1) return;
  do_write();
}

inline void WsSession::do_read() {
  ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) {
      self->server_.leave(self);
      return;
    }
    self->buffer_.consume(self->buffer_.size());
    self->do_read();
  });
}

inline void WsSession::do_write() {
  ws_.text(true);
  ws_.async_write(asio::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
    if (ec) {
      self->server_.leave(self);
      return;
    }
    self->queue_.pop_front();
    if (!self->queue_.empty()) self->do_write();
  });
}

inline void HttpSession::do_read() {
  req_ = {};
  stream_.expires_after(std::chrono::seconds(30));
  http::async_read(stream_, buffer_, req_,
                   [self = shared_from_this()](beast::error_code ec, std::size_t) { self->on_read(ec); });
}

inline void HttpSession::on_read(beast::error_code ec) {
  if (ec) {
    beast::error_code ignored;
    stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    return;
  }
  if (websocket::is_upgrade(req_)) {
    stream_.expires_never();
    server_.upgrade(stream_.release_socket(), std::move(req_));
    return;
  }
  auto method = req_.method_string();
  auto target = req_.target();
  auto r = server_.router().handle(std::string_view(method.data(), method.size()),
                                   std::string_view(target.data(), target.size()), req_.body());
  auto res = std::make_shared<http::response<http::string_body>>(static_cast<http::status>(r.status), req_.version());
  res->set(http::field::content_type, "application/json");
  res->set(http::field::access_control_allow_origin, "*");
  res->keep_alive(req_.keep_alive());
  res->body() = r.body.dump();
  res->prepare_payload();
  http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code e, std::size_t) {
    if (e) return;
    if (!res->keep_alive()) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
      return;
    }
    self->do_read();
  });
}

}  // namespace detail

}  // namespace phoenix::harness
