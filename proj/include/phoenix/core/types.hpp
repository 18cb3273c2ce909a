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

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

namespace phoenix {

// Simulated time in integer milliseconds.
using SimTime = std::int64_t;

using DeviceId = std::string;

struct NodeId {
  std::uint64_t value{0};

  constexpr NodeId() = default;
  constexpr explicit NodeId(std::uint64_t v) : value(v) {}

  constexpr auto operator<=>(const NodeId&) const = default;
};

inline void to_json(nlohmann::json& j, const NodeId& id) { j = id.value; }
inline void from_json(const nlohmann::json& j, NodeId& id) { id.value = j.get<std::uint64_t>(); }

using LinkId = std::uint32_t;

enum class Errc {
  PastTime,
  LinkDown,
  NoRoute,
  ModelBounds,
  NotAttached,
  UnknownVni,
  ModelInvalid,
  UnknownSubstation,
  AlreadyConfigured,
  DuplicateName,
  EnvironmentMissing,
  CacheOverflow,
  AlreadyPaired,
  NotPaired,
  BadControlAuth,
  ParseError,
  BindFailure,
  UnknownNode,
  UnknownDevice,
  InvalidArgument,
  Malformed,
};

constexpr std::string_view to_string(Errc c) {
  switch (c) {
    case Errc::PastTime: return "PastTime";
    case Errc::LinkDown: return "LinkDown";
    case Errc::NoRoute: return "NoRoute";
    case Errc::ModelBounds: return "ModelBounds";
    case Errc::NotAttached: return "NotAttached";
    case Errc::UnknownVni: return "UnknownVni";
    case Errc::ModelInvalid: return "ModelInvalid";
    case Errc::UnknownSubstation: return "UnknownSubstation";
    case Errc::AlreadyConfigured: return "AlreadyConfigured";
    case Errc::DuplicateName: return "DuplicateName";
    case Errc::EnvironmentMissing: return "EnvironmentMissing";
    case Errc::CacheOverflow: return "CacheOverflow";
    case Errc::AlreadyPaired: return "AlreadyPaired";
    case Errc::NotPaired: return "NotPaired";
    case Errc::BadControlAuth: return "BadControlAuth";
    case Errc::ParseError: return "ParseError";
    case Errc::BindFailure: return "BindFailure";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::UnknownDevice: return "UnknownDevice";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::Malformed: return "Malformed";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(fmt::format("{}: {}", to_string(code), what)), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

// Static name registry for nodes. Hostnames such as voip-phx23.phxnet.org are
// derived from these names.
class NodeDirectory {
 public:
  void add(NodeId id, std::string name) {
    if (by_name_.count(name) != 0 || names_.count(id) != 0) {
      throw Error(Errc::InvalidArgument, fmt::format("duplicate node {} ({})", id.value, name));
    }
    by_name_.emplace(name, id);
    names_.emplace(id, std::move(name));
  }

  const std::string& name(NodeId id) const {
    auto it = names_.find(id);
    if (it == names_.end()) throw Error(Errc::UnknownNode, fmt::format("node {}", id.value));
    return it->second;
  }

  std::optional<NodeId> find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(NodeId id) const { return names_.count(id) != 0; }
  const std::map<NodeId, std::string>& all() const { return names_; }

 private:
  std::map<NodeId, std::string> names_;
  std::map<std::string, NodeId> by_name_;
};

}  // namespace phoenix

template <>
struct std::hash<phoenix::NodeId> {
  std::size_t operator()(const phoenix::NodeId& id) const noexcept {
    return std::hash<std::uint64_t>{}(id.value);
  }
};

template <>
struct fmt::formatter<phoenix::NodeId> : fmt::formatter<std::uint64_t> {
  template <typename Ctx>
  auto format(const phoenix::NodeId& id, Ctx& ctx) const {
    return fmt::formatter<std::uint64_t>::format(id.value, ctx);
  }
};
