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

#include <array>
#include <optional>
#include <string_view>

#include <nlohmann/json.hpp>

#include "phoenix/core/types.hpp"

namespace phoenix::sim {

enum class EventKind {
  NodeJoin,
  NodeLeave,
  LinkUp,
  LinkDown,
  DeviceAttach,
  DeviceDetach,
  DeviceCompromise,
  RegisterClient,
  PlaceCall,
  RoamClient,
  SendMessage,
  ShieldPair,
  ShieldActivate,
  ConfigApply,
  AgentPartition,
  SendFrame,
  InjectOverlay,
  InjectLanFrame,
  AssignHostname,
  RegisterRecord,
  IdsEvent,
  QuarantineDevice,
};

inline constexpr std::array<std::pair<EventKind, std::string_view>, 22> kEventKindNames{{
    {EventKind::NodeJoin, "NodeJoin"},
    {EventKind::NodeLeave, "NodeLeave"},
    {EventKind::LinkUp, "LinkUp"},
    {EventKind::LinkDown, "LinkDown"},
    {EventKind::DeviceAttach, "DeviceAttach"},
    {EventKind::DeviceDetach, "DeviceDetach"},
    {EventKind::DeviceCompromise, "DeviceCompromise"},
    {EventKind::RegisterClient, "RegisterClient"},
    {EventKind::PlaceCall, "PlaceCall"},
    {EventKind::RoamClient, "RoamClient"},
    {EventKind::SendMessage, "SendMessage"},
    {EventKind::ShieldPair, "ShieldPair"},
    {EventKind::ShieldActivate, "ShieldActivate"},
    {EventKind::ConfigApply, "ConfigApply"},
    {EventKind::AgentPartition, "AgentPartition"},
    {EventKind::SendFrame, "SendFrame"},
    {EventKind::InjectOverlay, "InjectOverlay"},
    {EventKind::InjectLanFrame, "InjectLanFrame"},
    {EventKind::AssignHostname, "AssignHostname"},
    {EventKind::RegisterRecord, "RegisterRecord"},
    {EventKind::IdsEvent, "IdsEvent"},
    {EventKind::QuarantineDevice, "QuarantineDevice"},
}};

constexpr std::string_view to_string(EventKind k) {
  for (const auto& [kind, name] : kEventKindNames) {
    if (kind == k) return name;
  }
  return "?";
}

inline std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (const auto& [kind, name] : kEventKindNames) {
    if (name == s) return kind;
  }
  return std::nullopt;
}

// Capability-removing events may legitimately demote a formation phase.
constexpr bool removes_capability(EventKind k) {
  return k == EventKind::NodeLeave || k == EventKind::LinkDown || k == EventKind::AgentPartition;
}

struct ScenarioEvent {
  SimTime at{0};
  EventKind kind{EventKind::NodeJoin};
  nlohmann::json payload = nlohmann::json::object();
};

}  // namespace phoenix::sim
