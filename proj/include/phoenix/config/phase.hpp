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

#include <optional>
#include <set>

#include "phoenix/mesh/mesh.hpp"

namespace phoenix::config {

// Observable capabilities of a node from which its formation phase follows.
struct PhaseInputs {
  bool control_channel{false};  // usable control link to a control center
  bool in_manet{false};         // at least one symmetric mesh neighbor
  bool configured{false};
  std::size_t peer_substations{0};       // other substations of the node's utility
  std::size_t reachable_substations{0};  // of those, advertised by a routed node
};

inline int formation_phase(const PhaseInputs& in) {
  if (in.in_manet) {
    bool all_peers = in.reachable_substations >= in.peer_substations;
    return in.configured && all_peers ? 4 : 3;
  }
  if (in.control_channel) return 2;
  return 1;
}

// Reads the phase inputs for `node` off the live mesh. `utility` and
// `substation_count` describe the node's configuration, if any.
inline PhaseInputs phase_inputs(const mesh::Mesh& mesh, const sim::Medium& medium, NodeId node,
                                const std::set<NodeId>& control_centers,
                                std::optional<mesh::ConfigKey> config, std::size_t substation_count) {
  PhaseInputs in;
  if (!mesh.powered(node)) return in;
  for (auto id : medium.links_of(node)) {
    const auto& l = medium.link(id);
    if (l.kind == sim::LinkKind::Control && medium.usable(id) && control_centers.count(l.peer_of(node))) {
      in.control_channel = true;
    }
  }
  in.in_manet = !mesh.neighbors(node).empty();
  in.configured = config.has_value() && config->configured();
  if (!in.configured) return in;
  in.peer_substations = substation_count > 0 ? substation_count - 1 : 0;
  std::set<std::uint16_t> seen;
  const auto& db = mesh.lsdb(node);
  for (const auto& [dst, _] : mesh.routes(node)) {
    const auto* adv = db.find(dst);
    if (adv == nullptr || !adv->config.configured()) continue;
    if (adv->config.utility_index == config->utility_index && adv->config.substation != config->substation) {
      seen.insert(adv->config.substation);
    }
  }
  in.reachable_substations = seen.size();
  return in;
}

}  // namespace phoenix::config
