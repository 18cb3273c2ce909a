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

#include <numeric>
#include <random>

#include "phoenix/mesh/mesh.hpp"

namespace phoenix::testing {

using Edges = std::vector<std::pair<NodeId, NodeId>>;

// Random connected graph on nodes 1..n: random tree plus random chords.
inline Edges random_connected(std::mt19937_64& rng, int n) {
  std::set<std::pair<NodeId, NodeId>> edges;
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 1);
  std::shuffle(order.begin(), order.end(), rng);
  for (int i = 1; i < n; ++i) {
    int a = order[static_cast<std::size_t>(i)];
    int b = order[rng() % static_cast<std::size_t>(i)];
    edges.emplace(NodeId{static_cast<std::uint64_t>(std::min(a, b))}, NodeId{static_cast<std::uint64_t>(std::max(a, b))});
  }
  int chords = static_cast<int>(rng() % static_cast<std::uint64_t>(n + 1));
  for (int k = 0; k < chords; ++k) {
    int a = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    int b = 1 + static_cast<int>(rng() % static_cast<std::uint64_t>(n));
    if (a != b) edges.emplace(NodeId{static_cast<std::uint64_t>(std::min(a, b))}, NodeId{static_cast<std::uint64_t>(std::max(a, b))});
  }
  return {edges.begin(), edges.end()};
}

// Mesh over point-to-point links for nodes 1..n, all powered on.
struct LiveMesh {
  sim::Engine engine;
  sim::Medium medium{engine};
  mesh::Mesh mesh{engine, medium};
  std::map<std::pair<NodeId, NodeId>, LinkId> links;

  LiveMesh(const Edges& edges, int n, std::uint64_t seed) : engine(seed) {
    medium.set_receiver([this](NodeId to, NodeId from, LinkId l, const sim::Packet& p) { mesh.handle_frame(to, from, l, p); });
    for (int i = 1; i <= n; ++i) mesh.add_node(NodeId{static_cast<std::uint64_t>(i)});
    for (auto [a, b] : edges) links[{a, b}] = medium.add_link(sim::make_link(a, b, 1 + static_cast<std::int64_t>((a.value * 7 + b.value) % 9), 2000));
    for (int i = 1; i <= n; ++i) mesh.power_on(NodeId{static_cast<std::uint64_t>(i)});
  }
};

// Ring 1..n plus random chords: no single node removal disconnects it.
inline Edges random_biconnected(std::mt19937_64& rng, int n) {
  std::set<std::pair<NodeId, NodeId>> edges;
  auto add = [&](std::uint64_t a, std::uint64_t b) {
    if (a != b) edges.emplace(NodeId{std::min(a, b)}, NodeId{std::max(a, b)});
  };
  for (int i = 1; i <= n; ++i) add(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(i % n + 1));
  for (int k = static_cast<int>(rng() % static_cast<std::uint64_t>(n)); k > 0; --k) {
    add(1 + rng() % static_cast<std::uint64_t>(n), 1 + rng() % static_cast<std::uint64_t>(n));
  }
  return {edges.begin(), edges.end()};
}

}  // namespace phoenix::testing
