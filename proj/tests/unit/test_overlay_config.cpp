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

#include <gtest/gtest.h>

#include <random>

#include "phoenix/config/phase.hpp"
#include "phoenix/config/synth.hpp"
#include "phoenix/overlay/overlay_frame.hpp"

using namespace phoenix;
using namespace phoenix::overlay;

namespace {

NetworkEnvironment env(std::uint16_t utility, VlanType vlan, std::set<DeviceId> devices) {
  NetworkEnvironment e;
  e.key = {utility, vlan};
  e.vni = allocate_vni(utility, static_cast<std::uint32_t>(vlan));
  e.subnet = config::default_subnet(utility, 1, vlan);
  e.attached_devices = std::move(devices);
  return e;
}

const char* kModel = R"({
  "utilities": [
    {"name": "NorthGrid", "substations": 3, "vlans": ["SCADA", "IT", "VoIP"]},
    {"name": "SouthPower", "substations": 2, "vlans": ["SCADA", "VoIP"]}
  ],
  "dial_prefixes": {"NorthGrid/3": "48"}
})";

}  // namespace

TEST(OverlayFrame, HeaderLayoutIsBitExact) {
  OverlayFrame f{Vni{0x123456}, NodeId{0x0102}, NodeId{0x0A0B}, InnerFrame::make("a", "b", to_bytes("hi"))};
  auto b = encode(f);
  ASSERT_GE(b.size(), kOverlayHeaderSize);
  EXPECT_EQ(b[0], 0x12);
  EXPECT_EQ(b[1], 0x34);
  EXPECT_EQ(b[2], 0x56);
  EXPECT_EQ(b[9], 0x01);
  EXPECT_EQ(b[10], 0x02);
  EXPECT_EQ(b[17], 0x0A);
  EXPECT_EQ(b[18], 0x0B);
  // inner: str16 "a", str16 "b", u32 size, payload
  std::size_t inner_len = 2 + 1 + 2 + 1 + 4 + 2;
  EXPECT_EQ((b[19] << 8) | b[20], static_cast<int>(inner_len));
  EXPECT_EQ(b.size(), kOverlayHeaderSize + inner_len);
  EXPECT_EQ(decode(b), f);
  EXPECT_EQ(f.size(), 2u + kEncapOverhead);
}

TEST(OverlayFrame, RejectsMalformed) {
  OverlayFrame f{Vni{7}, NodeId{1}, NodeId{2}, InnerFrame::make("a", "b", to_bytes("x"))};
  auto b = encode(f);
  b.push_back(0);
  EXPECT_THROW(decode(b), Error);
  b.resize(10);
  EXPECT_THROW(decode(b), Error);
  f.vni = Vni{kMaxVni + 1};
  EXPECT_THROW(encode(f), Error);
}

TEST(Overlay, EncapsulateRequiresAttachment) {
  auto e = env(0, VlanType::Scada, {"rtu-1"});
  auto f = encapsulate(InnerFrame::make("rtu-1", "x", {}), e, NodeId{1}, NodeId{2});
  EXPECT_EQ(f.vni, e.vni);
  try {
    encapsulate(InnerFrame::make("ghost", "x", {}), e, NodeId{1}, NodeId{2});
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::NotAttached);
  }
}

TEST(Overlay, DecapsulateSelectsOnlyMatchingEnvironment) {
  std::vector<NetworkEnvironment> envs{env(0, VlanType::Scada, {"a", "b", "c"}), env(0, VlanType::It, {"d"}),
                                       env(1, VlanType::Scada, {"e"})};
  OverlayFrame bcast{envs[0].vni, NodeId{1}, NodeId{2}, InnerFrame::make("a", "*", {})};
  auto d = decapsulate_deliver(bcast, envs);
  EXPECT_EQ(d.environment, envs[0].key);
  EXPECT_EQ(d.devices, (std::vector<DeviceId>{"b", "c"}));
  OverlayFrame wrong{envs[0].vni, NodeId{1}, NodeId{2}, InnerFrame::make("a", "d", {})};
  EXPECT_TRUE(decapsulate_deliver(wrong, envs).devices.empty());
  OverlayFrame unknown{Vni{999}, NodeId{1}, NodeId{2}, InnerFrame::make("a", "d", {})};
  try {
    decapsulate_deliver(unknown, envs);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.code(), Errc::UnknownVni);
  }
}

TEST(Overlay, RandomFramesNeverCrossEnvironments) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<NetworkEnvironment> envs;
    std::map<DeviceId, EnvironmentKey> home;
    int dev = 0;
    for (std::uint16_t u = 0; u < 3; ++u) {
      for (auto v : {VlanType::Scada, VlanType::It, VlanType::Voip}) {
        if (rng() % 2 == 0) continue;
        std::set<DeviceId> ds;
        for (int k = static_cast<int>(rng() % 4); k > 0; --k) {
          auto name = fmt::format("d{}", dev++);
          ds.insert(name);
          home[name] = EnvironmentKey{u, v};
        }
        envs.push_back(env(u, v, ds));
      }
    }
    if (home.empty()) continue;
    std::vector<DeviceId> names;
    for (const auto& [n, _] : home) names.push_back(n);
    for (int k = 0; k < 20; ++k) {
      auto src = names[rng() % names.size()];
      auto dst = rng() % 5 == 0 ? std::string("*") : names[rng() % names.size()];
      const NetworkEnvironment* src_env = nullptr;
      for (const auto& e : envs) {
        if (e.key == home[src]) src_env = &e;
      }
      auto f = encapsulate(InnerFrame::make(src, dst, {}), *src_env, NodeId{1}, NodeId{2});
      auto d = decapsulate_deliver(f, envs);
      EXPECT_EQ(d.environment, home[src]);
      for (const auto& got : d.devices) EXPECT_EQ(home[got], home[src]) << src << " -> " << got;
    }
  }
}

TEST(Overlay, VniAllocationIsInjectiveAndNonZero) {
  std::set<std::uint32_t> seen;
  for (std::uint32_t u = 0; u < 255; ++u) {
    for (std::uint32_t v = 0; v < 3; ++v) {
      auto vni = allocate_vni(u, v).value;
      EXPECT_EQ(vni, u * 16 + v + 1);
      EXPECT_NE(vni, kManagementVni.value);
      EXPECT_TRUE(seen.insert(vni).second);
    }
  }
  EXPECT_THROW(allocate_vni(0, 16), Error);
  EXPECT_THROW(allocate_vni(1u << 21, 0), Error);
}

TEST(Subnet, ParseAndHosts) {
  auto s = Subnet::parse("10.1.2.77/24");
  EXPECT_EQ(s.to_string(), "10.1.2.0/24");
  EXPECT_EQ(s.host_count(), 254u);
  EXPECT_EQ(ip_to_string(s.host(0)), "10.1.2.1");
  EXPECT_TRUE(s.contains(parse_ip("10.1.2.200")));
  EXPECT_FALSE(s.contains(parse_ip("10.1.3.1")));
  EXPECT_THROW(Subnet::parse("10.1.2/24"), Error);
  EXPECT_THROW(Subnet::parse("300.1.2.0/24"), Error);
  EXPECT_THROW(parse_ip("1.2.3"), Error);
  EXPECT_EQ(Subnet::parse("10.0.0.0/31").host_count(), 0u);
}

TEST(Model, ParsesAndReportsEveryProblem) {
  auto m = config::parse_model(std::string_view(kModel));
  ASSERT_EQ(m.utilities.size(), 2u);
  EXPECT_EQ(m.utilities[1].vlans, (std::vector<VlanType>{VlanType::Scada, VlanType::Voip}));
  EXPECT_EQ(m.utility_index("SouthPower"), 1u);

  nlohmann::json bad = {{"utilities",
                         {{{"name", "A"}, {"substations", 0}, {"vlans", {"SCADA"}}},
                          {{"name", "A"}, {"substations", 2}, {"vlans", {"Bogus", "Management"}}}}}};
  try {
    config::parse_model(bad);
    FAIL();
  } catch (const config::ModelError& e) {
    const auto& d = e.diagnostics();
    auto has = [&](std::string_view needle) {
      return std::any_of(d.begin(), d.end(), [&](const auto& s) { return s.find(needle) != std::string::npos; });
    };
    EXPECT_TRUE(has("utilities[0].substations"));
    EXPECT_TRUE(has("duplicate utility name 'A'"));
    EXPECT_TRUE(has("utilities[1].vlans[0]"));
    EXPECT_TRUE(has("management VLAN is implicit"));
    EXPECT_EQ(e.code(), Errc::ModelInvalid);
  }
  EXPECT_THROW(config::parse_model(std::string_view("{")), Error);
}

TEST(Synthesis, LibraryMatchesIndependentDerivation) {
  auto m = config::parse_model(std::string_view(kModel));
  auto lib = config::synthesize(m);
  EXPECT_EQ(lib.size(), 5u);
  for (std::size_t u = 0; u < m.utilities.size(); ++u) {
    for (int s = 1; s <= m.utilities[u].substations; ++s) {
      const auto& c = lib.resolve(m.utilities[u].name, s);
      EXPECT_EQ(c.utility_index, u);
      std::string prefix = fmt::format("{}{}", u, s);
      if (m.utilities[u].name == "NorthGrid" && s == 3) prefix = "48";
      EXPECT_EQ(c.dial_prefix, prefix);
      ASSERT_EQ(c.environments.size(), m.utilities[u].vlans.size());
      for (const auto& e : c.environments) {
        auto v = static_cast<std::uint32_t>(e.vlan);
        EXPECT_EQ(e.vni.value, u * 16 + v + 1);
        EXPECT_EQ(e.subnet.to_string(), fmt::format("10.{}.{}.0/24", u, (s - 1) * 4 + static_cast<int>(v)));
        EXPECT_TRUE(std::is_sorted(e.services.begin(), e.services.end()));
      }
      if (const auto* voip = c.environment(VlanType::Voip)) {
        EXPECT_NE(std::find(voip->services.begin(), voip->services.end(), "sip-registrar"), voip->services.end());
      }
    }
  }
  EXPECT_EQ(lib.resolve("SouthPower", 1).dial_prefix, "11");
  EXPECT_THROW(lib.resolve("SouthPower", 3), Error);
  EXPECT_THROW(lib.resolve("Nope", 1), Error);
}

TEST(Synthesis, DeterministicAndRoundTrips) {
  auto m = config::parse_model(std::string_view(kModel));
  auto a = config::synthesize(m);
  auto b = config::synthesize(m);
  EXPECT_EQ(config::serialize(a), config::serialize(b));
  EXPECT_EQ(config::library_hash(a), config::library_hash(b));
  EXPECT_EQ(config::library_from_json(nlohmann::json::parse(config::serialize(a))), a);
}

TEST(Synthesis, OverrideProblemsAreCollected) {
  auto m = config::parse_model(std::string_view(kModel));
  m.dial_prefixes["NorthGrid/1"] = "48";          // collides with NorthGrid/3
  m.dial_prefixes["NorthGrid/9"] = "77";          // no such substation
  m.addressing["SouthPower/1/IT"] = "10.9.9.0/24";  // SouthPower has no IT
  try {
    config::synthesize(m);
    FAIL();
  } catch (const config::ModelError& e) {
    std::string all = e.what();
    EXPECT_NE(all.find("dial_prefixes.NorthGrid/9"), std::string::npos);
    EXPECT_NE(all.find("addressing.SouthPower/1/IT"), std::string::npos);
  }
  m.dial_prefixes.erase("NorthGrid/9");
  m.addressing.clear();
  EXPECT_THROW(config::synthesize(m), config::ModelError);

  auto m2 = config::parse_model(std::string_view(kModel));
  m2.addressing["SouthPower/1/SCADA"] = "10.0.0.0/24";  // NorthGrid/1/SCADA default
  EXPECT_THROW(config::synthesize(m2), config::ModelError);
}

TEST(Phase, TruthTable) {
  // Oracle written from the ladder: floor 1, control link 2, MANET 3,
  // MANET + configured + every peer substation reachable 4.
  for (int mask = 0; mask < 8; ++mask) {
    for (std::size_t peers = 0; peers < 3; ++peers) {
      for (std::size_t reach = 0; reach <= peers; ++reach) {
        config::PhaseInputs in{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, peers, reach};
        int want = 1;
        if (in.control_channel) want = 2;
        if (in.in_manet) want = 3;
        if (in.in_manet && in.configured && reach == peers) want = 4;
        EXPECT_EQ(config::formation_phase(in), want);
      }
    }
  }
}
