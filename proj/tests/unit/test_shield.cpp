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

#include <random>

#include <gtest/gtest.h>

#include "phoenix/harness/report.hpp"

using namespace phoenix;
using namespace phoenix::shield;

namespace {

crypto::Key key_of(std::uint8_t seed) {
  crypto::Key k{};
  for (std::size_t i = 0; i < k.size(); ++i) k[i] = static_cast<std::uint8_t>(seed * 31 + i);
  return k;
}

ShieldState paired(Mode mode, Policy policy, std::uint8_t seed = 1) {
  auto s = pair(make_shield("es-1", "plc"), NodeId{3}, key_of(seed));
  CredentialStore node;
  node.add("es-1", "plc", key_of(seed));
  return handle_control(s, node.make_activation(NodeId{3}, "es-1", mode, policy));
}

LanFrame random_frame(std::mt19937_64& rng, bool from_lan) {
  std::uniform_int_distribution<int> byte(0, 255);
  LanFrame f;
  f.src_device = fmt::format("dev{}", byte(rng) % 7);
  f.dst_device = "plc";
  f.ethertype = byte(rng) % 5 == 0 ? kEtherTypeEapol : kEtherTypeIpv4;
  f.payload.resize(static_cast<std::size_t>(byte(rng)));
  for (auto& b : f.payload) b = static_cast<std::uint8_t>(byte(rng));
  f.from_lan = from_lan;
  return f;
}

// HMAC input rebuilt by hand from the documented field layout.
Bytes mac_input(const LanFrame& f, std::uint64_t seq, const std::string& id) {
  Bytes b;
  auto put16 = [&](std::size_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
  };
  auto str = [&](const std::string& s) {
    put16(s.size());
    b.insert(b.end(), s.begin(), s.end());
  };
  str(f.src_device);
  str(f.dst_device);
  put16(f.ethertype);
  b.push_back(f.from_lan ? 1 : 0);
  b.insert(b.end(), f.payload.begin(), f.payload.end());
  for (int i = 7; i >= 0; --i) b.push_back(static_cast<std::uint8_t>(seq >> (8 * i)));
  str(id);
  return b;
}

}  // namespace

TEST(Shield, OpenModeIsByteTransparent) {
  std::mt19937_64 rng(5);
  auto s = pair(make_shield("es-1", "plc"), NodeId{3}, key_of(1));
  for (int i = 0; i < 500; ++i) {
    auto f = random_frame(rng, i % 2 == 0);
    auto dir = i % 3 == 0 ? Direction::FromDevice : Direction::ToDevice;
    auto [next, r] = filter_frame(s, f, dir);
    EXPECT_EQ(r.verdict, Verdict::Pass);
    EXPECT_EQ(wire_bytes(r.frame), wire_bytes(f));
    EXPECT_EQ(next, s);
  }
}

TEST(Shield, SecureAuthenticatedOnlyAdmitsExactlyTaggedFrames) {
  std::mt19937_64 rng(6);
  auto s = paired(Mode::SecureIpsec, Policy::AuthenticatedOnly);
  CredentialStore node;
  node.add("es-1", "plc", key_of(1));
  int admitted_tagged = 0;
  int tagged = 0;
  for (int i = 0; i < 400; ++i) {
    auto f = random_frame(rng, i % 2 == 0);
    if (i % 2 == 0) {
      auto [next, r] = filter_frame(s, f, Direction::ToDevice);
      EXPECT_EQ(r.verdict, Verdict::Drop);
      EXPECT_EQ(r.reason, DropReason::Unauthenticated);
      s = next;
    } else {
      ++tagged;
      auto t = node.tag("es-1", f);
      auto [next, r] = filter_frame(s, t, Direction::ToDevice);
      if (r.verdict == Verdict::Pass) {
        ++admitted_tagged;
        EXPECT_EQ(r.frame, f);  // tag stripped, rest untouched
      }
      s = next;
    }
  }
  EXPECT_EQ(admitted_tagged, tagged);
}

TEST(Shield, ReplaysAndForgeriesAreDropped) {
  auto s = paired(Mode::Secure8021X, Policy::AuthenticatedOnly);
  CredentialStore node;
  node.add("es-1", "plc", key_of(1));
  LanFrame f{"rtu", "plc", kEtherTypeIpv4, to_bytes("write"), false, std::nullopt};
  std::vector<LanFrame> history;
  for (int i = 0; i < 20; ++i) {
    auto t = node.tag("es-1", f);
    history.push_back(t);
    auto [next, r] = filter_frame(s, t, Direction::ToDevice);
    ASSERT_EQ(r.verdict, Verdict::Pass);
    s = next;
  }
  for (const auto& old : history) {
    auto [next, r] = filter_frame(s, old, Direction::ToDevice);
    EXPECT_EQ(r.verdict, Verdict::Drop);
    EXPECT_EQ(r.reason, DropReason::Replay);
    EXPECT_EQ(next, s);
  }
  auto tampered = node.tag("es-1", f);
  tampered.payload.back() ^= 1;
  EXPECT_EQ(filter_frame(s, tampered, Direction::ToDevice).second.reason, DropReason::BadMac);
  CredentialStore stranger;
  stranger.add("es-1", "plc", key_of(9));
  EXPECT_EQ(filter_frame(s, stranger.tag("es-1", f), Direction::ToDevice).second.reason, DropReason::BadMac);
  auto renamed = node.tag("es-1", f);
  renamed.tag->shield_id = "es-2";
  EXPECT_EQ(filter_frame(s, renamed, Direction::ToDevice).second.reason, DropReason::BadMac);
}

TEST(Shield, TagMacMatchesIndependentLayout) {
  LanFrame f{"rtu-n1", "plc-n3", kEtherTypeIpv4, to_bytes("open"), true, std::nullopt};
  auto k = key_of(4);
  EXPECT_EQ(tag_mac(k, f, 77, "es-1"), crypto::hmac(k, mac_input(f, 77, "es-1")));
  auto s = paired(Mode::SecureIpsec, Policy::AuthenticatedOnly, 4);
  auto [next, r] = filter_frame(s, f, Direction::FromDevice);
  ASSERT_EQ(r.verdict, Verdict::PassAugmented);
  ASSERT_TRUE(r.frame.tag.has_value());
  EXPECT_EQ(r.frame.tag->seq, 1u);
  EXPECT_EQ(r.frame.tag->mac, crypto::hmac(k, mac_input(f, 1, "es-1")));
  EXPECT_EQ(next.tx_seq, 1u);
  CredentialStore node;
  node.add("es-1", "plc-n3", k);
  EXPECT_TRUE(node.verify(r.frame));
  auto bad = r.frame;
  bad.from_lan = false;
  EXPECT_FALSE(node.verify(bad));
}

TEST(Shield, PolicyAndEapolHandling) {
  auto lan_ok = paired(Mode::SecureIpsec, Policy::AllowUnshieldedLan);
  LanFrame lan{"hmi", "plc", kEtherTypeIpv4, to_bytes("x"), true, std::nullopt};
  EXPECT_EQ(filter_frame(lan_ok, lan, Direction::ToDevice).second.verdict, Verdict::Pass);
  auto remote = lan;
  remote.from_lan = false;
  EXPECT_EQ(filter_frame(lan_ok, remote, Direction::ToDevice).second.reason, DropReason::Unauthenticated);

  LanFrame eapol{"supplicant", "plc", kEtherTypeEapol, to_bytes("eap"), true, std::nullopt};
  auto dot1x = paired(Mode::Secure8021X, Policy::AuthenticatedOnly);
  EXPECT_EQ(filter_frame(dot1x, eapol, Direction::ToDevice).second.verdict, Verdict::Divert);
  EXPECT_EQ(filter_frame(dot1x, eapol, Direction::FromDevice).second.verdict, Verdict::Divert);
  auto ipsec = paired(Mode::SecureIpsec, Policy::AuthenticatedOnly);
  EXPECT_EQ(filter_frame(ipsec, eapol, Direction::ToDevice).second.verdict, Verdict::Drop);
}

TEST(Shield, ActivationFrameLayout) {
  ActivationCommand c{NodeId{0x0102}, 7, "es-1", Mode::SecureIpsec, Policy::AllowUnshieldedLan};
  auto k = key_of(2);
  auto frame = encode_activation(c, k);
  Bytes body{0x05, 0, 0, 0, 0, 0, 0, 0x01, 0x02, 0, 0, 0, 7, 0, 4, 'e', 's', '-', '1', 2, 1};
  ASSERT_EQ(frame.size(), body.size() + 32);
  EXPECT_TRUE(std::equal(body.begin(), body.end(), frame.begin()));
  auto mac = crypto::hmac(k, body);
  EXPECT_TRUE(std::equal(mac.begin(), mac.end(), frame.begin() + static_cast<std::ptrdiff_t>(body.size())));
  auto [decoded, dmac] = decode_activation(frame);
  EXPECT_EQ(decoded.shield_id, "es-1");
  EXPECT_EQ(decoded.seq, 7u);
  EXPECT_EQ(dmac, mac);
  auto trailing = frame;
  trailing.push_back(0);
  EXPECT_THROW(decode_activation(trailing), Error);
  auto bad_mode = frame;
  bad_mode[19] = 3;
  EXPECT_THROW(decode_activation(bad_mode), Error);
}

TEST(Shield, ActivationIsAuthenticatedAndAtomic) {
  auto fresh = make_shield("es-1", "plc");
  CredentialStore node;
  node.add("es-1", "plc", key_of(1));
  auto frame = node.make_activation(NodeId{3}, "es-1", Mode::Secure8021X, Policy::AuthenticatedOnly);
  try {
    handle_control(fresh, frame);
    FAIL() << "unpaired shield accepted activation";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotPaired);
  }
  auto s = pair(fresh, NodeId{3}, key_of(1));
  EXPECT_THROW(pair(s, NodeId{4}, key_of(2)), Error);
  auto active = handle_control(s, frame);
  EXPECT_EQ(active.mode, Mode::Secure8021X);
  EXPECT_EQ(active.policy, Policy::AuthenticatedOnly);

  auto expect_rejected = [&](const Bytes& f) {
    try {
      handle_control(active, f);
      ADD_FAILURE() << "accepted bad activation";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::BadControlAuth);
    }
  };
  expect_rejected(frame);  // replay
  ActivationCommand forged{NodeId{3}, 99, "es-1", Mode::Open, Policy::AllowUnshieldedLan};
  expect_rejected(encode_activation(forged, key_of(7)));
  ActivationCommand wrong_origin{NodeId{4}, 99, "es-1", Mode::Open, Policy::AuthenticatedOnly};
  expect_rejected(encode_activation(wrong_origin, key_of(1)));
  auto truncated = node.make_activation(NodeId{3}, "es-1", Mode::Open, Policy::AuthenticatedOnly);
  truncated.resize(truncated.size() - 1);
  expect_rejected(truncated);
  // A failed command leaves mode and policy untouched.
  EXPECT_EQ(active.mode, Mode::Secure8021X);
  EXPECT_EQ(active.policy, Policy::AuthenticatedOnly);
}

namespace {

using harness::Network;

struct Delivery {
  SimTime at;
  std::string device;
  std::string src;
  std::string payload_hash;
  auto operator<=>(const Delivery&) const = default;
};

std::vector<Delivery> deliveries_excluding(const Network& net, const std::string& shielded) {
  std::vector<Delivery> out;
  for (const auto* r : net.engine().log().of_kind("device_deliver")) {
    auto dev = r->data["device"].get<std::string>();
    auto src = r->data["src_device"].get<std::string>();
    if (dev == shielded || src == shielded) continue;
    out.push_back({r->at, dev, src, r->data["payload_hash"].get<std::string>()});
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(ShieldNetwork, AdversarialScenarioVerdicts) {
  auto out = harness::run_scenario(harness::load_scenario(std::string(PHOENIX_SOURCE_DIR) + "/scenarios/adversarial.json"));
  auto& net = *out.network;
  // Activation before pairing is rejected with NotPaired.
  bool not_paired = false;
  for (const auto* r : net.engine().log().of_kind("event_rejected")) {
    if (r->data["event"] == "ShieldActivate" && r->data["error"] == "NotPaired") not_paired = true;
  }
  EXPECT_TRUE(not_paired);
  std::map<std::string, std::string> inject_verdicts;
  for (const auto* r : net.engine().log().of_kind("lan_inject_result")) {
    if (r->data["mode"] == "Secure8021X") inject_verdicts[r->data["tag"]] = r->data["reason"];
  }
  EXPECT_EQ(inject_verdicts["replay"], "Replay");
  EXPECT_EQ(inject_verdicts["forged"], "BadMac");
  EXPECT_EQ(inject_verdicts["none"], "Unauthenticated");
  // Secure mode: no unauthenticated frame reached the shielded device.
  for (const auto* r : net.engine().log().of_kind("device_deliver")) {
    if (r->data["device"] == "plc-n3" && r->data["shield_mode"] != "Open" &&
        r->data["shield_mode"] != "none" && !r->data["authenticated"].get<bool>()) {
      EXPECT_EQ(r->data["shield_mode"], "SecureIpsec") << r->data.dump();
    }
  }
  // The forged activation did not flip the shield back to Open.
  EXPECT_NE(net.shields().at("es-1").state.mode, Mode::Open);
  int shield_audits = 0;
  for (const auto& a : out.report.audits) {
    if (a.module == "shield") {
      ++shield_audits;
      EXPECT_NE(a.status, harness::AuditStatus::Fail) << a.name << " " << a.detail;
    }
  }
  EXPECT_EQ(shield_audits, 3);
}

TEST(ShieldNetwork, ActivationLeavesUnrelatedDeliveriesUnchanged) {
  auto path = std::string(PHOENIX_SOURCE_DIR) + "/scenarios/adversarial.json";
  auto with = harness::load_scenario(path);
  // Unrelated SCADA traffic around every shield transition.
  for (SimTime t = 7000; t <= 44'000; t += 1500) {
    with.events.push_back({t, sim::EventKind::SendFrame, {{"from", "rtu-n1"}, {"to", "rtu-n2"}, {"payload", "poll"}}});
    with.events.push_back({t + 100, sim::EventKind::SendFrame, {{"from", "hmi-n3"}, {"to", "rtu-n1"}, {"payload", "hmi"}}});
    with.events.push_back({t + 200, sim::EventKind::SendFrame, {{"from", "rtu-n2"}, {"to", "*"}, {"payload", "bcast"}}});
  }
  std::stable_sort(with.events.begin(), with.events.end(), [](const auto& x, const auto& y) { return x.at < y.at; });
  auto without = with;
  std::erase_if(without.events, [](const sim::ScenarioEvent& e) {
    return e.kind == sim::EventKind::ShieldPair || e.kind == sim::EventKind::ShieldActivate;
  });
  auto a = harness::run_scenario(with);
  auto b = harness::run_scenario(without);
  auto da = deliveries_excluding(*a.network, "plc-n3");
  auto db = deliveries_excluding(*b.network, "plc-n3");
  EXPECT_FALSE(da.empty());
  EXPECT_EQ(da, db);
}
