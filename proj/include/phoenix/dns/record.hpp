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

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "phoenix/core/bytes.hpp"

namespace phoenix::dns {

inline constexpr std::string_view kDomain = "phxnet.org";
inline constexpr std::string_view kReverseSuffix = "in-addr.arpa";

enum class RrType : std::uint8_t { A = 1, PTR = 2, SRV = 3, CNAME = 4, TXT = 5 };

constexpr std::string_view to_string(RrType t) {
  switch (t) {
    case RrType::A: return "A";
    case RrType::PTR: return "PTR";
    case RrType::SRV: return "SRV";
    case RrType::CNAME: return "CNAME";
    case RrType::TXT: return "TXT";
  }
  return "?";
}

inline RrType parse_rrtype(std::string_view s) {
  for (auto t : {RrType::A, RrType::PTR, RrType::SRV, RrType::CNAME, RrType::TXT}) {
    if (to_string(t) == s) return t;
  }
  throw Error(Errc::ParseError, fmt::format("unknown record type '{}'", s));
}

// Lowercases and strips one trailing dot.
inline std::string normalize_name(std::string_view name) {
  std::string out(name);
  if (!out.empty() && out.back() == '.') out.pop_back();
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline bool ends_with_label(std::string_view name, std::string_view suffix) {
  if (name == suffix) return true;
  return name.size() > suffix.size() && name.substr(name.size() - suffix.size()) == suffix &&
         name[name.size() - suffix.size() - 1] == '.';
}

inline bool in_shared_zone(std::string_view name) {
  return ends_with_label(name, kDomain) || ends_with_label(name, kReverseSuffix);
}

inline std::string fqdn(std::string_view label) { return fmt::format("{}.{}", normalize_name(label), kDomain); }

inline std::string reverse_name(std::uint32_t addr) {
  return fmt::format("{}.{}.{}.{}.{}", addr & 0xFF, (addr >> 8) & 0xFF, (addr >> 16) & 0xFF, addr >> 24,
                     kReverseSuffix);
}

inline constexpr SimTime kNoClaim = -1;

struct ResourceRecord {
  std::string name;
  RrType type{RrType::A};
  std::uint32_t ttl{300};
  std::string rdata;
  NodeId origin;
  // Simulated time of a first-come-first-serve hostname claim; kNoClaim for
  // ordinary records.
  SimTime claimed_at{kNoClaim};

  bool is_claim() const { return claimed_at != kNoClaim; }

  bool same_identity(const ResourceRecord& o) const {
    return name == o.name && type == o.type && rdata == o.rdata && origin == o.origin;
  }

  bool operator==(const ResourceRecord&) const = default;
};

// Merge order: origin node id, then rdata.
inline bool merge_less(const ResourceRecord& a, const ResourceRecord& b) {
  if (a.origin != b.origin) return a.origin < b.origin;
  if (a.rdata != b.rdata) return a.rdata < b.rdata;
  if (a.name != b.name) return a.name < b.name;
  return a.type < b.type;
}

inline void sort_merged(std::vector<ResourceRecord>& rs) {
  std::sort(rs.begin(), rs.end(), merge_less);
  rs.erase(std::unique(rs.begin(), rs.end(), [](const auto& a, const auto& b) { return a.same_identity(b); }),
           rs.end());
}

struct SrvData {
  std::uint16_t priority{0};
  std::uint16_t weight{0};
  std::uint16_t port{0};
  std::string target;
};

inline std::string srv_rdata(const SrvData& s) {
  return fmt::format("{} {} {} {}", s.priority, s.weight, s.port, normalize_name(s.target));
}

inline SrvData parse_srv(std::string_view rdata) {
  std::istringstream in{std::string(rdata)};
  unsigned prio = 0, weight = 0, port = 0;
  SrvData s;
  if (!(in >> prio >> weight >> port >> s.target) || prio > 0xFFFF || weight > 0xFFFF || port > 0xFFFF) {
    throw Error(Errc::ParseError, fmt::format("bad SRV rdata '{}'", rdata));
  }
  s.priority = static_cast<std::uint16_t>(prio);
  s.weight = static_cast<std::uint16_t>(weight);
  s.port = static_cast<std::uint16_t>(port);
  s.target = normalize_name(s.target);
  return s;
}

// Rdata as it appears in master-file syntax: domain-name fields are absolute.
inline std::string presentation_rdata(const ResourceRecord& r) {
  switch (r.type) {
    case RrType::CNAME:
    case RrType::PTR:
      return r.rdata + ".";
    case RrType::SRV:
      return r.rdata + ".";
    case RrType::TXT:
      return fmt::format("\"{}\"", r.rdata);
    case RrType::A:
      break;
  }
  return r.rdata;
}

// "4822._voip.phxnet.org. IN CNAME voip-phx23.phxnet.org."
inline std::string presentation(const ResourceRecord& r) {
  return fmt::format("{}. IN {} {}", r.name, to_string(r.type), presentation_rdata(r));
}

// Zone-file line: name ttl IN type rdata ; origin=<id>[ claimed=<ms>]
inline std::string zone_line(const ResourceRecord& r) {
  std::string line = fmt::format("{}. {} IN {} {} ; origin={}", r.name, r.ttl, to_string(r.type),
                                 presentation_rdata(r), r.origin.value);
  if (r.is_claim()) line += fmt::format(" claimed={}", r.claimed_at);
  return line;
}

inline std::string dump_zone(const std::vector<ResourceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += zone_line(r);
    out += '\n';
  }
  return out;
}

inline std::vector<ResourceRecord> load_zone(std::string_view text) {
  std::vector<ResourceRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == ';') continue;
    auto fail = [&](std::string_view why) {
      return Error(Errc::ParseError, fmt::format("zone line {}: {}", lineno, why));
    };
    std::string body = line;
    std::string comment;
    // TXT rdata may contain ';' inside quotes; the comment starts at the last ';'.
    if (auto semi = line.rfind(';'); semi != std::string::npos && line.find('"', semi) == std::string::npos) {
      body = line.substr(0, semi);
      comment = line.substr(semi + 1);
    }
    std::istringstream ls(body);
    ResourceRecord r;
    std::string name, cls, type;
    long long ttl = 0;
    if (!(ls >> name >> ttl >> cls >> type) || cls != "IN" || ttl < 0) throw fail("expected 'name ttl IN type rdata'");
    r.name = normalize_name(name);
    r.ttl = static_cast<std::uint32_t>(ttl);
    try {
      r.type = parse_rrtype(type);
    } catch (const Error& e) {
      throw fail(e.what());
    }
    std::string rdata;
    std::getline(ls, rdata);
    auto b = rdata.find_first_not_of(" \t");
    auto e = rdata.find_last_not_of(" \t");
    if (b == std::string::npos) throw fail("missing rdata");
    rdata = rdata.substr(b, e - b + 1);
    if (r.type == RrType::TXT) {
      if (rdata.size() < 2 || rdata.front() != '"' || rdata.back() != '"') throw fail("TXT rdata must be quoted");
      rdata = rdata.substr(1, rdata.size() - 2);
    } else if (r.type != RrType::A) {
      rdata = normalize_name(rdata);
      if (r.type == RrType::SRV) rdata = srv_rdata(parse_srv(rdata));
    }
    r.rdata = rdata;
    std::istringstream cs(comment);
    std::string tok;
    while (cs >> tok) {
      if (tok.rfind("origin=", 0) == 0) r.origin = NodeId{std::stoull(tok.substr(7))};
      if (tok.rfind("claimed=", 0) == 0) r.claimed_at = std::stoll(tok.substr(8));
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline void write_record(ByteWriter& w, const ResourceRecord& r) {
  w.str16(r.name).u8(static_cast<std::uint8_t>(r.type)).u32(r.ttl).str16(r.rdata);
  w.u64(r.origin.value).u64(static_cast<std::uint64_t>(r.claimed_at));
}

inline ResourceRecord read_record(ByteReader& rd) {
  ResourceRecord r;
  r.name = rd.str16();
  auto t = rd.u8();
  if (t < 1 || t > 5) throw Error(Errc::Malformed, fmt::format("record type {}", t));
  r.type = static_cast<RrType>(t);
  r.ttl = rd.u32();
  r.rdata = rd.str16();
  r.origin = NodeId{rd.u64()};
  r.claimed_at = static_cast<SimTime>(rd.u64());
  return r;
}

inline void to_json(nlohmann::json& j, const ResourceRecord& r) {
  j = {{"name", r.name},
       {"type", std::string(to_string(r.type))},
       {"ttl", r.ttl},
       {"rdata", r.rdata},
       {"origin", r.origin.value}};
  if (r.is_claim()) j["claimed_at"] = r.claimed_at;
}

}  // namespace phoenix::dns
