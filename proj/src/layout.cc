// Copyright 2026 The capsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "capsim/layout.h"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/match.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "json.hpp"

namespace capsim {
namespace {

constexpr uint64_t kGranule = TaggedMemory::kGranule;

absl::Status LineError(int line, absl::string_view msg) {
  return absl::InvalidArgumentError(absl::StrFormat("line %d: %s", line, msg));
}

// Decimal or 0x-prefixed hex, optionally suffixed with K or M.
std::optional<uint64_t> ParseSize(absl::string_view s) {
  uint64_t scale = 1;
  if (!s.empty() && (s.back() == 'K' || s.back() == 'k')) {
    scale = 1024;
    s.remove_suffix(1);
  } else if (!s.empty() && (s.back() == 'M' || s.back() == 'm')) {
    scale = 1024 * 1024;
    s.remove_suffix(1);
  }
  uint64_t v = 0;
  bool ok = false;
  if (absl::StartsWith(s, "0x") || absl::StartsWith(s, "0X")) {
    const absl::string_view hex = s.substr(2);
    const auto [end, ec] =
        std::from_chars(hex.data(), hex.data() + hex.size(), v, 16);
    ok = !hex.empty() && ec == std::errc() && end == hex.data() + hex.size();
  } else {
    ok = !s.empty() && absl::ascii_isdigit(s.front()) && absl::SimpleAtoi(s, &v);
  }
  if (!ok || v > UINT64_MAX / scale) return std::nullopt;
  return v * scale;
}

using KeyValues = std::map<std::string, std::string, std::less<>>;

absl::StatusOr<KeyValues> ParseKeyValues(
    const std::vector<absl::string_view>& tokens, int line) {
  KeyValues kv;
  for (absl::string_view t : tokens) {
    std::vector<absl::string_view> parts = absl::StrSplit(t, absl::MaxSplits('=', 1));
    if (parts.size() != 2 || parts[0].empty()) {
      return LineError(line, absl::StrCat("expected key=value, got '", t, "'"));
    }
    if (!kv.emplace(std::string(parts[0]), std::string(parts[1])).second) {
      return LineError(line, absl::StrCat("duplicate key '", parts[0], "'"));
    }
  }
  return kv;
}

absl::StatusOr<uint64_t> TakeSize(KeyValues& kv, absl::string_view key,
                                  int line) {
  auto it = kv.find(key);
  if (it == kv.end()) {
    return LineError(line, absl::StrCat("missing ", key, "="));
  }
  std::optional<uint64_t> v = ParseSize(it->second);
  if (!v) {
    return LineError(line, absl::StrCat("bad size '", it->second, "' for ", key));
  }
  if (*v % kGranule != 0) {
    return LineError(line,
                     absl::StrCat(key, "=", it->second,
                                  ": size must be a multiple of 16"));
  }
  kv.erase(it);
  return *v;
}

absl::Status RejectLeftovers(const KeyValues& kv, int line) {
  if (kv.empty()) return absl::OkStatus();
  return LineError(line, absl::StrCat("unknown key '", kv.begin()->first, "'"));
}

absl::Status ParseCompartment(const std::vector<absl::string_view>& tok,
                              int line, CompartmentConfig& cfg) {
  if (tok.size() < 2) return LineError(line, "compartment needs a name");
  CompartmentDecl d;
  d.name = std::string(tok[1]);
  d.line = line;
  absl::StatusOr<KeyValues> kv =
      ParseKeyValues({tok.begin() + 2, tok.end()}, line);
  if (!kv.ok()) return kv.status();
  for (auto [key, field] : {std::pair{"code", &d.code}, {"data", &d.data},
                            {"stack", &d.stack}, {"heap", &d.heap}}) {
    absl::StatusOr<uint64_t> v = TakeSize(*kv, key, line);
    if (!v.ok()) return v.status();
    *field = *v;
  }
  if (absl::Status s = RejectLeftovers(*kv, line); !s.ok()) return s;
  if (d.code < kMinCodeSlots) {
    return LineError(line,
                     absl::StrFormat("code must be at least %d slots",
                                     kMinCodeSlots));
  }
  if (d.stack < 2048) return LineError(line, "stack must be at least 2048 bytes");
  cfg.compartments.push_back(std::move(d));
  return absl::OkStatus();
}

absl::Status ParseShared(const std::vector<absl::string_view>& tok, int line,
                         CompartmentConfig& cfg) {
  if (tok.size() < 2) return LineError(line, "shared needs a name");
  SharedDecl d;
  d.name = std::string(tok[1]);
  d.line = line;
  std::vector<absl::string_view> kv_tokens;
  std::string owners;
  bool seen_between = false;
  for (size_t i = 2; i < tok.size(); ++i) {
    if (tok[i] == "between") {
      if (seen_between) return LineError(line, "duplicate 'between'");
      seen_between = true;
      while (i + 1 < tok.size() && !absl::StrContains(tok[i + 1], '=')) {
        absl::StrAppend(&owners, tok[++i]);
      }
    } else {
      kv_tokens.push_back(tok[i]);
    }
  }
  if (!seen_between) return LineError(line, "shared region needs 'between'");
  std::vector<std::string> names =
      absl::StrSplit(owners, ',', absl::SkipEmpty());
  if (names.size() != 2) {
    return LineError(
        line, absl::StrFormat("shared region requires exactly two owners "
                              "(got %d); an overlap window can only sit "
                              "between two adjacent compartments",
                              names.size()));
  }
  if (names[0] == names[1]) {
    return LineError(line, "shared region requires two distinct owners");
  }
  d.first = names[0];
  d.second = names[1];
  absl::StatusOr<KeyValues> kv = ParseKeyValues(kv_tokens, line);
  if (!kv.ok()) return kv.status();
  absl::StatusOr<uint64_t> size = TakeSize(*kv, "size", line);
  if (!size.ok()) return size.status();
  if (*size == 0) return LineError(line, "shared region size must be nonzero");
  d.size = *size;
  if (auto it = kv->find("mode"); it != kv->end()) {
    if (it->second == "overlap") {
      d.mode = SharingMode::kOverlap;
    } else if (it->second == "exception") {
      d.mode = SharingMode::kException;
    } else {
      return LineError(line, absl::StrCat("unknown mode '", it->second, "'"));
    }
    kv->erase(it);
  }
  if (absl::Status s = RejectLeftovers(*kv, line); !s.ok()) return s;
  cfg.shared.push_back(std::move(d));
  return absl::OkStatus();
}

absl::Status ParseSandbox(const std::vector<absl::string_view>& tok, int line,
                          CompartmentConfig& cfg) {
  if (tok.size() < 2) return LineError(line, "sandbox needs a function name");
  SandboxDecl d;
  d.function = std::string(tok[1]);
  d.line = line;
  absl::StatusOr<KeyValues> kv =
      ParseKeyValues({tok.begin() + 2, tok.end()}, line);
  if (!kv.ok()) return kv.status();
  auto it = kv->find("host");
  if (it == kv->end()) return LineError(line, "missing host=");
  d.host = it->second;
  kv->erase(it);
  if (absl::Status s = RejectLeftovers(*kv, line); !s.ok()) return s;
  cfg.sandboxes.push_back(std::move(d));
  return absl::OkStatus();
}

// Cross-line checks: unique names and resolvable references.
absl::Status ValidateConfig(const CompartmentConfig& cfg) {
  if (cfg.compartments.empty()) {
    return absl::InvalidArgumentError("no compartments declared");
  }
  std::map<std::string, int> names;
  auto claim = [&](const std::string& name, int line) -> absl::Status {
    auto [it, fresh] = names.emplace(name, line);
    if (!fresh) {
      return LineError(line, absl::StrFormat(
                                 "duplicate name '%s' (first declared on "
                                 "line %d)",
                                 name, it->second));
    }
    return absl::OkStatus();
  };
  std::set<std::string> compartments;
  for (const CompartmentDecl& c : cfg.compartments) {
    if (absl::Status s = claim(c.name, c.line); !s.ok()) return s;
    compartments.insert(c.name);
  }
  for (const SharedDecl& s : cfg.shared) {
    if (absl::Status st = claim(s.name, s.line); !st.ok()) return st;
  }
  for (const SandboxDecl& s : cfg.sandboxes) {
    if (absl::Status st = claim(s.function, s.line); !st.ok()) return st;
  }
  std::map<std::pair<std::string, std::string>, SharingMode> pair_mode;
  std::map<std::string, int> exception_regions;
  for (const SharedDecl& s : cfg.shared) {
    for (const std::string& owner : {s.first, s.second}) {
      if (!compartments.contains(owner)) {
        return LineError(s.line, absl::StrCat("shared region owner '", owner,
                                              "' is not a compartment"));
      }
    }
    auto key = std::minmax(s.first, s.second);
    auto [it, fresh] = pair_mode.emplace(key, s.mode);
    if (!fresh && it->second != s.mode) {
      return LineError(s.line,
                       absl::StrFormat("pair %s,%s mixes overlap and exception "
                                       "sharing",
                                       key.first, key.second));
    }
    if (s.mode == SharingMode::kException) {
      for (const std::string& owner : {s.first, s.second}) {
        if (++exception_regions[owner] > 1) {
          return LineError(s.line,
                           absl::StrCat("compartment '", owner,
                                        "' already owns an exception-mode "
                                        "region"));
        }
      }
    }
  }
  for (const SandboxDecl& s : cfg.sandboxes) {
    if (!compartments.contains(s.host)) {
      return LineError(s.line, absl::StrCat("sandbox host '", s.host,
                                            "' is not a compartment"));
    }
  }
  return absl::OkStatus();
}

// Orders compartments so that every overlap pair is adjacent. Declaration
// order is kept when it already works. Otherwise the overlap graph must be a
// disjoint union of simple paths; components are laid out by their first
// declared member, each walked from its earlier-declared endpoint.
absl::StatusOr<std::vector<int>> PlaceCompartments(const CompartmentConfig& cfg) {
  const int n = static_cast<int>(cfg.compartments.size());
  std::map<std::string, int> id;
  for (int i = 0; i < n; ++i) id[cfg.compartments[i].name] = i;
  std::vector<std::set<int>> adj(n);
  for (const SharedDecl& s : cfg.shared) {
    if (s.mode != SharingMode::kOverlap) continue;
    adj[id[s.first]].insert(id[s.second]);
    adj[id[s.second]].insert(id[s.first]);
  }
  bool identity_ok = true;
  for (int a = 0; a < n && identity_ok; ++a) {
    for (int b : adj[a]) identity_ok &= (b == a + 1 || b == a - 1);
  }
  std::vector<int> order;
  if (identity_ok) {
    for (int i = 0; i < n; ++i) order.push_back(i);
    return order;
  }
  for (int a = 0; a < n; ++a) {
    if (adj[a].size() > 2) {
      return absl::FailedPreconditionError(absl::StrFormat(
          "InfeasibleOverlap: '%s' shares overlap regions with %d partners, "
          "at most two can be adjacent",
          cfg.compartments[a].name, adj[a].size()));
    }
  }
  std::vector<bool> placed(n, false);
  for (int first = 0; first < n; ++first) {
    if (placed[first]) continue;
    // Collect the component, then pick its lowest-index endpoint.
    std::vector<int> comp;
    std::vector<int> stack = {first};
    std::vector<bool> seen(n, false);
    seen[first] = true;
    size_t edges2 = 0;
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      comp.push_back(v);
      edges2 += adj[v].size();
      for (int w : adj[v]) {
        if (!seen[w]) {
          seen[w] = true;
          stack.push_back(w);
        }
      }
    }
    if (edges2 / 2 != comp.size() - 1) {
      return absl::FailedPreconditionError(absl::StrFormat(
          "InfeasibleOverlap: overlap regions around '%s' form a cycle",
          cfg.compartments[first].name));
    }
    int start = n;
    for (int v : comp) {
      if (adj[v].size() <= 1) start = std::min(start, v);
    }
    int prev = -1;
    for (int v = start; v != -1;) {
      order.push_back(v);
      placed[v] = true;
      int next = -1;
      for (int w : adj[v]) {
        if (w != prev) next = w;
      }
      prev = v;
      v = next;
    }
  }
  return order;
}

}  // namespace

absl::StatusOr<CompartmentConfig> ParseConfig(absl::string_view text) {
  CompartmentConfig cfg;
  int line_no = 0;
  for (absl::string_view line : absl::StrSplit(text, '\n')) {
    ++line_no;
    if (size_t hash = line.find('#'); hash != absl::string_view::npos) {
      line = line.substr(0, hash);
    }
    std::vector<absl::string_view> tok =
        absl::StrSplit(line, absl::ByAnyChar(" \t\r"), absl::SkipEmpty());
    if (tok.empty()) continue;
    absl::Status s;
    if (tok[0] == "compartment") {
      s = ParseCompartment(tok, line_no, cfg);
    } else if (tok[0] == "shared") {
      s = ParseShared(tok, line_no, cfg);
    } else if (tok[0] == "sandbox") {
      s = ParseSandbox(tok, line_no, cfg);
    } else {
      s = LineError(line_no, absl::StrCat("unknown directive '", tok[0], "'"));
    }
    if (!s.ok()) return s;
  }
  if (absl::Status s = ValidateConfig(cfg); !s.ok()) return s;
  return cfg;
}

const char* RegionKindName(RegionKind kind) {
  switch (kind) {
    case RegionKind::kCode:
      return "code";
    case RegionKind::kData:
      return "data";
    case RegionKind::kStack:
      return "stack";
    case RegionKind::kHeap:
      return "heap";
    case RegionKind::kShared:
      return "shared";
    case RegionKind::kSwitcherCode:
      return "switcher_code";
    case RegionKind::kSwitcherData:
      return "switcher_data";
    case RegionKind::kCapTable:
      return "cap_table";
  }
  return "unknown";
}

std::optional<int> LayoutPlan::FindCompartment(absl::string_view name) const {
  for (const CompartmentPlan& c : compartments) {
    if (c.name == name) return c.id;
  }
  return std::nullopt;
}

absl::StatusOr<LayoutPlan> ComputeLayout(const CompartmentConfig& cfg,
                                         uint64_t memory_size) {
  if (absl::Status s = ValidateConfig(cfg); !s.ok()) return s;
  absl::StatusOr<std::vector<int>> order = PlaceCompartments(cfg);
  if (!order.ok()) return order.status();

  const int declared = static_cast<int>(cfg.compartments.size());
  const int total = declared + static_cast<int>(cfg.sandboxes.size());
  std::map<std::string, int> id;
  for (int i = 0; i < declared; ++i) id[cfg.compartments[i].name] = i;

  LayoutPlan plan;
  plan.memory_size = memory_size;
  plan.compartments.resize(total);
  for (int i = 0; i < declared; ++i) {
    plan.compartments[i].name = cfg.compartments[i].name;
    plan.compartments[i].id = i;
  }
  std::vector<std::vector<int>> hosted(declared);
  for (size_t k = 0; k < cfg.sandboxes.size(); ++k) {
    const int sid = declared + static_cast<int>(k);
    const int host = id[cfg.sandboxes[k].host];
    plan.compartments[sid].name = cfg.sandboxes[k].function;
    plan.compartments[sid].id = sid;
    plan.compartments[sid].host = host;
    hosted[host].push_back(sid);
  }

  auto add_region = [&](std::string name, RegionKind kind, AddressSpace space,
                        Interval range, std::vector<std::string> owners) {
    if (range.empty()) return;
    plan.regions.push_back(
        {std::move(name), kind, space, range, std::move(owners)});
  };

  // Instruction space.
  uint64_t pc = 0;
  plan.switcher_code = {pc, pc + kSwitcherCodeSlots};
  pc = plan.switcher_code.top;
  add_region("switcher.code", RegionKind::kSwitcherCode, AddressSpace::kCode,
             plan.switcher_code, {"switcher"});
  for (int c : *order) {
    const CompartmentDecl& d = cfg.compartments[c];
    CompartmentPlan& cp = plan.compartments[c];
    cp.code = {pc, pc + d.code + kSandboxCodeSlots * hosted[c].size()};
    cp.code_free = {pc + kTrampolineSlots, pc + d.code - kStubSlots};
    cp.stub = {cp.code_free.top, pc + d.code};
    add_region(d.name + ".code", RegionKind::kCode, AddressSpace::kCode,
               {pc, pc + d.code}, {d.name});
    uint64_t sb = pc + d.code;
    for (int s : hosted[c]) {
      CompartmentPlan& sp = plan.compartments[s];
      sp.code = {sb, sb + kSandboxCodeSlots};
      sp.code_free = {sb + kTrampolineSlots, sb + kSandboxCodeSlots};
      add_region(sp.name + ".code", RegionKind::kCode, AddressSpace::kCode,
                 sp.code, {sp.name});
      sb += kSandboxCodeSlots;
    }
    pc = cp.code.top;
  }

  // Byte space.
  uint64_t at = kNullGuardBytes;
  plan.switcher_data = {at, at + 2 * TaggedMemory::kCapabilityBytes +
                                kGranule * static_cast<uint64_t>(total)};
  plan.sp_slots = {at + 2 * TaggedMemory::kCapabilityBytes,
                   plan.switcher_data.top};
  at = plan.switcher_data.top;
  plan.cap_table = {at, at + kCapTableEntryBytes * static_cast<uint64_t>(total)};
  at = plan.cap_table.top;
  add_region("switcher.data", RegionKind::kSwitcherData, AddressSpace::kData,
             plan.switcher_data, {"switcher"});
  add_region("switcher.cap_table", RegionKind::kCapTable, AddressSpace::kData,
             plan.cap_table, {"switcher"});

  auto add_window = [&](const SharedDecl& s) {
    SharedWindow w;
    w.name = s.name;
    w.range = {at, at + s.size};
    w.first = id[s.first];
    w.second = id[s.second];
    w.mode = s.mode;
    at = w.range.top;
    add_region(s.name, RegionKind::kShared, AddressSpace::kData, w.range,
               {s.first, s.second});
    plan.shared.push_back(std::move(w));
  };

  for (size_t i = 0; i < order->size(); ++i) {
    const int c = (*order)[i];
    if (i > 0) {
      const int prev = (*order)[i - 1];
      for (const SharedDecl& s : cfg.shared) {
        if (s.mode != SharingMode::kOverlap) continue;
        const int a = id[s.first];
        const int b = id[s.second];
        if ((a == prev && b == c) || (a == c && b == prev)) add_window(s);
      }
    }
    const CompartmentDecl& d = cfg.compartments[c];
    CompartmentPlan& cp = plan.compartments[c];
    const uint64_t start = at;
    cp.data = {at, at + kBootSlotBytes + d.data};
    cp.stack = {cp.data.top, cp.data.top + d.stack};
    cp.heap = {cp.stack.top, cp.stack.top + d.heap};
    at = cp.heap.top;
    add_region(d.name + ".data", RegionKind::kData, AddressSpace::kData,
               cp.data, {d.name});
    add_region(d.name + ".stack", RegionKind::kStack, AddressSpace::kData,
               cp.stack, {d.name});
    add_region(d.name + ".heap", RegionKind::kHeap, AddressSpace::kData,
               cp.heap, {d.name});
    for (int s : hosted[c]) {
      CompartmentPlan& sp = plan.compartments[s];
      sp.data = {at, at + kSandboxDataBytes};
      sp.stack = {sp.data.top, at + kSandboxScratchBytes};
      sp.heap = {sp.stack.top, sp.stack.top};
      sp.span = {at, at + kSandboxScratchBytes};
      sp.ddc = sp.span;
      at = sp.span.top;
      add_region(sp.name + ".data", RegionKind::kData, AddressSpace::kData,
                 sp.data, {sp.name});
      add_region(sp.name + ".stack", RegionKind::kStack, AddressSpace::kData,
                 sp.stack, {sp.name});
    }
    cp.span = {start, at};
    cp.ddc = cp.span;
  }
  for (const SharedDecl& s : cfg.shared) {
    if (s.mode == SharingMode::kException) add_window(s);
  }
  for (const SharedWindow& w : plan.shared) {
    if (w.mode != SharingMode::kOverlap) continue;
    for (int owner : {w.first, w.second}) {
      Interval& ddc = plan.compartments[owner].ddc;
      ddc.base = std::min(ddc.base, w.range.base);
      ddc.top = std::max(ddc.top, w.range.top);
    }
  }
  if (at > memory_size) {
    return absl::ResourceExhaustedError(absl::StrFormat(
        "capacity exceeded: layout needs %#x bytes, memory has %#x", at,
        memory_size));
  }
  plan.placement = *std::move(order);
  std::stable_sort(plan.regions.begin(), plan.regions.end(),
                   [](const Region& a, const Region& b) {
                     if (a.space != b.space) return a.space < b.space;
                     return a.range.base < b.range.base;
                   });
  return plan;
}

absl::Status AuditLayout(const LayoutPlan& plan) {
  auto fail = [](auto&&... args) {
    return absl::InternalError(absl::StrCat("layout audit: ", args...));
  };
  auto show = [](const Interval& i) {
    return absl::StrFormat("[%#x,%#x)", i.base, i.top);
  };
  const auto& rs = plan.regions;
  for (size_t i = 0; i < rs.size(); ++i) {
    if (rs[i].space == AddressSpace::kData &&
        rs[i].range.top > plan.memory_size) {
      return fail(rs[i].name, " lies outside memory");
    }
    for (size_t j = i + 1; j < rs.size(); ++j) {
      if (rs[i].space == rs[j].space && rs[i].range.Overlaps(rs[j].range)) {
        return fail(rs[i].name, " overlaps ", rs[j].name);
      }
    }
  }
  const auto& cs = plan.compartments;
  for (const CompartmentPlan& c : cs) {
    // Contiguity of the private span.
    if (c.data.base != c.span.base || c.stack.base != c.data.top ||
        c.heap.base != c.stack.top || c.heap.top > c.span.top) {
      return fail(c.name, " span is not contiguous");
    }
    if (!c.ddc.Contains(c.span)) return fail(c.name, " DDC misses its span");
    if (c.host) {
      if (c.ddc != c.span || !cs[*c.host].span.Contains(c.span) ||
          !cs[*c.host].code.Contains(c.code)) {
        return fail(c.name, " sandbox escapes its host");
      }
    } else {
      // Anything beyond the span must be overlap windows this compartment
      // owns, packed against the span.
      uint64_t lo = c.span.base;
      uint64_t hi = c.span.top;
      bool grew = true;
      while (grew) {
        grew = false;
        for (const SharedWindow& w : plan.shared) {
          if (w.mode != SharingMode::kOverlap ||
              (w.first != c.id && w.second != c.id)) {
            continue;
          }
          if (w.range.top == lo) lo = w.range.base, grew = true;
          if (w.range.base == hi) hi = w.range.top, grew = true;
        }
      }
      if (c.ddc.base < lo || c.ddc.top > hi) {
        return fail(c.name, " DDC ", show(c.ddc),
                    " reaches beyond its span and windows");
      }
    }
    for (const Interval& sw : {plan.switcher_data, plan.cap_table}) {
      if (c.ddc.Overlaps(sw)) return fail(c.name, " DDC covers switcher memory");
    }
    if (c.code.Overlaps(plan.switcher_code)) {
      return fail(c.name, " PCC covers switcher code");
    }
  }
  for (size_t i = 0; i < cs.size(); ++i) {
    for (size_t j = i + 1; j < cs.size(); ++j) {
      const CompartmentPlan& a = cs[i];
      const CompartmentPlan& b = cs[j];
      const bool nested = (a.host && *a.host == b.id) ||
                          (b.host && *b.host == a.id);
      if (nested) continue;
      if (a.code.Overlaps(b.code)) return fail(a.name, " PCC overlaps ", b.name);
      if (!a.ddc.Overlaps(b.ddc)) continue;
      const Interval both{std::max(a.ddc.base, b.ddc.base),
                          std::min(a.ddc.top, b.ddc.top)};
      uint64_t covered = 0;
      for (const SharedWindow& w : plan.shared) {
        const bool pair = (w.first == a.id && w.second == b.id) ||
                          (w.first == b.id && w.second == a.id);
        if (pair && both.Contains(w.range)) covered += w.range.size();
      }
      if (covered != both.size()) {
        return fail(a.name, " and ", b.name, " DDCs overlap on ", show(both),
                    " beyond their shared windows");
      }
    }
  }
  return absl::OkStatus();
}

std::string FormatRegionTable(const LayoutPlan& plan) {
  std::string out = absl::StrFormat("%-24s %-14s %-5s %-12s %-12s %s\n",
                                    "region", "kind", "space", "base", "top",
                                    "owners");
  for (const Region& r : plan.regions) {
    absl::StrAppendFormat(&out, "%-24s %-14s %-5s %#-12x %#-12x %s\n", r.name,
                          RegionKindName(r.kind),
                          r.space == AddressSpace::kCode ? "code" : "data",
                          r.range.base, r.range.top,
                          absl::StrJoin(r.owners, ","));
  }
  absl::StrAppendFormat(&out, "\n%-24s %2s  %-26s %s\n", "compartment", "id",
                        "ddc", "pcc");
  for (const CompartmentPlan& c : plan.compartments) {
    absl::StrAppendFormat(
        &out, "%-24s %2d  %-26s %s\n", c.name, c.id,
        absl::StrFormat("[%#x,%#x)", c.ddc.base, c.ddc.top),
        absl::StrFormat("[%#x,%#x)", c.code.base, c.code.top));
  }
  return out;
}

std::string FormatRegionRecords(const LayoutPlan& plan) {
  std::string out;
  for (const Region& r : plan.regions) {
    nlohmann::ordered_json j;
    j["name"] = r.name;
    j["kind"] = RegionKindName(r.kind);
    j["space"] = r.space == AddressSpace::kCode ? "code" : "data";
    j["base"] = r.range.base;
    j["top"] = r.range.top;
    j["owners"] = r.owners;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace capsim
