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

#include "capsim/workload.h"

#include <algorithm>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"
#include "capsim/runtime.h"
#include "json.hpp"

namespace capsim {
namespace {

using Wide = unsigned __int128;

absl::Status LineError(int line, absl::string_view msg) {
  return absl::InvalidArgumentError(absl::StrFormat("line %d: %s", line, msg));
}

bool ParseCount(absl::string_view s, uint64_t& out) {
  return !s.empty() && absl::ascii_isdigit(s.front()) && absl::SimpleAtoi(s, &out);
}

// Splits "key=value" tokens; every key must be in `allowed`.
absl::Status ParseKeys(const std::vector<absl::string_view>& tokens,
                       std::initializer_list<absl::string_view> allowed,
                       int line,
                       std::vector<std::pair<std::string, std::string>>& out) {
  std::set<std::string> seen;
  for (absl::string_view t : tokens) {
    std::pair<std::string, std::string> kv =
        absl::StrSplit(t, absl::MaxSplits('=', 1));
    if (kv.first.empty() || t.find('=') == absl::string_view::npos) {
      return LineError(line, absl::StrCat("expected key=value, got '", t, "'"));
    }
    if (std::find(allowed.begin(), allowed.end(), kv.first) == allowed.end()) {
      return LineError(line, absl::StrCat("unknown key '", kv.first, "'"));
    }
    if (!seen.insert(kv.first).second) {
      return LineError(line, absl::StrCat("duplicate key '", kv.first, "'"));
    }
    out.push_back(std::move(kv));
  }
  return absl::OkStatus();
}

struct PendingCall {
  std::string from;
  std::string to;
  ScenarioCall call;
  int line = 0;
};

bool IsSharingMode(absl::string_view m) {
  return m == "overlap" || m == "exception" || m == "sandbox";
}

// Functions reachable from the root, callers before callees.
std::vector<int> TopologicalOrder(const Scenario& s) {
  std::vector<int> post;
  std::vector<bool> seen(s.functions.size(), false);
  auto visit = [&](auto&& self, int f) -> void {
    seen[f] = true;
    for (const ScenarioCall& c : s.functions[f].calls) {
      if (!seen[c.callee]) self(self, c.callee);
    }
    post.push_back(f);
  };
  if (!s.functions.empty()) visit(visit, 0);
  std::reverse(post.begin(), post.end());
  return post;
}

absl::StatusOr<uint64_t> Narrow(Wide v, absl::string_view what) {
  if (v > Wide{UINT64_MAX}) {
    return absl::OutOfRangeError(absl::StrCat(what, " overflows 64 bits"));
  }
  return static_cast<uint64_t>(v);
}

}  // namespace

int Scenario::FindFunction(absl::string_view name) const {
  for (size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::string> Scenario::Compartments() const {
  std::vector<std::string> out;
  for (const ScenarioFunction& f : functions) {
    if (std::find(out.begin(), out.end(), f.compartment) == out.end()) {
      out.push_back(f.compartment);
    }
  }
  return out;
}

std::string Scenario::SharingBetween(absl::string_view a,
                                     absl::string_view b) const {
  for (const ScenarioShare& sh : shares) {
    if ((sh.first == a && sh.second == b) || (sh.first == b && sh.second == a)) {
      return sh.mode;
    }
  }
  return "overlap";
}

absl::StatusOr<Scenario> ParseScenario(absl::string_view text) {
  Scenario s;
  std::vector<PendingCall> calls;
  std::vector<std::pair<ScenarioShare, int>> shares;
  bool have_iterations = false;
  int line = 0;
  for (absl::string_view raw : absl::StrSplit(text, '\n')) {
    ++line;
    absl::string_view body = raw.substr(0, raw.find('#'));
    std::vector<absl::string_view> tok =
        absl::StrSplit(body, absl::ByAnyChar(" \t\r"), absl::SkipEmpty());
    if (tok.empty()) continue;
    const absl::string_view directive = tok[0];
    const std::vector<absl::string_view> rest(tok.begin() + 1, tok.end());
    if (directive == "iterations") {
      if (rest.size() != 1 || !ParseCount(rest[0], s.iterations) ||
          s.iterations == 0) {
        return LineError(line, "iterations expects one positive integer");
      }
      if (have_iterations) return LineError(line, "iterations given twice");
      have_iterations = true;
    } else if (directive == "cpi") {
      double cpi = 0;
      if (rest.size() != 1 || !absl::SimpleAtod(rest[0], &cpi) || !(cpi > 0)) {
        return LineError(line, "cpi expects one positive number");
      }
      if (s.cpi) return LineError(line, "cpi given twice");
      s.cpi = cpi;
    } else if (directive == "fn") {
      if (rest.empty()) return LineError(line, "fn needs a name");
      ScenarioFunction f;
      f.name = std::string(rest[0]);
      if (s.FindFunction(f.name) >= 0) {
        return LineError(line, absl::StrCat("duplicate function '", f.name, "'"));
      }
      std::vector<std::pair<std::string, std::string>> kv;
      if (absl::Status st = ParseKeys({rest.begin() + 1, rest.end()},
                                      {"comp", "instr"}, line, kv);
          !st.ok()) {
        return st;
      }
      bool has_comp = false, has_instr = false;
      for (const auto& [k, v] : kv) {
        if (k == "comp") {
          f.compartment = v;
          has_comp = !v.empty();
        } else if (!ParseCount(v, f.instructions)) {
          return LineError(line, absl::StrCat("bad instr '", v, "'"));
        } else {
          has_instr = true;
        }
      }
      if (!has_comp || !has_instr) {
        return LineError(line, "fn needs comp= and instr=");
      }
      s.functions.push_back(std::move(f));
    } else if (directive == "call") {
      if (rest.size() < 2) return LineError(line, "call needs <from> <to>");
      PendingCall pc{std::string(rest[0]), std::string(rest[1]), {}, line};
      std::vector<std::pair<std::string, std::string>> kv;
      if (absl::Status st = ParseKeys({rest.begin() + 2, rest.end()},
                                      {"count", "promote"}, line, kv);
          !st.ok()) {
        return st;
      }
      for (const auto& [k, v] : kv) {
        uint64_t& field = k == "count" ? pc.call.count : pc.call.promotions;
        if (!ParseCount(v, field)) {
          return LineError(line, absl::StrCat("bad ", k, " '", v, "'"));
        }
      }
      if (pc.call.count == 0) return LineError(line, "count must be positive");
      calls.push_back(std::move(pc));
    } else if (directive == "share") {
      if (rest.size() != 3) {
        return LineError(line, "share expects <comp> <comp> mode=<m>");
      }
      std::vector<std::pair<std::string, std::string>> kv;
      if (absl::Status st = ParseKeys({rest[2]}, {"mode"}, line, kv); !st.ok()) {
        return st;
      }
      if (!IsSharingMode(kv[0].second)) {
        return LineError(line, absl::StrCat("unknown sharing mode '",
                                            kv[0].second, "'"));
      }
      shares.push_back(
          {{std::string(rest[0]), std::string(rest[1]), kv[0].second}, line});
    } else {
      return LineError(line, absl::StrCat("unknown directive '", directive, "'"));
    }
  }
  if (s.functions.empty()) return absl::InvalidArgumentError("no functions declared");

  std::set<std::pair<int, int>> edges;
  for (const PendingCall& pc : calls) {
    const int from = s.FindFunction(pc.from);
    const int to = s.FindFunction(pc.to);
    if (from < 0 || to < 0) {
      return LineError(pc.line, absl::StrCat("dangling callee reference '",
                                             from < 0 ? pc.from : pc.to, "'"));
    }
    if (!edges.insert({from, to}).second) {
      return LineError(pc.line, absl::StrCat("duplicate call ", pc.from, " -> ",
                                             pc.to));
    }
    ScenarioCall c = pc.call;
    c.callee = to;
    s.functions[from].calls.push_back(c);
  }
  const std::vector<std::string> comps = s.Compartments();
  for (const auto& [sh, l] : shares) {
    for (const std::string& c : {sh.first, sh.second}) {
      if (std::find(comps.begin(), comps.end(), c) == comps.end()) {
        return LineError(l, absl::StrCat("unknown compartment '", c, "'"));
      }
    }
    if (sh.first == sh.second) return LineError(l, "share needs two compartments");
    s.shares.push_back(sh);
  }

  // Reject recursion: the graph has to be a DAG.
  enum class Mark { kNone, kActive, kDone };
  std::vector<Mark> mark(s.functions.size(), Mark::kNone);
  std::string cycle;
  auto dfs = [&](auto&& self, int f) -> bool {
    mark[f] = Mark::kActive;
    for (const ScenarioCall& c : s.functions[f].calls) {
      if (mark[c.callee] == Mark::kActive) {
        cycle = absl::StrCat(s.functions[f].name, " -> ",
                             s.functions[c.callee].name);
        return false;
      }
      if (mark[c.callee] == Mark::kNone && !self(self, c.callee)) return false;
    }
    mark[f] = Mark::kDone;
    return true;
  };
  for (size_t f = 0; f < s.functions.size(); ++f) {
    if (mark[f] == Mark::kNone && !dfs(dfs, static_cast<int>(f))) {
      return absl::InvalidArgumentError(
          absl::StrCat("call graph is recursive at ", cycle));
    }
  }
  return s;
}

absl::StatusOr<ScenarioCounts> RunScenario(const Scenario& s) {
  if (s.functions.empty()) return absl::InvalidArgumentError("empty scenario");
  const std::vector<int> order = TopologicalOrder(s);
  std::vector<Wide> invocations(s.functions.size(), 0);
  invocations[0] = s.iterations;
  Wide instructions = 0, switches = 0, promotions = 0;
  ScenarioCounts out;
  std::vector<std::pair<std::pair<int, int>, Wide>> edge_switches;
  for (int f : order) {
    const ScenarioFunction& fn = s.functions[f];
    instructions += invocations[f] * fn.instructions;
    for (const ScenarioCall& c : fn.calls) {
      const Wide calls = invocations[f] * c.count;
      invocations[c.callee] += calls;
      promotions += calls * c.promotions;
      if (s.functions[c.callee].compartment != fn.compartment) {
        switches += 2 * calls;
        edge_switches.push_back({{f, c.callee}, 2 * calls});
      }
    }
  }
  // Report edges in declaration order rather than traversal order.
  std::sort(edge_switches.begin(), edge_switches.end(),
            [&](const auto& a, const auto& b) {
              if (a.first.first != b.first.first) return a.first.first < b.first.first;
              const auto& calls = s.functions[a.first.first].calls;
              auto pos = [&](int callee) {
                return std::find_if(calls.begin(), calls.end(),
                                    [&](const ScenarioCall& c) {
                                      return c.callee == callee;
                                    }) -
                       calls.begin();
              };
              return pos(a.first.second) < pos(b.first.second);
            });
  for (const auto& [edge, count] : edge_switches) {
    const ScenarioFunction& from = s.functions[edge.first];
    const ScenarioFunction& to = s.functions[edge.second];
    absl::StatusOr<uint64_t> n = Narrow(count, "edge switch count");
    if (!n.ok()) return n.status();
    out.edges.push_back({from.name, to.name,
                         s.SharingBetween(from.compartment, to.compartment), *n});
  }
  absl::StatusOr<uint64_t> ti = Narrow(instructions, "instruction count");
  absl::StatusOr<uint64_t> sc = Narrow(switches, "switch count");
  absl::StatusOr<uint64_t> pc = Narrow(promotions, "promotion count");
  if (!ti.ok()) return ti.status();
  if (!sc.ok()) return sc.status();
  if (!pc.ok()) return pc.status();
  out.total_instructions = *ti;
  out.switch_count = *sc;
  out.promotion_count = *pc;
  return out;
}

absl::Status ValidateCostModel(const CostModel& cm) {
  if (!(cm.hot_latency_cycles > 0) || !(cm.cold_latency_cycles > 0)) {
    return absl::InvalidArgumentError("latencies must be positive");
  }
  if (!(cm.hot_fraction >= 0 && cm.hot_fraction <= 1)) {
    return absl::InvalidArgumentError("hot fraction must lie in [0, 1]");
  }
  if (!(cm.baseline_cpi > 0)) {
    return absl::InvalidArgumentError("baseline CPI must be positive");
  }
  if (!(cm.promotion_cost_cycles >= 0)) {
    return absl::InvalidArgumentError("promotion cost must not be negative");
  }
  return absl::OkStatus();
}

absl::StatusOr<CostModel> ParseCostOverrides(absl::string_view spec,
                                             CostModel base) {
  for (absl::string_view item : absl::StrSplit(spec, ',', absl::SkipEmpty())) {
    std::pair<absl::string_view, absl::string_view> kv =
        absl::StrSplit(item, absl::MaxSplits('=', 1));
    double v = 0;
    if (!absl::SimpleAtod(kv.second, &v)) {
      return absl::InvalidArgumentError(absl::StrCat("bad cost value '", item, "'"));
    }
    if (kv.first == "hot") {
      base.hot_latency_cycles = v;
    } else if (kv.first == "cold") {
      base.cold_latency_cycles = v;
    } else if (kv.first == "hotfrac") {
      base.hot_fraction = v;
    } else if (kv.first == "cpi") {
      base.baseline_cpi = v;
    } else if (kv.first == "promo") {
      base.promotion_cost_cycles = v;
    } else {
      return absl::InvalidArgumentError(
          absl::StrCat("unknown cost key '", kv.first, "'"));
    }
  }
  if (absl::Status s = ValidateCostModel(base); !s.ok()) return s;
  return base;
}

absl::StatusOr<MetricsReport> EstimateOverhead(const ScenarioCounts& counts,
                                               const CostModel& cm) {
  if (absl::Status s = ValidateCostModel(cm); !s.ok()) return s;
  if (counts.total_instructions == 0) {
    return absl::InvalidArgumentError("scenario executes no instructions");
  }
  MetricsReport r;
  r.total_instructions = counts.total_instructions;
  r.switch_count = counts.switch_count;
  r.promotion_count = counts.promotion_count;
  r.edges = counts.edges;
  const double n = static_cast<double>(counts.total_instructions);
  r.switches_per_1k_instructions =
      1000.0 * static_cast<double>(counts.switch_count) / n;
  const double per_switch = cm.hot_fraction * cm.hot_latency_cycles +
                            (1 - cm.hot_fraction) * cm.cold_latency_cycles;
  r.modeled_extra_cycles =
      static_cast<double>(counts.switch_count) * per_switch +
      static_cast<double>(counts.promotion_count) * cm.promotion_cost_cycles;
  r.modeled_overhead_percent = 100.0 * r.modeled_extra_cycles / (n * cm.baseline_cpi);
  return r;
}

std::string EmitReport(const MetricsReport& r, ReportFormat format) {
  if (format == ReportFormat::kRecords) {
    nlohmann::ordered_json head;
    head["record"] = "metrics";
    head["total_instructions"] = r.total_instructions;
    head["switch_count"] = r.switch_count;
    head["switches_per_1k_instructions"] = r.switches_per_1k_instructions;
    head["promotion_count"] = r.promotion_count;
    head["modeled_extra_cycles"] = r.modeled_extra_cycles;
    head["modeled_overhead_percent"] = r.modeled_overhead_percent;
    std::string out = head.dump() + "\n";
    for (const EdgeSwitches& e : r.edges) {
      nlohmann::ordered_json j;
      j["record"] = "edge";
      j["from"] = e.from;
      j["to"] = e.to;
      j["sharing"] = e.sharing;
      j["switches"] = e.switches;
      out += j.dump() + "\n";
    }
    return out;
  }
  std::string out;
  absl::StrAppendFormat(&out, "%-28s %d\n", "total_instructions", r.total_instructions);
  absl::StrAppendFormat(&out, "%-28s %d\n", "switch_count", r.switch_count);
  absl::StrAppendFormat(&out, "%-28s %.3f\n", "switches_per_1k_instructions",
                        r.switches_per_1k_instructions);
  absl::StrAppendFormat(&out, "%-28s %d\n", "promotion_count", r.promotion_count);
  absl::StrAppendFormat(&out, "%-28s %.1f\n", "modeled_extra_cycles",
                        r.modeled_extra_cycles);
  absl::StrAppendFormat(&out, "%-28s %.3f\n", "modeled_overhead_percent",
                        r.modeled_overhead_percent);
  if (!r.edges.empty()) {
    absl::StrAppendFormat(&out, "\n%-40s %-10s %s\n", "edge", "sharing", "switches");
    for (const EdgeSwitches& e : r.edges) {
      absl::StrAppendFormat(&out, "%-40s %-10s %d\n",
                            absl::StrCat(e.from, " -> ", e.to), e.sharing,
                            e.switches);
    }
  }
  return out;
}

absl::StatusOr<MetricsReport> ParseReportRecords(absl::string_view text) {
  MetricsReport r;
  bool have_metrics = false;
  int line = 0;
  for (absl::string_view raw : absl::StrSplit(text, '\n', absl::SkipWhitespace())) {
    ++line;
    const nlohmann::json j = nlohmann::json::parse(raw.begin(), raw.end(),
                                                   nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("record")) {
      return LineError(line, "not a report record");
    }
    try {
      if (j["record"] == "metrics") {
        r.total_instructions = j.at("total_instructions").get<uint64_t>();
        r.switch_count = j.at("switch_count").get<uint64_t>();
        r.switches_per_1k_instructions =
            j.at("switches_per_1k_instructions").get<double>();
        r.promotion_count = j.at("promotion_count").get<uint64_t>();
        r.modeled_extra_cycles = j.at("modeled_extra_cycles").get<double>();
        r.modeled_overhead_percent = j.at("modeled_overhead_percent").get<double>();
        have_metrics = true;
      } else if (j["record"] == "edge") {
        r.edges.push_back({j.at("from").get<std::string>(),
                           j.at("to").get<std::string>(),
                           j.at("sharing").get<std::string>(),
                           j.at("switches").get<uint64_t>()});
      } else {
        return LineError(line, "unknown record type");
      }
    } catch (const nlohmann::json::exception& e) {
      return LineError(line, e.what());
    }
  }
  if (!have_metrics) return absl::InvalidArgumentError("no metrics record");
  return r;
}

namespace {

constexpr uint64_t kReplayStackBytes = 64 * 1024;
constexpr uint64_t kReplayMemory = uint64_t{1} << 22;
constexpr uint64_t kMaxReplaySlots = uint64_t{1} << 20;

// Saves LR, makes the calls, restores LR and returns.
constexpr uint64_t kBodyOverhead = 5;

CompartmentConfig ReplayConfig(const std::vector<std::string>& comps,
                               const std::vector<uint64_t>& code_slots) {
  CompartmentConfig cfg;
  for (size_t i = 0; i < comps.size(); ++i) {
    CompartmentDecl d;
    d.name = comps[i];
    d.code = code_slots[i];
    d.data = 1024;
    d.stack = kReplayStackBytes;
    d.heap = 1024;
    cfg.compartments.push_back(d);
  }
  return cfg;
}

}  // namespace

absl::StatusOr<uint64_t> CountSwitchesOnMachine(const Scenario& s) {
  if (s.functions.empty()) return absl::InvalidArgumentError("empty scenario");
  const std::vector<std::string> comps = s.Compartments();
  auto comp_of = [&](int f) {
    return static_cast<int>(
        std::find(comps.begin(), comps.end(), s.functions[f].compartment) -
        comps.begin());
  };

  // A gate without arguments has the same length everywhere; measure it on
  // a throwaway plan.
  std::vector<uint64_t> slots(comps.size(), kMinCodeSlots);
  uint64_t gate_size = 0;
  if (comps.size() > 1) {
    absl::StatusOr<LayoutPlan> probe =
        ComputeLayout(ReplayConfig(comps, slots), kReplayMemory);
    if (!probe.ok()) return probe.status();
    absl::StatusOr<GateCode> g = EmitGate(*probe, {0, 1, 0, {}, ReturnDest::None()});
    if (!g.ok()) return g.status();
    gate_size = g->code.size();
  }
  const std::vector<int> order = TopologicalOrder(s);
  std::vector<Wide> need(comps.size(), 1);  // the driver's halt
  need[comp_of(0)] += 1;                      // the driver's call
  for (int f : order) {
    Wide size = kBodyOverhead;
    for (const ScenarioCall& c : s.functions[f].calls) {
      size += Wide{c.count} * (comp_of(c.callee) == comp_of(f) ? 1 : gate_size);
    }
    need[comp_of(f)] += size;
  }
  for (size_t i = 0; i < comps.size(); ++i) {
    if (need[i] > kMaxReplaySlots) {
      return absl::ResourceExhaustedError(
          absl::StrCat("scenario too large to replay: ", comps[i], " needs ",
                       static_cast<uint64_t>(need[i]), " code slots"));
    }
    slots[i] = std::max<uint64_t>(
        kMinCodeSlots,
        static_cast<uint64_t>(need[i]) + kTrampolineSlots + kStubSlots);
  }
  absl::StatusOr<LayoutPlan> plan =
      ComputeLayout(ReplayConfig(comps, slots), kReplayMemory);
  if (!plan.ok()) return plan.status();
  absl::StatusOr<BootImage> booted = BootInit(*plan);
  if (!booted.ok()) return booted.status();
  BootImage& img = *booted;

  // Callees first so every call site knows its target.
  std::vector<uint64_t> entry(s.functions.size(), 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int f = *it;
    const int comp = comp_of(f);
    Program body = {{Op::kAddImm, kSp, kSp, kNoReg, -32, 0},
                    {Op::kStoreCapReg, kNoReg, kSp, kLr, 0, 0}};
    for (const ScenarioCall& c : s.functions[f].calls) {
      const int callee_comp = comp_of(c.callee);
      Program site;
      if (callee_comp == comp) {
        site = {{Op::kCallLocal, kNoReg, kNoReg, kNoReg,
                 static_cast<int64_t>(entry[c.callee]), 0}};
      } else {
        absl::StatusOr<GateCode> g = EmitGate(
            *plan, {comp, callee_comp, entry[c.callee], {}, ReturnDest::None()});
        if (!g.ok()) return g.status();
        site = std::move(g->code);
      }
      for (uint64_t k = 0; k < c.count; ++k) {
        body.insert(body.end(), site.begin(), site.end());
      }
    }
    body.push_back({Op::kLoadCapReg, kLr, kSp, kNoReg, 0, 0});
    body.push_back({Op::kAddImm, kSp, kSp, kNoReg, 32, 0});
    body.push_back({Op::kReturnLocal});
    absl::StatusOr<uint64_t> at = PlaceCode(img, comp, body);
    if (!at.ok()) return at.status();
    entry[f] = *at;
  }
  const int root_comp = comp_of(0);
  absl::StatusOr<uint64_t> driver = PlaceCode(
      img, root_comp,
      {{Op::kCallLocal, kNoReg, kNoReg, kNoReg, static_cast<int64_t>(entry[0]), 0},
       {Op::kHalt}});
  if (!driver.ok()) return driver.status();

  absl::StatusOr<MachineState> st = EnterCompartment(img, root_comp);
  if (!st.ok()) return st.status();
  for (uint64_t i = 0; i < s.iterations; ++i) {
    st->pcc.address = *driver;
    st->halted = false;
    const RunResult r = Run(*st, img.memory, img.program, uint64_t{1} << 32);
    if (st->fault) return FaultStatus(*st->fault);
    if (r.reason != StopReason::kHalt || st->pc() != *driver + 1) {
      return absl::InternalError(
          absl::StrFormat("replay stopped at pc %d", st->pc()));
    }
  }
  return st->counters.switches_hot + st->counters.switches_cold;
}

OpClass ClassOf(Op op) {
  switch (op) {
    case Op::kNop:
    case Op::kHalt:
    case Op::kMoveReg:
    case Op::kMoveImm:
    case Op::kAddImm:
    case Op::kAdd:
    case Op::kShlImm:
    case Op::kReadCompartment:
      return OpClass::kAlu;
    case Op::kSetBounds:
    case Op::kSetAddress:
    case Op::kRestrictPerms:
    case Op::kSealReg:
    case Op::kReadDdc:
      return OpClass::kCapAlu;
    case Op::kLoadInt:
    case Op::kLoadCapReg:
      return OpClass::kLoad;
    case Op::kStoreInt:
    case Op::kStoreCapReg:
      return OpClass::kStore;
    case Op::kLoadCapPair:
    case Op::kStoreCapPair:
      return OpClass::kPair;
    case Op::kInstallDdc:
      return OpClass::kInstallDdc;
    case Op::kBranchCap:
    case Op::kCallLocal:
    case Op::kCallReg:
    case Op::kReturnLocal:
      return OpClass::kBranch;
    case Op::kLoadPairBranch:
      return OpClass::kSealedInvoke;
  }
  return OpClass::kAlu;
}

const char* OpClassName(OpClass c) {
  static constexpr const char* kNames[] = {
      "alu", "cap_alu", "load", "store", "pair", "install_ddc", "branch",
      "sealed_invoke"};
  return kNames[static_cast<int>(c)];
}

const char* SwitchComponentName(SwitchComponent c) {
  static constexpr const char* kNames[] = {
      "gate prologue", "switcher", "trampoline enter", "callee",
      "trampoline return", "gate epilogue"};
  return kNames[static_cast<int>(c)];
}

OpWeights OpWeights::Default() {
  OpWeights w;
  // Installing DDC serializes the pipeline, and a sealed invoke is an
  // indirect branch plus a pair load, so those dominate. Calibrated against
  // the round trip SwitchLatencyBreakdown measures.
  //        alu cap_alu load store pair  ddc  branch invoke
  w.hot = {{1, 2, 3, 2, 3, 35, 10, 25}};
  w.cold = {{1, 3, 8, 8, 9, 90, 35, 60}};
  return w;
}

absl::StatusOr<LatencyBreakdown> SwitchLatencyBreakdown(
    BootImage& img, int caller, int callee, const OpWeights& weights) {
  const int n = static_cast<int>(img.plan.compartments.size());
  if (caller < 0 || callee < 0 || caller >= n || callee >= n || caller == callee) {
    return absl::InvalidArgumentError("need two distinct compartments");
  }
  absl::StatusOr<uint64_t> body = PlaceCode(img, callee, {{Op::kReturnLocal}});
  if (!body.ok()) return body.status();
  absl::StatusOr<MachineState> st = EnterCompartment(img, caller);
  if (!st.ok()) return st.status();
  absl::StatusOr<GateSite> site =
      PrepareGate(img, *st, {caller, callee, *body, {}, ReturnDest::None()});
  if (!site.ok()) return site.status();

  const Interval switcher = img.plan.switcher_code;
  const uint64_t tramp = img.plan.compartments[callee].code.base;
  LatencyBreakdown b;
  for (int c = 0; c < kNumSwitchComponents; ++c) {
    b.components[c].component = static_cast<SwitchComponent>(c);
  }
  auto component_of = [&](uint64_t pc) {
    if (pc >= site->entry && pc < site->epilogue) return SwitchComponent::kGatePrologue;
    if (pc >= site->epilogue && pc < site->end) return SwitchComponent::kGateEpilogue;
    if (switcher.Contains(pc)) return SwitchComponent::kSwitcher;
    if (pc >= tramp && pc < tramp + kTrampolineReturnOffset) {
      return SwitchComponent::kTrampolineEnter;
    }
    if (pc >= tramp + kTrampolineReturnOffset && pc < tramp + kTrampolineSlots) {
      return SwitchComponent::kTrampolineReturn;
    }
    return SwitchComponent::kCallee;
  };
  MachineHooks hooks;
  hooks.on_step = [&](const StepEvent& e) {
    if (e.fault || e.pc == site->end) return;  // the harness's halt
    ComponentCost& c = b.components[static_cast<int>(component_of(e.pc))];
    ++c.ops[static_cast<int>(ClassOf(e.inst.op))];
  };
  Run(*st, img.memory, img.program, 100'000, &hooks);
  if (st->fault) return FaultStatus(*st->fault);
  if (!st->halted || st->pc() != site->end) {
    return absl::InternalError("round trip did not reach the call site's end");
  }
  st->halted = false;
  for (ComponentCost& c : b.components) {
    for (int k = 0; k < kNumOpClasses; ++k) {
      c.total_ops += c.ops[k];
      c.hot_cycles += static_cast<double>(c.ops[k]) * weights.hot[k];
      c.cold_cycles += static_cast<double>(c.ops[k]) * weights.cold[k];
    }
    b.total_ops += c.total_ops;
    b.hot_cycles += c.hot_cycles;
    b.cold_cycles += c.cold_cycles;
  }
  return b;
}

std::string FormatBreakdown(const LatencyBreakdown& b) {
  std::string out = absl::StrFormat("%-18s %6s %10s %10s\n", "component", "ops",
                                    "hot", "cold");
  for (const ComponentCost& c : b.components) {
    absl::StrAppendFormat(&out, "%-18s %6d %10.0f %10.0f\n",
                          SwitchComponentName(c.component), c.total_ops,
                          c.hot_cycles, c.cold_cycles);
  }
  absl::StrAppendFormat(&out, "%-18s %6d %10.0f %10.0f\n", "total", b.total_ops,
                        b.hot_cycles, b.cold_cycles);
  return out;
}

}  // namespace capsim
