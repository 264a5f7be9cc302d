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

#ifndef CAPSIM_WORKLOAD_H_
#define CAPSIM_WORKLOAD_H_

// Scenario replay and the switch cost model. A scenario is an acyclic call
// graph whose functions are assigned to compartments; replaying it counts
// domain transitions (a call and its return are one transition each), and
// the cost model turns those counts into modeled cycles.
//
// Scenario files are line oriented, '#' starts a comment:
//
//   iterations 5000
//   cpi 0.83
//   fn insert comp=app instr=2516
//   fn vfs_fstat comp=fs instr=50
//   call insert vfs_fstat count=2 [promote=1]
//   share app fs mode=overlap        # overlap, exception or sandbox
//
// The first function declared is the root and runs once per iteration.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "capsim/layout.h"
#include "capsim/machine.h"

namespace capsim {

struct ScenarioCall {
  int callee = 0;
  uint64_t count = 1;
  // Shared-heap promotions performed per invocation of this edge.
  uint64_t promotions = 0;
};

struct ScenarioFunction {
  std::string name;
  std::string compartment;
  uint64_t instructions = 0;
  std::vector<ScenarioCall> calls;
};

struct ScenarioShare {
  std::string first;
  std::string second;
  std::string mode;  // overlap, exception or sandbox
};

struct Scenario {
  std::vector<ScenarioFunction> functions;  // functions[0] is the root
  uint64_t iterations = 1;
  std::optional<double> cpi;
  std::vector<ScenarioShare> shares;

  int FindFunction(absl::string_view name) const;
  // Distinct compartment names in order of first appearance.
  std::vector<std::string> Compartments() const;
  // Declared sharing mode between two compartments, "overlap" if none.
  std::string SharingBetween(absl::string_view a, absl::string_view b) const;
};

// Errors carry the 1-based line number. A call to an undeclared function is
// reported as a dangling callee; recursion is rejected.
absl::StatusOr<Scenario> ParseScenario(absl::string_view text);

struct EdgeSwitches {
  std::string from;
  std::string to;
  std::string sharing;
  uint64_t switches = 0;

  bool operator==(const EdgeSwitches&) const = default;
};

struct ScenarioCounts {
  uint64_t total_instructions = 0;
  uint64_t switch_count = 0;
  uint64_t promotion_count = 0;
  // Cross-compartment edges only, in declaration order.
  std::vector<EdgeSwitches> edges;
};

absl::StatusOr<ScenarioCounts> RunScenario(const Scenario& s);

struct CostModel {
  double hot_latency_cycles = 400;
  double cold_latency_cycles = 950;
  double hot_fraction = 0.999;
  double baseline_cpi = 1.0;
  double promotion_cost_cycles = 100;
};

absl::Status ValidateCostModel(const CostModel& cm);
// Parses "hot=400,cold=950,hotfrac=1.0,cpi=0.83,promo=100" on top of `base`.
absl::StatusOr<CostModel> ParseCostOverrides(absl::string_view spec,
                                             CostModel base);

struct MetricsReport {
  uint64_t total_instructions = 0;
  uint64_t switch_count = 0;
  double switches_per_1k_instructions = 0;
  uint64_t promotion_count = 0;
  double modeled_extra_cycles = 0;
  double modeled_overhead_percent = 0;
  std::vector<EdgeSwitches> edges;
};

absl::StatusOr<MetricsReport> EstimateOverhead(const ScenarioCounts& counts,
                                               const CostModel& cm);

enum class ReportFormat { kTable, kRecords };

std::string EmitReport(const MetricsReport& r, ReportFormat format);
// Reads back the records format.
absl::StatusOr<MetricsReport> ParseReportRecords(absl::string_view text);

// Replays the scenario on the machine: one compartment per scenario
// compartment, one body per function, a gate for every cross-compartment
// call. Returns the number of sealed invokes the machine counted. Meant for
// small scenarios; call counts are unrolled.
absl::StatusOr<uint64_t> CountSwitchesOnMachine(const Scenario& s);

// Cycle weights per class of micro-op, for a hot and a cold switch.
enum class OpClass {
  kAlu,
  kCapAlu,
  kLoad,
  kStore,
  kPair,
  kInstallDdc,
  kBranch,
  kSealedInvoke,
};
inline constexpr int kNumOpClasses = 8;

OpClass ClassOf(Op op);
const char* OpClassName(OpClass c);

struct OpWeights {
  std::array<double, kNumOpClasses> hot;
  std::array<double, kNumOpClasses> cold;

  static OpWeights Default();
};

enum class SwitchComponent {
  kGatePrologue,
  kSwitcher,
  kTrampolineEnter,
  kCallee,
  kTrampolineReturn,
  kGateEpilogue,
};
inline constexpr int kNumSwitchComponents = 6;

const char* SwitchComponentName(SwitchComponent c);

struct ComponentCost {
  SwitchComponent component;
  std::array<uint64_t, kNumOpClasses> ops{};
  uint64_t total_ops = 0;
  double hot_cycles = 0;
  double cold_cycles = 0;
};

struct LatencyBreakdown {
  std::array<ComponentCost, kNumSwitchComponents> components;
  uint64_t total_ops = 0;
  double hot_cycles = 0;
  double cold_cycles = 0;
};

// Runs one gate round trip from `caller` into an empty function in `callee`
// and attributes every executed micro-op to the protocol phase it belongs to.
absl::StatusOr<LatencyBreakdown> SwitchLatencyBreakdown(
    BootImage& img, int caller, int callee,
    const OpWeights& weights = OpWeights::Default());

std::string FormatBreakdown(const LatencyBreakdown& b);

}  // namespace capsim

#endif  // CAPSIM_WORKLOAD_H_
