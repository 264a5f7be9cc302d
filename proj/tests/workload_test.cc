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

#include <cmath>
#include <random>
#include <string>

#include "absl/strings/str_cat.h"
#include "capsim/runtime.h"
#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "oracles.h"
#include "test_util.h"

namespace capsim {
namespace {

using ::capsim::testing::MustBoot;
using ::capsim::testing::ReadFixture;
using ::testing::HasSubstr;

Scenario MustParse(absl::string_view text) {
  absl::StatusOr<Scenario> s = ParseScenario(text);
  EXPECT_TRUE(s.ok()) << s.status();
  return *s;
}

ScenarioCounts MustRun(const Scenario& s) {
  absl::StatusOr<ScenarioCounts> c = RunScenario(s);
  EXPECT_TRUE(c.ok()) << c.status();
  return *c;
}

TEST(ParseScenarioTest, ReadsTheSqliteFixture) {
  const Scenario s = MustParse(ReadFixture("sqlite_fs.scn"));
  EXPECT_EQ(s.iterations, 5000);
  ASSERT_TRUE(s.cpi.has_value());
  EXPECT_DOUBLE_EQ(*s.cpi, 0.83);
  ASSERT_EQ(s.functions.size(), 5);
  EXPECT_EQ(s.functions[0].name, "insert");
  EXPECT_EQ(s.functions[0].calls.size(), 2);
  EXPECT_EQ(s.Compartments(), (std::vector<std::string>{"app", "fs"}));
  EXPECT_EQ(s.SharingBetween("fs", "app"), "overlap");
}

TEST(ParseScenarioTest, Errors) {
  struct Case {
    const char* text;
    const char* message;
  };
  const Case cases[] = {
      {"fn a comp=x instr=1\ncall a b count=1\n", "line 2: dangling callee reference 'b'"},
      {"fn a comp=x instr=1\nfn b comp=y instr=1\ncall a b\ncall b a\n",
       "recursive"},
      {"fn a comp=x instr=1\nfn a comp=y instr=2\n", "line 2: duplicate function"},
      {"fn a comp=x\n", "needs comp= and instr="},
      {"fn a comp=x instr=1 size=3\n", "unknown key 'size'"},
      {"fn a comp=x instr=1\ncall a a count=0\n", "count must be positive"},
      {"iterations 0\nfn a comp=x instr=1\n", "positive integer"},
      {"fn a comp=x instr=1\nshare x z mode=overlap\n", "unknown compartment 'z'"},
      {"fn a comp=x instr=1\nfn b comp=y instr=1\nshare x y mode=mpk\n",
       "unknown sharing mode"},
      {"jump a\n", "unknown directive"},
      {"# nothing\n", "no functions"},
  };
  for (const Case& c : cases) {
    absl::StatusOr<Scenario> s = ParseScenario(c.text);
    ASSERT_FALSE(s.ok()) << c.text;
    EXPECT_THAT(s.status().message(), HasSubstr(c.message)) << c.text;
  }
}

TEST(RunScenarioTest, SingleFunctionHasNoSwitches) {
  const ScenarioCounts c = MustRun(MustParse("iterations 7\nfn main comp=a instr=11\n"));
  EXPECT_EQ(c.total_instructions, 77);
  EXPECT_EQ(c.switch_count, 0);
  EXPECT_TRUE(c.edges.empty());
}

TEST(RunScenarioTest, SqliteFixtureCounts) {
  // Per INSERT: 2516 + (500 + 3 * (200 + 100)) + 2 * 50 = 4016 instructions;
  // 3 pager -> vfs and 2 insert -> fstat crossings, each there and back.
  const ScenarioCounts c = MustRun(MustParse(ReadFixture("sqlite_fs.scn")));
  EXPECT_EQ(c.total_instructions, 4016 * 5000);
  EXPECT_EQ(c.switch_count, 10 * 5000);
  ASSERT_EQ(c.edges.size(), 2);
  EXPECT_EQ(c.edges[0], (EdgeSwitches{"insert", "vfs_fstat", "overlap", 20000}));
  EXPECT_EQ(c.edges[1], (EdgeSwitches{"pager_write", "vfs_write", "overlap", 30000}));
}

TEST(RunScenarioTest, ChachaOnlyPaysForEveryStoreCall) {
  const char* kShape = R"(
fn bench comp=main instr=1000
fn chacha comp=%s instr=500
fn store comp=%s instr=5
call bench chacha count=1
call chacha store count=%d
)";
  for (int k : {1, 4, 16}) {
    const ScenarioCounts only =
        MustRun(MustParse(absl::StrFormat(kShape, "iso", "main", k)));
    const ScenarioCounts all =
        MustRun(MustParse(absl::StrFormat(kShape, "iso", "iso", k)));
    EXPECT_EQ(only.switch_count, 2 + 2 * k);
    EXPECT_EQ(all.switch_count, 2);
    EXPECT_GT(only.switch_count, all.switch_count);
  }
}

TEST(RunScenarioTest, FilesystemPathCrossesTwoBoundaries) {
  // findInodeInfo (SQLite) -> fstat -> sys_fstat -> vfs_fstat -> vn_stat
  // (vfscore) -> memset (libc, default compartment).
  const std::vector<std::string> comps = {"sqlite", "vfscore", "vfscore",
                                          "vfscore", "vfscore", "default"};
  const std::vector<std::string> names = {"findInodeInfo", "fstat", "sys_fstat",
                                          "vfs_fstat", "vn_stat", "memset"};
  std::string text;
  for (size_t i = 0; i < names.size(); ++i) {
    absl::StrAppend(&text, "fn ", names[i], " comp=", comps[i], " instr=10\n");
  }
  for (size_t i = 0; i + 1 < names.size(); ++i) {
    absl::StrAppend(&text, "call ", names[i], " ", names[i + 1], "\n");
  }
  const Scenario s = MustParse(text);
  const ScenarioCounts c = MustRun(s);
  EXPECT_EQ(c.switch_count, oracle::PathTransitions(comps));
  ASSERT_EQ(c.edges.size(), 2);
  EXPECT_EQ(c.edges[0].from, "findInodeInfo");
  EXPECT_EQ(c.edges[1].to, "memset");
  absl::StatusOr<uint64_t> machine = CountSwitchesOnMachine(s);
  ASSERT_TRUE(machine.ok()) << machine.status();
  EXPECT_EQ(*machine, c.switch_count);
}

TEST(RunScenarioTest, MatchesTheInvocationWalkingOracle) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 400; ++trial) {
    const oracle::MiniScenario mini = oracle::RandomMiniScenario(rng, 10, 4, 3, 3);
    const ScenarioCounts c = MustRun(MustParse(mini.Text()));
    const oracle::MiniCounts want = oracle::WalkScenario(mini);
    ASSERT_EQ(c.total_instructions, want.instructions) << mini.Text();
    ASSERT_EQ(c.switch_count, want.switches) << mini.Text();
    ASSERT_EQ(c.promotion_count, want.promotions) << mini.Text();
    uint64_t edge_total = 0;
    for (const EdgeSwitches& e : c.edges) edge_total += e.switches;
    ASSERT_EQ(edge_total, c.switch_count);
  }
}

TEST(RunScenarioTest, NewBoundaryNeverRemovesSwitches) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    oracle::MiniScenario mini = oracle::RandomMiniScenario(rng, 10, 3, 3, 2);
    const uint64_t before = MustRun(MustParse(mini.Text())).switch_count;
    // Move one function into a compartment of its own.
    mini.fns[rng() % mini.fns.size()].comp = 99;
    const uint64_t after = MustRun(MustParse(mini.Text())).switch_count;
    ASSERT_GE(after, before) << mini.Text();
  }
}

TEST(RunScenarioTest, MachineReplayAgrees) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 40; ++trial) {
    const oracle::MiniScenario mini = oracle::RandomMiniScenario(rng, 6, 3, 2, 2);
    const Scenario s = MustParse(mini.Text());
    absl::StatusOr<uint64_t> machine = CountSwitchesOnMachine(s);
    ASSERT_TRUE(machine.ok()) << machine.status() << "\n" << mini.Text();
    ASSERT_EQ(*machine, MustRun(s).switch_count) << mini.Text();
  }
}

TEST(RunScenarioTest, MachineReplayOfASmallLibsodiumShape) {
  const Scenario s = MustParse(R"(
iterations 2
fn bench comp=main instr=1000
fn hex2bin comp=main instr=30
fn chacha comp=chacha instr=200
fn store32_le comp=main instr=1
call bench hex2bin count=1
call bench chacha count=1
call chacha store32_le count=5
)");
  absl::StatusOr<uint64_t> machine = CountSwitchesOnMachine(s);
  ASSERT_TRUE(machine.ok()) << machine.status();
  EXPECT_EQ(*machine, 2 * (2 + 2 * 5));
  EXPECT_EQ(*machine, MustRun(s).switch_count);
}

double OracleOverhead(double switches, double instructions, double promotions,
                      const CostModel& cm) {
  const double cycles =
      switches * (cm.hot_fraction * cm.hot_latency_cycles +
                  (1 - cm.hot_fraction) * cm.cold_latency_cycles) +
      promotions * cm.promotion_cost_cycles;
  return 100 * cycles / (instructions * cm.baseline_cpi);
}

TEST(EstimateOverheadTest, ReportedOperatingPoints) {
  CostModel cm;
  cm.hot_fraction = 1.0;
  cm.baseline_cpi = 0.83;
  ScenarioCounts c;
  c.total_instructions = 100000;
  c.switch_count = 249;  // 2.49 per 1k
  absl::StatusOr<MetricsReport> r = EstimateOverhead(c, cm);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(r->switches_per_1k_instructions, 2.49, 1e-12);
  EXPECT_NEAR(r->modeled_overhead_percent, 2.49 * 400 / (1000 * 0.83) * 100, 1e-9);
  EXPECT_NEAR(r->modeled_overhead_percent, 120.0, 0.1);

  cm.baseline_cpi = 2.2;
  c.total_instructions = 1000000;
  c.switch_count = 669;
  r = EstimateOverhead(c, cm);
  ASSERT_TRUE(r.ok());
  EXPECT_NEAR(r->modeled_overhead_percent, 12.16, 0.01);
}

TEST(EstimateOverheadTest, ZeroSwitchesAndZeroInstructions) {
  ScenarioCounts c;
  c.total_instructions = 500;
  absl::StatusOr<MetricsReport> r = EstimateOverhead(c, CostModel{});
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(r->modeled_overhead_percent, 0);
  c.total_instructions = 0;
  EXPECT_FALSE(EstimateOverhead(c, CostModel{}).ok());
}

TEST(EstimateOverheadTest, RejectsInvalidCostModels) {
  ScenarioCounts c;
  c.total_instructions = 1;
  for (auto mutate : std::vector<void (*)(CostModel&)>{
           [](CostModel& m) { m.hot_fraction = 1.5; },
           [](CostModel& m) { m.hot_fraction = -0.1; },
           [](CostModel& m) { m.hot_latency_cycles = 0; },
           [](CostModel& m) { m.cold_latency_cycles = -1; },
           [](CostModel& m) { m.baseline_cpi = 0; }}) {
    CostModel cm;
    mutate(cm);
    EXPECT_FALSE(EstimateOverhead(c, cm).ok());
  }
}

TEST(EstimateOverheadTest, MatchesFormulaOnRandomInputs) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 1000; ++i) {
    ScenarioCounts c;
    c.total_instructions = 1 + rng() % 100000000;
    c.switch_count = rng() % 1000000;
    c.promotion_count = rng() % 1000;
    CostModel cm;
    cm.hot_latency_cycles = 100 + 900 * u(rng);
    cm.cold_latency_cycles = 100 + 2000 * u(rng);
    cm.hot_fraction = u(rng);
    cm.baseline_cpi = 0.3 + 3 * u(rng);
    cm.promotion_cost_cycles = 500 * u(rng);
    absl::StatusOr<MetricsReport> r = EstimateOverhead(c, cm);
    ASSERT_TRUE(r.ok());
    const double want =
        OracleOverhead(static_cast<double>(c.switch_count),
                       static_cast<double>(c.total_instructions),
                       static_cast<double>(c.promotion_count), cm);
    ASSERT_NEAR(r->modeled_overhead_percent, want, 1e-9 * std::max(1.0, want));
    ASSERT_NEAR(r->switches_per_1k_instructions,
                1000.0 * static_cast<double>(c.switch_count) /
                    static_cast<double>(c.total_instructions),
                1e-9);
  }
}

TEST(EstimateOverheadTest, LinearInSwitchFrequency) {
  CostModel cm;
  cm.baseline_cpi = 1.3;
  ScenarioCounts base;
  base.total_instructions = 1000000;
  base.switch_count = 300;
  const double one = EstimateOverhead(base, cm)->modeled_overhead_percent;
  for (uint64_t k : {0, 2, 5, 17}) {
    ScenarioCounts c = base;
    c.switch_count = k * base.switch_count;
    EXPECT_NEAR(EstimateOverhead(c, cm)->modeled_overhead_percent,
                static_cast<double>(k) * one, 1e-9);
  }
}

TEST(CostOverridesTest, ParsesAndValidates) {
  absl::StatusOr<CostModel> cm =
      ParseCostOverrides("hot=350,cold=990,hotfrac=0.5,cpi=2.2,promo=7", CostModel{});
  ASSERT_TRUE(cm.ok());
  EXPECT_EQ(cm->hot_latency_cycles, 350);
  EXPECT_EQ(cm->cold_latency_cycles, 990);
  EXPECT_EQ(cm->hot_fraction, 0.5);
  EXPECT_EQ(cm->baseline_cpi, 2.2);
  EXPECT_EQ(cm->promotion_cost_cycles, 7);
  EXPECT_FALSE(ParseCostOverrides("warm=3", CostModel{}).ok());
  EXPECT_FALSE(ParseCostOverrides("hotfrac=2", CostModel{}).ok());
  EXPECT_FALSE(ParseCostOverrides("cpi=x", CostModel{}).ok());
}

MetricsReport SqliteReport() {
  const Scenario s = MustParse(ReadFixture("sqlite_fs.scn"));
  CostModel cm;
  cm.baseline_cpi = *s.cpi;
  return *EstimateOverhead(MustRun(s), cm);
}

TEST(EmitReportTest, TableHasThreeDecimalFrequency) {
  const std::string t = EmitReport(SqliteReport(), ReportFormat::kTable);
  EXPECT_THAT(t, HasSubstr("switches_per_1k_instructions 2.490\n"));
  EXPECT_THAT(t, HasSubstr("pager_write -> vfs_write"));
}

TEST(EmitReportTest, RecordsRoundTrip) {
  const MetricsReport r = SqliteReport();
  absl::StatusOr<MetricsReport> back =
      ParseReportRecords(EmitReport(r, ReportFormat::kRecords));
  ASSERT_TRUE(back.ok()) << back.status();
  EXPECT_EQ(back->total_instructions, r.total_instructions);
  EXPECT_EQ(back->switch_count, r.switch_count);
  EXPECT_EQ(back->switches_per_1k_instructions, r.switches_per_1k_instructions);
  EXPECT_EQ(back->promotion_count, r.promotion_count);
  EXPECT_EQ(back->modeled_extra_cycles, r.modeled_extra_cycles);
  EXPECT_EQ(back->modeled_overhead_percent, r.modeled_overhead_percent);
  EXPECT_EQ(back->edges, r.edges);
  EXPECT_FALSE(ParseReportRecords("{\"record\":\"edge\"}\n").ok());
  EXPECT_FALSE(ParseReportRecords("not json\n").ok());
}

TEST(EmitReportTest, MatchesGoldenFiles) {
  const MetricsReport r = SqliteReport();
  EXPECT_EQ(EmitReport(r, ReportFormat::kTable),
            ReadFixture("golden/sqlite_fs.table"));
  EXPECT_EQ(EmitReport(r, ReportFormat::kRecords),
            ReadFixture("golden/sqlite_fs.records"));
}

class BreakdownTest : public ::testing::Test {
 protected:
  BootImage img_ = MustBoot(ReadFixture("two_comp.cfg"));
};

TEST_F(BreakdownTest, ComponentsPartitionTheRoundTrip) {
  absl::StatusOr<LatencyBreakdown> b = SwitchLatencyBreakdown(img_, 0, 1);
  ASSERT_TRUE(b.ok()) << b.status();
  uint64_t ops = 0;
  double hot = 0, cold = 0;
  for (const ComponentCost& c : b->components) {
    uint64_t by_class = 0;
    for (uint64_t n : c.ops) by_class += n;
    EXPECT_EQ(by_class, c.total_ops);
    ops += c.total_ops;
    hot += c.hot_cycles;
    cold += c.cold_cycles;
  }
  EXPECT_EQ(ops, b->total_ops);
  EXPECT_DOUBLE_EQ(hot, b->hot_cycles);
  EXPECT_DOUBLE_EQ(cold, b->cold_cycles);

  // Independent count: a plain gate call retires the same instructions plus
  // the stub's trailing halt.
  BootImage img = MustBoot(ReadFixture("two_comp.cfg"));
  const uint64_t body = *PlaceCode(img, 1, {{Op::kReturnLocal}});
  MachineState st = *EnterCompartment(img, 0);
  ASSERT_TRUE(GateCall(img, st, {0, 1, body, {}, ReturnDest::None()}).ok());
  EXPECT_EQ(st.counters.instructions_retired, b->total_ops + 1);
}

TEST_F(BreakdownTest, PhasesHaveTheirEmittedLengths) {
  absl::StatusOr<LatencyBreakdown> b = SwitchLatencyBreakdown(img_, 0, 1);
  ASSERT_TRUE(b.ok());
  auto ops = [&](SwitchComponent c) {
    return b->components[static_cast<int>(c)].total_ops;
  };
  // The switcher and the trampoline halves are straight-line code, padded
  // with halts.
  auto live = [](const Program& p, size_t from) {
    uint64_t n = 0;
    for (size_t i = from; i < p.size(); ++i) n += p[i].op != Op::kHalt;
    return n;
  };
  EXPECT_EQ(ops(SwitchComponent::kSwitcher), live(EmitSwitcher(img_.plan), 0));
  const Program tramp = EmitTrampoline(img_.plan, 1);
  EXPECT_EQ(ops(SwitchComponent::kTrampolineEnter), kTrampolineReturnOffset);
  EXPECT_EQ(ops(SwitchComponent::kTrampolineReturn),
            live(tramp, kTrampolineReturnOffset));
  EXPECT_EQ(ops(SwitchComponent::kCallee), 1);
  const GateCode gate = *EmitGate(img_.plan, {0, 1, 0, {}, ReturnDest::None()});
  EXPECT_EQ(ops(SwitchComponent::kGatePrologue), gate.prologue_size);
  EXPECT_EQ(ops(SwitchComponent::kGateEpilogue),
            gate.code.size() - gate.prologue_size);
}

TEST_F(BreakdownTest, DefaultWeightsHitTheMeasuredRanges) {
  absl::StatusOr<LatencyBreakdown> b = SwitchLatencyBreakdown(img_, 0, 1);
  ASSERT_TRUE(b.ok());
  EXPECT_GE(b->hot_cycles, 300);
  EXPECT_LE(b->hot_cycles, 400);
  EXPECT_GE(b->cold_cycles, 900);
  EXPECT_LE(b->cold_cycles, 1000);
  const ComponentCost& sw =
      b->components[static_cast<int>(SwitchComponent::kSwitcher)];
  for (const ComponentCost& c : b->components) {
    if (c.component == SwitchComponent::kSwitcher) continue;
    EXPECT_GT(sw.hot_cycles, c.hot_cycles) << SwitchComponentName(c.component);
    EXPECT_GT(sw.cold_cycles, c.cold_cycles) << SwitchComponentName(c.component);
  }
}

TEST_F(BreakdownTest, RejectsBadCompartments) {
  EXPECT_FALSE(SwitchLatencyBreakdown(img_, 0, 0).ok());
  EXPECT_FALSE(SwitchLatencyBreakdown(img_, 0, 7).ok());
}

}  // namespace
}  // namespace capsim
