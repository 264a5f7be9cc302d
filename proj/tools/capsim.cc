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

// capsim: command-line front end for layouts, boot images, the isolation
// suite, scenario replay, the switch microbenchmark and program traces.
//
// Exit codes: 0 success, 1 parse or configuration error, 2 property
// violation, 3 machine fault.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/str_format.h"
#include "capsim/isa.h"
#include "capsim/layout.h"
#include "capsim/machine.h"
#include "capsim/runtime.h"
#include "capsim/verify.h"
#include "capsim/workload.h"

namespace capsim {
namespace {

constexpr int kExitConfig = 1;
constexpr int kExitViolation = 2;
constexpr int kExitFault = 3;

absl::StatusOr<std::string> ReadFile(const std::string& path) {
  std::ifstream in(path);
  if (!in) return absl::NotFoundError(absl::StrCat("cannot read ", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int Fail(const absl::Status& s, int code = kExitConfig) {
  std::cerr << "error: " << s.message() << "\n";
  return code;
}

absl::StatusOr<LayoutPlan> LoadPlan(const std::string& path, uint64_t memory) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return text.status();
  absl::StatusOr<CompartmentConfig> cfg = ParseConfig(*text);
  if (!cfg.ok()) return cfg.status();
  return ComputeLayout(*cfg, memory);
}

int CompartmentIndex(const LayoutPlan& plan, const std::string& name) {
  for (const CompartmentPlan& c : plan.compartments) {
    if (c.name == name) return c.id;
  }
  return -1;
}

int Layout(const std::string& path, uint64_t memory, const std::string& format) {
  absl::StatusOr<LayoutPlan> plan = LoadPlan(path, memory);
  if (!plan.ok()) return Fail(plan.status());
  std::cout << (format == "records" ? FormatRegionRecords(*plan)
                                   : FormatRegionTable(*plan));
  return 0;
}

int BootDump(const std::string& path, uint64_t memory) {
  absl::StatusOr<LayoutPlan> plan = LoadPlan(path, memory);
  if (!plan.ok()) return Fail(plan.status());
  absl::StatusOr<BootImage> img = BootInit(*plan);
  if (!img.ok()) return Fail(img.status());
  auto cap_at = [&](Address a) { return img->memory.LoadCap(a)->ToString(); };
  std::cout << absl::StrFormat("switcher pair @%#x\n  pcc %s\n  ddc %s\n",
                               plan->switcher_data.base,
                               cap_at(plan->switcher_data.base),
                               cap_at(plan->switcher_data.base + 32));
  std::cout << "\ncapability table\n";
  for (const CompartmentPlan& c : plan->compartments) {
    const Address row = plan->cap_table.base + kCapTableEntryBytes * c.id;
    std::cout << absl::StrFormat("  %-12s @%#x\n    pcc %s\n    ddc %s\n", c.name,
                                 row, cap_at(row), cap_at(row + 32));
  }
  std::cout << "\nsealed capabilities and saved stack pointers\n";
  for (const CompartmentPlan& c : plan->compartments) {
    const Address entry = img->SealedEntryAddress(c.id);
    std::cout << absl::StrFormat("  %-12s entry @%#x %s\n", c.name, entry,
                                 cap_at(entry));
    const Address exc = img->ExceptionCapAddress(c.id);
    if (img->memory.TagAt(exc)) {
      std::cout << absl::StrFormat("  %-12s c18   @%#x %s\n", "", exc, cap_at(exc));
    }
    const Address slot = img->SavedSpAddress(c.id);
    std::cout << absl::StrFormat("  %-12s sp    @%#x = %#x\n", "", slot,
                                 *img->memory.ReadU64(slot));
  }
  return 0;
}

int Verify(const std::string& path, uint64_t memory, uint64_t fuzz,
           uint64_t seed, int threads) {
  absl::StatusOr<LayoutPlan> plan = LoadPlan(path, memory);
  if (!plan.ok()) return Fail(plan.status());
  FuzzOptions opts;
  opts.programs = fuzz;
  opts.seed = seed;
  opts.threads = threads;
  bool ok = true;
  for (const PropertyResult& p : VerifyLayout(*plan, opts)) {
    std::cout << (p.ok ? "PASS " : "FAIL ") << p.name;
    if (!p.detail.empty()) std::cout << ": " << p.detail;
    std::cout << "\n";
    ok &= p.ok;
  }
  return ok ? 0 : kExitViolation;
}

int RunScenarioFile(const std::string& path, const std::string& cost,
                    const std::string& format) {
  absl::StatusOr<std::string> text = ReadFile(path);
  if (!text.ok()) return Fail(text.status());
  absl::StatusOr<Scenario> s = ParseScenario(*text);
  if (!s.ok()) return Fail(s.status());
  CostModel base;
  if (s->cpi) base.baseline_cpi = *s->cpi;
  absl::StatusOr<CostModel> cm = ParseCostOverrides(cost, base);
  if (!cm.ok()) return Fail(cm.status());
  absl::StatusOr<ScenarioCounts> counts = RunScenario(*s);
  if (!counts.ok()) return Fail(counts.status());
  absl::StatusOr<MetricsReport> r = EstimateOverhead(*counts, *cm);
  if (!r.ok()) return Fail(r.status());
  std::cout << EmitReport(*r, format == "records" ? ReportFormat::kRecords
                                                  : ReportFormat::kTable);
  return 0;
}

int Micro(const std::string& path, uint64_t memory, const std::string& caller,
          const std::string& callee) {
  absl::StatusOr<LayoutPlan> plan = LoadPlan(path, memory);
  if (!plan.ok()) return Fail(plan.status());
  if (plan->compartments.size() < 2) {
    return Fail(absl::InvalidArgumentError("need at least two compartments"));
  }
  const int from = caller.empty() ? 0 : CompartmentIndex(*plan, caller);
  const int to = callee.empty() ? 1 : CompartmentIndex(*plan, callee);
  if (from < 0 || to < 0) {
    return Fail(absl::InvalidArgumentError("unknown compartment"));
  }
  absl::StatusOr<BootImage> img = BootInit(*plan);
  if (!img.ok()) return Fail(img.status());
  absl::StatusOr<LatencyBreakdown> b = SwitchLatencyBreakdown(*img, from, to);
  if (!b.ok()) {
    return Fail(b.status(), absl::IsAborted(b.status()) ? kExitFault : kExitConfig);
  }
  std::cout << FormatBreakdown(*b);
  return 0;
}

int Trace(const std::string& cfg_path, const std::string& program_path,
          uint64_t memory, const std::string& comp, uint64_t max_steps) {
  absl::StatusOr<LayoutPlan> plan = LoadPlan(cfg_path, memory);
  if (!plan.ok()) return Fail(plan.status());
  absl::StatusOr<std::string> text = ReadFile(program_path);
  if (!text.ok()) return Fail(text.status());
  absl::StatusOr<Program> program = Assemble(*text);
  if (!program.ok()) return Fail(program.status());
  program->push_back(Instruction{Op::kHalt});
  const int id = comp.empty() ? 0 : CompartmentIndex(*plan, comp);
  if (id < 0) return Fail(absl::InvalidArgumentError("unknown compartment"));
  absl::StatusOr<BootImage> img = BootInit(*plan);
  if (!img.ok()) return Fail(img.status());
  absl::StatusOr<uint64_t> entry = PlaceCode(*img, id, *program);
  if (!entry.ok()) return Fail(entry.status());
  absl::StatusOr<MachineState> st = EnterCompartment(*img, id);
  if (!st.ok()) return Fail(st.status());
  st->pcc.address = *entry;
  MachineHooks hooks;
  hooks.on_step = [](const StepEvent& e) {
    std::cout << FormatTraceLine(e) << "\n";
  };
  const RunResult r = Run(*st, img->memory, img->program, max_steps, &hooks);
  std::cout << absl::StrFormat(
      "steps=%d switches=%d ddc_swaps=%d\n", r.steps,
      st->counters.switches_hot + st->counters.switches_cold,
      st->counters.ddc_swap_events);
  if (st->fault) {
    std::cerr << "fault: " << st->fault->ToString() << "\n";
    return kExitFault;
  }
  if (r.reason == StopReason::kMaxSteps) {
    std::cerr << "stopped after " << max_steps << " steps\n";
    return kExitFault;
  }
  return 0;
}

int Main(int argc, char** argv) {
  CLI::App app{"Capability compartment simulator"};
  app.require_subcommand(1);
  uint64_t seed = 0;
  uint64_t memory = uint64_t{1} << 22;
  app.add_option("--seed", seed, "Seed for every random choice")->capture_default_str();
  app.add_option("--memory", memory, "Data memory size in bytes")->capture_default_str();

  std::string cfg, path, format = "table", cost, caller, callee, comp;
  uint64_t fuzz = 10000, max_steps = 100000;
  int threads = 1;

  CLI::App* layout = app.add_subcommand("layout", "Print the region table");
  layout->add_option("config", cfg)->required();
  layout->add_option("--format", format)->check(CLI::IsMember({"table", "records"}));

  CLI::App* boot = app.add_subcommand("boot-dump", "Print boot-time capabilities");
  boot->add_option("config", cfg)->required();

  CLI::App* verify = app.add_subcommand("verify", "Run the isolation property suite");
  verify->add_option("config", cfg)->required();
  verify->add_option("--fuzz", fuzz, "Random programs to run")->capture_default_str();
  verify->add_option("--threads", threads, "Fuzz worker threads")
      ->check(CLI::Range(1, 64));

  CLI::App* run = app.add_subcommand("run", "Replay a scenario under the cost model");
  run->add_option("scenario", path)->required();
  run->add_option("--cost", cost, "hot=..,cold=..,hotfrac=..,cpi=..,promo=..");
  run->add_option("--format", format)->check(CLI::IsMember({"table", "records"}));

  CLI::App* micro = app.add_subcommand("micro", "Break down one switch round trip");
  micro->add_option("config", cfg)->required();
  micro->add_option("--caller", caller);
  micro->add_option("--callee", callee);

  CLI::App* trace = app.add_subcommand("trace", "Run a program with a per-step trace");
  trace->add_option("config", cfg)->required();
  trace->add_option("program", path)->required();
  trace->add_option("--comp", comp, "Compartment to run in (default: first)");
  trace->add_option("--max-steps", max_steps)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (*layout) return Layout(cfg, memory, format);
  if (*boot) return BootDump(cfg, memory);
  if (*verify) return Verify(cfg, memory, fuzz, seed, threads);
  if (*run) return RunScenarioFile(path, cost, format);
  if (*micro) return Micro(cfg, memory, caller, callee);
  return Trace(cfg, path, memory, comp, max_steps);
}

}  // namespace
}  // namespace capsim

int main(int argc, char** argv) { return capsim::Main(argc, argv); }
