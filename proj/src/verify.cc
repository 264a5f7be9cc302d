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

#include "capsim/verify.h"

#include <algorithm>
#include <random>
#include <thread>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "capsim/machine.h"
#include "capsim/runtime.h"

namespace capsim {
namespace {

constexpr size_t kMaxExamples = 8;
constexpr uint64_t kResetInterval = 256;

// Addresses worth aiming at: every region edge and a few interior points.
std::vector<Address> Targets(const LayoutPlan& plan) {
  std::vector<Address> out = {0, 8, plan.memory_size - 8};
  for (const Region& r : plan.regions) {
    if (r.space != AddressSpace::kData) continue;
    for (Address a : {r.range.base, r.range.base + 16, r.range.top - 32,
                      r.range.top - 8, r.range.top,
                      r.range.base + r.range.size() / 2}) {
      out.push_back(a & ~uint64_t{7});
    }
  }
  return out;
}

class ProgramGenerator {
 public:
  ProgramGenerator(const LayoutPlan& plan, std::mt19937_64& rng)
      : plan_(plan), rng_(rng), targets_(Targets(plan)) {
    for (const CompartmentPlan& c : plan.compartments) {
      const Interval d = c.ddc;
      own_targets_.push_back({d.base, d.base + 64, d.base + d.size() / 2,
                              d.top - 64, d.top - 16});
    }
  }

  // `entries[k]` is compartment k's honest entry point for this round.
  Program Generate(int comp, int length, const std::vector<uint64_t>& entries) {
    entries_ = &entries;
    comp_ = comp;
    Program p;
    while (static_cast<int>(p.size()) < length) Emit(comp, p);
    p.push_back(Instruction{Op::kHalt});
    return p;
  }

 private:
  uint8_t Reg() { return static_cast<uint8_t>(rng_() % kNumRegs); }
  uint64_t Pick(uint64_t n) { return rng_() % n; }
  int64_t Target() {
    const std::vector<Address>& pool =
        Pick(2) == 0 ? targets_ : own_targets_[comp_];
    return static_cast<int64_t>(pool[Pick(pool.size())] + 16 * Pick(5) - 32);
  }

  void Emit(int comp, Program& p) {
    const uint64_t roll = Pick(100);
    Instruction i;
    if (roll < 6) {
      // Try the real switcher entry with a random callee.
      const Address sealed = plan_.compartments[comp].data.base;
      const uint64_t callee = Pick(entries_->size());
      const uint64_t target = Pick(4) == 0
                                  ? Pick(plan_.switcher_code.top + 2048)
                                  : (*entries_)[callee];
      p.push_back({Op::kMoveImm, kCalleeIdReg, kNoReg, kNoReg,
                   static_cast<int64_t>(Pick(8) == 0 ? Pick(entries_->size() + 2)
                                                     : callee),
                   0});
      p.push_back({Op::kMoveImm, kTargetReg, kNoReg, kNoReg,
                   static_cast<int64_t>(target), 0});
      p.push_back({Op::kMoveImm, 0, kNoReg, kNoReg, Target(), 0});
      // The switcher parks the caller's SP through c11.
      const Address slot = sealed + kSavedSpOffset;
      p.push_back({Op::kMoveImm, 11, kNoReg, kNoReg,
                   static_cast<int64_t>(Pick(8) == 0 ? Target() : slot), 0});
      p.push_back({Op::kLoadCapReg, kSealedReg, kNoReg, kNoReg,
                   static_cast<int64_t>(sealed), 0});
      p.push_back({Op::kLoadPairBranch, kNoReg, kSealedReg, kNoReg, 0, 0});
      return;
    }
    if (roll < 60) {
      static constexpr Op kMem[] = {Op::kLoadInt,     Op::kStoreInt,
                                    Op::kLoadCapReg,  Op::kStoreCapReg,
                                    Op::kLoadCapPair, Op::kStoreCapPair};
      i.op = kMem[Pick(6)];
      const bool absolute = Pick(2) == 0;
      i.rs1 = absolute ? kNoReg : Reg();
      i.imm = absolute ? Target() : static_cast<int64_t>(Pick(129)) - 64;
      if (!absolute && Pick(3) == 0) i.flags |= kViaCap;
      if (Pick(4) == 0) i.flags |= kRequireTag;
      const bool pair = i.op == Op::kLoadCapPair || i.op == Op::kStoreCapPair;
      const uint8_t r = pair ? static_cast<uint8_t>(Pick(kNumRegs - 1)) : Reg();
      if (i.op == Op::kStoreInt || i.op == Op::kStoreCapReg ||
          i.op == Op::kStoreCapPair) {
        i.rs2 = r;
      } else {
        i.rd = r;
      }
      p.push_back(i);
      return;
    }
    if (roll < 72) {
      // Point a register somewhere interesting.
      p.push_back({Op::kMoveImm, Reg(), kNoReg, kNoReg, Target(), 0});
      return;
    }
    i.op = static_cast<Op>(Pick(kNumOps));
    if (IsMemoryOp(i.op) || i.op == Op::kHalt) i.op = Op::kSetAddress;
    i.rd = Reg();
    i.rs1 = Reg();
    i.rs2 = Reg();
    i.imm = static_cast<int64_t>(Pick(2) ? Pick(1024) : rng_());
    switch (i.op) {
      case Op::kSetBounds:
        i.imm = static_cast<int64_t>(Pick(4) == 0 ? rng_() : Pick(1 << 16));
        break;
      case Op::kRestrictPerms:
      case Op::kSealReg:
        i.imm = static_cast<int64_t>(Pick(64));
        break;
      case Op::kCallLocal:
        i.imm = static_cast<int64_t>(Pick(plan_.compartments.back().code.top + 64));
        break;
      case Op::kLoadPairBranch:
        i.rs1 = Pick(2) ? kSealedReg : Reg();
        break;
      default:
        break;
    }
    // Drop whichever operand fields the op does not take.
    for (int clear = 0; clear < 16; ++clear) {
      Instruction c = i;
      if (clear & 1) c.rd = kNoReg;
      if (clear & 2) c.rs1 = kNoReg;
      if (clear & 4) c.rs2 = kNoReg;
      if (clear & 8) c.imm = 0;
      if (IsWellFormed(c)) {
        p.push_back(c);
        return;
      }
    }
  }

  const LayoutPlan& plan_;
  std::mt19937_64& rng_;
  std::vector<Address> targets_;
  std::vector<std::vector<Address>> own_targets_;
  const std::vector<uint64_t>* entries_ = nullptr;
  int comp_ = 0;
};

// A callee that trusts its caller's integer pointer in c0, as hybrid code
// does, and relies on DDC to confine it.
Program HonestBody() {
  return {{Op::kLoadInt, 1, 0, kNoReg, 0, 0},
          {Op::kStoreInt, kNoReg, 0, 1, 8, 0},
          {Op::kMoveImm, 0, kNoReg, kNoReg, 0, 0},
          {Op::kReturnLocal}};
}

}  // namespace

uint64_t RequiredMemory(const LayoutPlan& plan) {
  uint64_t top = 0;
  for (const Region& r : plan.regions) {
    if (r.space == AddressSpace::kData) top = std::max(top, r.range.top);
  }
  uint64_t size = uint64_t{1} << 16;
  while (size < top) size <<= 1;
  return size;
}

namespace {

FuzzReport FuzzShard(const LayoutPlan& original, const FuzzOptions& opts) {
  FuzzReport report;
  LayoutPlan plan = original;
  plan.memory_size = std::min(plan.memory_size, RequiredMemory(plan));
  absl::StatusOr<BootImage> booted = BootInit(plan);
  if (!booted.ok()) {
    report.violations = 1;
    report.examples.push_back(absl::StrCat("boot failed: ", booted.status().message()));
    return report;
  }
  BootImage img = *std::move(booted);
  if (opts.after_boot) opts.after_boot(img);
  const TaggedMemory pristine = img.memory;
  const std::vector<uint64_t> cursors = img.code_cursor;
  std::mt19937_64 rng(opts.seed);
  ProgramGenerator gen(plan, rng);
  std::vector<MachineState> entry;
  for (const CompartmentPlan& c : plan.compartments) {
    absl::StatusOr<MachineState> st = EnterCompartment(img, c.id);
    if (!st.ok()) {
      report.violations = 1;
      report.examples.push_back(std::string(st.status().message()));
      return report;
    }
    entry.push_back(*std::move(st));
  }

  auto violate = [&](std::string what) {
    ++report.violations;
    if (report.examples.size() < kMaxExamples) {
      report.examples.push_back(std::move(what));
    }
  };
  MachineHooks hooks;
  uint64_t program_index = 0;
  hooks.on_access = [&](const AccessEvent& e) {
    ++report.accesses;
    if (e.privileged) return;
    const Interval touched{e.addr, e.addr + e.len};
    if (e.compartment < 0 ||
        e.compartment >= static_cast<int>(plan.compartments.size())) {
      violate(absl::StrFormat("program %d: access at %#x with no compartment",
                              program_index, e.addr));
      return;
    }
    const Interval ddc = plan.compartments[e.compartment].ddc;
    auto in_exception_window = [&] {
      for (const SharedWindow& w : plan.shared) {
        if (w.mode == SharingMode::kException && w.range.Contains(touched) &&
            (w.first == e.compartment || w.second == e.compartment)) {
          return true;
        }
      }
      return false;
    };
    if (e.sealed_invoke) {
      ++report.switcher_entries;
      if (e.addr == plan.switcher_data.base && e.len == 64) return;
      // Return frames are minted only by the switcher, over whatever the
      // caller used as its stack. Invoking one is a return to that caller.
      for (const CompartmentPlan& c : plan.compartments) {
        if (c.ddc.Contains(touched)) return;
      }
      violate(absl::StrFormat("program %d: sealed invoke by %s read %#x+%d",
                              program_index,
                              plan.compartments[e.compartment].name, e.addr,
                              e.len));
      return;
    }
    if (!ddc.Contains(touched) && !in_exception_window()) {
      violate(absl::StrFormat("program %d: %s %s %#x+%d outside its DDC",
                              program_index,
                              plan.compartments[e.compartment].name,
                              e.write ? "wrote" : "read", e.addr, e.len));
    }
  };

  if (opts.on_step) {
    hooks.on_step = [&](const StepEvent& e) { opts.on_step(program_index, e); };
  }
  for (; program_index < opts.programs; ++program_index) {
    if (program_index % kResetInterval == 0) img.memory = pristine;
    // Every compartment exposes an honest body; one of them is the attacker.
    img.code_cursor = cursors;
    std::vector<uint64_t> bodies;
    for (const CompartmentPlan& c : plan.compartments) {
      absl::StatusOr<uint64_t> at = PlaceCode(img, c.id, HonestBody());
      if (!at.ok()) {
        violate(absl::StrCat("could not place program: ", at.status().message()));
        break;
      }
      bodies.push_back(*at);
    }
    if (bodies.size() != plan.compartments.size()) break;
    const int comp = static_cast<int>(rng() % plan.compartments.size());
    absl::StatusOr<uint64_t> start =
        PlaceCode(img, comp, gen.Generate(comp, opts.program_length, bodies));
    if (!start.ok()) {
      violate(absl::StrCat("could not place program: ", start.status().message()));
      break;
    }
    MachineState st = entry[comp];
    st.pcc.address = *start;
    uint64_t budget = opts.max_steps;
    while (budget > 0) {
      const RunResult r = Run(st, img.memory, img.program, budget, &hooks);
      report.steps += r.steps;
      budget -= std::min(budget, r.steps);
      if (r.reason != StopReason::kFault) break;
      ++report.faults[static_cast<size_t>(st.fault->kind)];
      budget -= std::min<uint64_t>(budget, 1);  // the faulting attempt
      // A faulting instruction has no effect; skip it and keep going, but
      // never resume inside the switcher.
      const bool fetchable = st.pc() >= st.pcc.base && Bound{st.pc()} < st.pcc.top &&
                             st.pc() < img.program.size();
      // Only the attacker's own faults are skipped. Honest code and the
      // switcher stop at their first fault.
      if (st.InPrivilegedCode() || st.current_compartment != comp ||
          st.ddc_restore_armed || !fetchable || budget == 0) {
        break;
      }
      st.fault.reset();
      ++st.pcc.address;
    }
  }
  report.programs = program_index;
  return report;
}

}  // namespace

FuzzReport FuzzIsolation(const LayoutPlan& plan, const FuzzOptions& opts) {
  if (opts.threads <= 1) return FuzzShard(plan, opts);
  const uint64_t shards = static_cast<uint64_t>(opts.threads);
  std::vector<FuzzReport> parts(shards);
  std::vector<std::thread> workers;
  for (uint64_t i = 0; i < shards; ++i) {
    FuzzOptions o = opts;
    o.threads = 1;
    o.on_step = nullptr;
    o.programs = opts.programs / shards + (i < opts.programs % shards ? 1 : 0);
    o.seed = opts.seed * shards + i;
    workers.emplace_back([&plan, o, &out = parts[i]] { out = FuzzShard(plan, o); });
  }
  for (std::thread& t : workers) t.join();
  FuzzReport merged;
  for (uint64_t i = 0; i < shards; ++i) {
    const FuzzReport& p = parts[i];
    merged.programs += p.programs;
    merged.steps += p.steps;
    merged.accesses += p.accesses;
    merged.switcher_entries += p.switcher_entries;
    merged.violations += p.violations;
    for (size_t k = 0; k < merged.faults.size(); ++k) merged.faults[k] += p.faults[k];
    for (const std::string& e : p.examples) {
      if (merged.examples.size() < kMaxExamples) {
        merged.examples.push_back(absl::StrCat("shard ", i, ": ", e));
      }
    }
  }
  return merged;
}

namespace {

PropertyResult CheckSwitcherUnreachable(const LayoutPlan& plan) {
  PropertyResult res{"switcher memory unreachable from compartments", true, ""};
  absl::StatusOr<BootImage> img = BootInit(plan);
  if (!img.ok()) return {res.name, false, std::string(img.status().message())};
  const std::vector<uint64_t> cursors = img->code_cursor;
  for (const CompartmentPlan& c : plan.compartments) {
    for (Address a = plan.switcher_data.base; a < plan.cap_table.top; a += 32) {
      img->code_cursor = cursors;
      MachineState st = *EnterCompartment(*img, c.id);
      Program p = {{Op::kLoadCapReg, 1, kNoReg, kNoReg, static_cast<int64_t>(a), 0},
                   {Op::kHalt}};
      st.pcc.address = *PlaceCode(*img, c.id, p);
      const RunResult r = Run(st, img->memory, img->program, 4);
      if (r.reason != StopReason::kFault) {
        return {res.name, false,
                absl::StrFormat("%s loaded switcher memory at %#x", c.name, a)};
      }
    }
  }
  return res;
}

PropertyResult CheckSealedEntries(const LayoutPlan& plan) {
  PropertyResult res{"one sealed switcher entry per compartment, no foreign capabilities", true, ""};
  absl::StatusOr<BootImage> img = BootInit(plan);
  if (!img.ok()) return {res.name, false, std::string(img.status().message())};
  for (const CompartmentPlan& c : plan.compartments) {
    int sealed = 0;
    for (Address a = c.ddc.base; a + 32 <= c.ddc.top; a += 16) {
      // Nested sandbox scratch belongs to the sandbox.
      bool nested = false;
      for (const CompartmentPlan& s : plan.compartments) {
        nested |= s.host && *s.host == c.id && s.span.Contains(a);
      }
      if (nested || !img->memory.TagAt(a)) continue;
      const Capability cap = *img->memory.LoadCap(a);
      if (cap.sealed()) {
        ++sealed;
        continue;
      }
      // Unsealed capabilities are fine as long as they grant nothing the
      // compartment does not already own, such as its exception window.
      const Interval range{cap.base, static_cast<Address>(cap.top)};
      bool owned = c.ddc.Contains(range);
      for (const SharedWindow& w : plan.shared) {
        owned |= w.range.Contains(range) && (w.first == c.id || w.second == c.id);
      }
      if (!owned) {
        return {res.name, false,
                absl::StrFormat("%s can reach foreign %s", c.name, cap.ToString())};
      }
    }
    if (sealed != 1) {
      return {res.name, false,
              absl::StrFormat("%s reaches %d sealed capabilities", c.name, sealed)};
    }
  }
  return res;
}

PropertyResult CheckRoundTrips(const LayoutPlan& plan) {
  PropertyResult res{"gate round trip restores caller state", true, ""};
  absl::StatusOr<BootImage> booted = BootInit(plan);
  if (!booted.ok()) {
    return {res.name, false, std::string(booted.status().message())};
  }
  BootImage& img = *booted;
  for (const CompartmentPlan& callee : plan.compartments) {
    const Program body = {{Op::kAdd, 0, 0, 1, 0, 0}, {Op::kReturnLocal}};
    absl::StatusOr<uint64_t> entry = PlaceCode(img, callee.id, body);
    if (!entry.ok()) return {res.name, false, std::string(entry.status().message())};
    for (const CompartmentPlan& caller : plan.compartments) {
      if (caller.id == callee.id || caller.host) continue;
      if (callee.host && *callee.host != caller.id) continue;
      MachineState st = *EnterCompartment(img, caller.id);
      for (int r = 0; r < kMaxArgs; ++r) st.regs[r] = Capability::Int(100 + r);
      const MachineState before = st;
      GateDescriptor g{caller.id, callee.id, *entry,
                       {GateArg::Imm(20), GateArg::Imm(22)},
                       ReturnDest::Register(9)};
      if (absl::Status s = GateCall(img, st, g); !s.ok()) {
        return {res.name, false,
                absl::StrFormat("%s -> %s: %s", caller.name, callee.name,
                                s.message())};
      }
      bool same = st.regs[9].address == 42 && st.ddc == before.ddc &&
                  st.current_compartment == before.current_compartment;
      for (int r = 0; r < kNumRegs; ++r) {
        if (r != 9) same &= st.regs[r] == before.regs[r];
      }
      if (!same) {
        return {res.name, false,
                absl::StrFormat("%s -> %s left state changed", caller.name,
                                callee.name)};
      }
    }
  }
  return res;
}

}  // namespace

std::vector<PropertyResult> VerifyLayout(const LayoutPlan& plan,
                                         const FuzzOptions& fuzz) {
  std::vector<PropertyResult> out;
  absl::Status audit = AuditLayout(plan);
  out.push_back({"region audit (disjoint, contiguous, switcher invisible)",
                 audit.ok(), std::string(audit.message())});
  out.push_back(CheckSwitcherUnreachable(plan));
  out.push_back(CheckSealedEntries(plan));
  out.push_back(CheckRoundTrips(plan));
  if (fuzz.programs > 0) {
    const FuzzReport r = FuzzIsolation(plan, fuzz);
    std::string detail = absl::StrFormat(
        "%d programs, %d steps, %d accesses, %d switcher entries, %d "
        "violations",
        r.programs, r.steps, r.accesses, r.switcher_entries, r.violations);
    for (const std::string& e : r.examples) absl::StrAppend(&detail, "\n  ", e);
    out.push_back({"isolation fuzz", r.violations == 0, detail});
  }
  return out;
}

}  // namespace capsim
