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

#include "capsim/runtime.h"

#include <algorithm>
#include <functional>
#include <string>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace capsim {
namespace {

Instruction Make(Op op, uint8_t rd = kNoReg, uint8_t rs1 = kNoReg,
                 uint8_t rs2 = kNoReg, int64_t imm = 0, uint8_t flags = 0) {
  return Instruction{op, rd, rs1, rs2, imm, flags};
}

int64_t Imm(uint64_t v) { return static_cast<int64_t>(v); }

Instruction Li(uint8_t rd, uint64_t v) {
  return Make(Op::kMoveImm, rd, kNoReg, kNoReg, Imm(v));
}
Instruction AddI(uint8_t rd, uint8_t rs, int64_t v) {
  return Make(Op::kAddImm, rd, rs, kNoReg, v);
}
Instruction Ld(uint8_t rd, uint8_t base, uint64_t off) {
  return Make(Op::kLoadInt, rd, base, kNoReg, Imm(off));
}
Instruction St(uint8_t src, uint8_t base, uint64_t off) {
  return Make(Op::kStoreInt, kNoReg, base, src, Imm(off));
}
Instruction Ldc(uint8_t rd, uint8_t base, uint64_t off, uint8_t flags = 0) {
  return Make(Op::kLoadCapReg, rd, base, kNoReg, Imm(off), flags);
}
Instruction Stc(uint8_t src, uint8_t base, uint64_t off) {
  return Make(Op::kStoreCapReg, kNoReg, base, src, Imm(off));
}

constexpr uint8_t kScratchA = 13;
constexpr uint8_t kScratchB = 14;
constexpr uint8_t kCalleePcc = 15;
constexpr uint8_t kSlotReg = 11;

absl::Status CheckCompartment(const LayoutPlan& plan, int id,
                              absl::string_view role) {
  if (id < 0 || id >= static_cast<int>(plan.compartments.size())) {
    return absl::InvalidArgumentError(
        absl::StrFormat("%s compartment %d does not exist", role, id));
  }
  return absl::OkStatus();
}

// Steps until `done` holds, failing on a fault, a halt, or `limit` steps.
absl::Status StepUntil(BootImage& img, MachineState& st,
                       const MachineHooks* hooks, uint64_t limit,
                       const std::function<bool(const MachineState&)>& done) {
  for (uint64_t i = 0; i < limit; ++i) {
    if (done(st)) return absl::OkStatus();
    Step(st, img.memory, img.program, hooks);
    if (st.fault) return FaultStatus(*st.fault);
    if (st.halted) return absl::InternalError("machine halted mid-protocol");
  }
  if (done(st)) return absl::OkStatus();
  return absl::DeadlineExceededError("protocol phase did not complete");
}

}  // namespace

Program EmitSwitcher(const LayoutPlan& plan) {
  Program p;
  // (1) Caller DDC still installed: push the return pair onto the caller
  // stack, record the caller's stack pointer, and seal a capability to the
  // pair.
  p.push_back(Make(Op::kReadDdc, kScratchA));
  p.push_back(AddI(kSp, kSp, -static_cast<int64_t>(kSwitchFrameBytes)));
  p.push_back(Stc(kLr, kSp, 0));
  p.push_back(Stc(kScratchA, kSp, 32));
  p.push_back(St(kSp, kSlotReg, 0));
  p.push_back(Make(Op::kSetAddress, kScratchB, kScratchA, kSp));
  p.push_back(Make(Op::kSetBounds, kScratchB, kScratchB, kNoReg,
                   Imm(kSwitchFrameBytes)));
  p.push_back(Make(Op::kRestrictPerms, kScratchB, kScratchB, kNoReg,
                   PermSet{Perm::kLoad, Perm::kLoadCap}.bits()));
  p.push_back(Make(Op::kSealReg, kSealedReg, kScratchB, kNoReg,
                   kReturnFrameOType));
  // (2) Switcher DDC.
  p.push_back(Make(Op::kInstallDdc, kNoReg, kPairDdcReg));
  // (3) Callee PCC/DDC from the capability table, and its saved-SP slot.
  p.push_back(Make(Op::kShlImm, kScratchB, kCalleeIdReg, kNoReg, 6));
  p.push_back(Make(Op::kLoadCapPair, kCalleePcc, kScratchB, kNoReg,
                   Imm(plan.cap_table.base), kRequireTag));
  p.push_back(Make(Op::kShlImm, kScratchA, kCalleeIdReg, kNoReg, 4));
  p.push_back(Ld(kScratchA, kScratchA, plan.sp_slots.base));
  p.push_back(Make(Op::kInstallDdc, kNoReg, kPairDdcReg));
  // (4) Callee stack, then scrub everything the callee must not see.
  p.push_back(Ld(kSp, kScratchA, 0));
  for (uint8_t r : {uint8_t{8}, kCalleeIdReg, kSlotReg, kScratchA, kScratchB,
                    kPairAddrReg}) {
    p.push_back(Li(r, 0));
  }
  for (uint8_t r = kSharedReg; r <= kLr; ++r) p.push_back(Li(r, 0));
  // (5) Leave through the callee PCC, which points at its trampoline.
  p.push_back(Make(Op::kBranchCap, kNoReg, kCalleePcc));
  p.resize(kSwitcherCodeSlots, Make(Op::kHalt));
  return p;
}

Program EmitTrampoline(const LayoutPlan& plan, int compartment) {
  const CompartmentPlan& c = plan.compartments[compartment];
  Program p;
  p.push_back(AddI(kSp, kSp, -static_cast<int64_t>(kTrampolineFrameBytes)));
  p.push_back(Stc(kSealedReg, kSp, 0));
  p.push_back(Ldc(kSharedReg, kNoReg, c.data.base + kExceptionCapOffset));
  p.push_back(Make(Op::kCallReg, kNoReg, kTargetReg));
  // Return half.
  p.push_back(Ldc(kSealedReg, kSp, 0, kRequireTag));
  p.push_back(AddI(kSp, kSp, static_cast<int64_t>(kTrampolineFrameBytes)));
  p.push_back(Make(Op::kLoadPairBranch, kNoReg, kSealedReg));
  p.resize(kTrampolineSlots, Make(Op::kHalt));
  return p;
}

absl::StatusOr<GateCode> EmitGate(const LayoutPlan& plan,
                                  const GateDescriptor& gate) {
  if (absl::Status s = CheckCompartment(plan, gate.caller, "caller"); !s.ok()) {
    return s;
  }
  if (absl::Status s = CheckCompartment(plan, gate.callee, "callee"); !s.ok()) {
    return s;
  }
  if (gate.caller == gate.callee) {
    return absl::InvalidArgumentError("gate caller and callee are the same");
  }
  if (gate.args.size() > kMaxArgs) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "gate passes %d arguments, at most %d fit in registers",
        gate.args.size(), kMaxArgs));
  }
  if (gate.ret.kind == ReturnDest::Kind::kRegister && gate.ret.reg >= kSp) {
    return absl::InvalidArgumentError("return register must be c0-c30");
  }
  const CompartmentPlan& caller = plan.compartments[gate.caller];
  const Address slot = caller.data.base + kSavedSpOffset;
  const Address sealed = caller.data.base + kSealedEntryOffset;

  GateCode out;
  Program& p = out.code;
  p.push_back(AddI(kSp, kSp, -static_cast<int64_t>(kGateSaveBytes)));
  for (uint8_t r = 0; r < 30; r += 2) {
    p.push_back(Make(Op::kStoreCapPair, kNoReg, kSp, r, Imm(32 * r)));
  }
  p.push_back(Stc(kLr, kSp, 32 * kLr));
  p.push_back(Ld(kSlotReg, kNoReg, slot));
  p.push_back(St(kSlotReg, kSp, kGateSavedSlotOffset));
  for (size_t i = 0; i < gate.args.size(); ++i) {
    const GateArg& a = gate.args[i];
    const uint8_t r = static_cast<uint8_t>(i);
    switch (a.kind) {
      case GateArg::Kind::kImm:
        p.push_back(Li(r, a.value));
        break;
      case GateArg::Kind::kReg:
        if (a.reg >= kSp) {
          return absl::InvalidArgumentError("argument register must be c0-c30");
        }
        p.push_back(Ldc(r, kSp, 32 * a.reg));
        break;
      case GateArg::Kind::kRegion:
        if (a.length == 0) {
          return absl::InvalidArgumentError("region argument has zero length");
        }
        p.push_back(Li(r, a.value));
        p.push_back(Make(Op::kReadDdc, kSlotReg));
        p.push_back(Make(Op::kSetAddress, r, kSlotReg, r));
        p.push_back(Make(Op::kSetBounds, r, r, kNoReg, Imm(a.length)));
        p.push_back(Make(Op::kRestrictPerms, r, r, kNoReg, a.perms.bits()));
        break;
    }
  }
  for (size_t i = gate.args.size(); i < kMaxArgs; ++i) {
    p.push_back(Li(static_cast<uint8_t>(i), 0));
  }
  p.push_back(Li(kCalleeIdReg, static_cast<uint64_t>(gate.callee)));
  p.push_back(Li(kTargetReg, gate.entry));
  p.push_back(Li(kSlotReg, slot));
  p.push_back(Ldc(kSealedReg, kNoReg, sealed));
  p.push_back(Make(Op::kLoadPairBranch, kNoReg, kSealedReg));
  out.prologue_size = p.size();

  // Epilogue: the trampoline's sealed invoke lands here with the caller's
  // DDC in c16 and the frame address in c17.
  p.push_back(Make(Op::kInstallDdc, kNoReg, kPairDdcReg));
  p.push_back(Make(Op::kMoveReg, kSp, kPairAddrReg));
  p.push_back(AddI(kSp, kSp, static_cast<int64_t>(kSwitchFrameBytes)));
  switch (gate.ret.kind) {
    case ReturnDest::Kind::kNone:
      break;
    case ReturnDest::Kind::kRegister:
      p.push_back(Stc(kRetReg, kSp, 32 * gate.ret.reg));
      break;
    case ReturnDest::Kind::kMemory:
      p.push_back(Li(kSlotReg, gate.ret.addr));
      p.push_back(St(kRetReg, kSlotReg, 0));
      break;
  }
  p.push_back(Ld(kSlotReg, kSp, kGateSavedSlotOffset));
  p.push_back(St(kSlotReg, kNoReg, slot));
  for (uint8_t r = 0; r < 30; r += 2) {
    p.push_back(Make(Op::kLoadCapPair, r, kSp, kNoReg, Imm(32 * r)));
  }
  p.push_back(Ldc(kLr, kSp, 32 * kLr));
  p.push_back(AddI(kSp, kSp, static_cast<int64_t>(kGateSaveBytes)));
  return out;
}

absl::StatusOr<GateSite> PrepareGate(BootImage& img, MachineState& st,
                                     const GateDescriptor& gate) {
  if (st.fault) {
    return absl::FailedPreconditionError("machine has a pending fault");
  }
  if (st.current_compartment != gate.caller) {
    return absl::FailedPreconditionError(absl::StrFormat(
        "gate from compartment %d issued while running in %d", gate.caller,
        st.current_compartment));
  }
  absl::StatusOr<GateCode> code = EmitGate(img.plan, gate);
  if (!code.ok()) return code.status();
  const Interval stub = img.plan.compartments[gate.caller].stub;
  if (code->code.size() + 1 > stub.size()) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "compartment %d has no room for a %d-slot call site", gate.caller,
        code->code.size() + 1));
  }
  std::copy(code->code.begin(), code->code.end(),
            img.program.begin() + static_cast<ptrdiff_t>(stub.base));
  GateSite site;
  site.entry = stub.base;
  site.epilogue = stub.base + code->prologue_size;
  site.end = stub.base + code->code.size();
  img.program[site.end] = Make(Op::kHalt);
  st.pcc.address = site.entry;
  st.halted = false;
  return site;
}

absl::Status GateCall(BootImage& img, MachineState& st,
                      const GateDescriptor& gate, const CallOptions& opts) {
  absl::StatusOr<GateSite> site = PrepareGate(img, st, gate);
  if (!site.ok()) return site.status();
  const RunResult r = Run(st, img.memory, img.program, opts.max_steps,
                          opts.hooks);
  switch (r.reason) {
    case StopReason::kFault:
      return FaultStatus(*st.fault);
    case StopReason::kMaxSteps:
      return absl::DeadlineExceededError(
          absl::StrFormat("call did not return within %d steps", opts.max_steps));
    case StopReason::kHalt:
      break;
  }
  if (st.pc() != site->end || st.current_compartment != gate.caller) {
    return absl::InternalError(
        absl::StrFormat("halted at pc %d before the call returned", st.pc()));
  }
  st.halted = false;
  return absl::OkStatus();
}

absl::Status SwitcherSwitch(BootImage& img, MachineState& st,
                            const MachineHooks* hooks) {
  if (!st.InPrivilegedCode()) {
    return absl::FailedPreconditionError("PCC is not in switcher code");
  }
  return StepUntil(img, st, hooks, kSwitcherCodeSlots,
                   [](const MachineState& s) { return !s.InPrivilegedCode(); });
}

absl::Status TrampolineEnter(BootImage& img, MachineState& st,
                             const MachineHooks* hooks) {
  if (absl::Status s = CheckCompartment(img.plan, st.current_compartment,
                                        "current");
      !s.ok()) {
    return s;
  }
  const uint64_t base = img.plan.compartments[st.current_compartment].code.base;
  if (st.pc() != base) {
    return absl::FailedPreconditionError("PCC is not at the trampoline entry");
  }
  return StepUntil(img, st, hooks, kTrampolineReturnOffset,
                   [&](const MachineState& s) {
                     return s.pc() != base && s.pc() >= base + kTrampolineSlots;
                   });
}

absl::Status TrampolineReturn(BootImage& img, MachineState& st,
                              const MachineHooks* hooks) {
  if (absl::Status s = CheckCompartment(img.plan, st.current_compartment,
                                        "current");
      !s.ok()) {
    return s;
  }
  const int callee = st.current_compartment;
  const uint64_t ret =
      img.plan.compartments[callee].code.base + kTrampolineReturnOffset;
  if (st.pc() != ret) {
    return absl::FailedPreconditionError(
        "PCC is not at the trampoline return half");
  }
  return StepUntil(img, st, hooks, kTrampolineSlots - kTrampolineReturnOffset,
                   [&](const MachineState& s) {
                     return s.current_compartment != callee;
                   });
}

absl::Status SandboxCall(BootImage& img, MachineState& st,
                         const SandboxSignature& sig,
                         std::span<const uint64_t> values, ReturnDest ret,
                         const CallOptions& opts) {
  if (absl::Status s = CheckCompartment(img.plan, sig.sandbox, "sandbox");
      !s.ok()) {
    return s;
  }
  const CompartmentPlan& sb = img.plan.compartments[sig.sandbox];
  if (!sb.host || *sb.host != sig.host) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "'%s' is not a sandbox hosted by compartment %d", sb.name, sig.host));
  }
  if (values.size() != sig.args.size()) {
    return absl::InvalidArgumentError(
        absl::StrFormat("signature takes %d arguments, got %d",
                        sig.args.size(), values.size()));
  }
  GateDescriptor gate;
  gate.caller = sig.host;
  gate.callee = sig.sandbox;
  gate.entry = sig.entry;
  gate.ret = ret;
  for (size_t i = 0; i < values.size(); ++i) {
    const SandboxArgSpec& a = sig.args[i];
    gate.args.push_back(a.kind == SandboxArgSpec::Kind::kScalar
                            ? GateArg::Imm(values[i])
                            : GateArg::Region(values[i], a.length, a.perms));
  }
  return GateCall(img, st, gate, opts);
}

absl::StatusOr<Address> PromoteShared(BootImage& img, int from, int to,
                                      uint64_t size) {
  for (const SharedWindow& w : img.plan.shared) {
    const bool pair = (w.first == from && w.second == to) ||
                      (w.first == to && w.second == from);
    if (!pair || w.mode != SharingMode::kOverlap) continue;
    absl::StatusOr<Address> a = SharedAlloc(img, w.name, size);
    if (!a.ok()) return a.status();
    ++img.promotions;
    return a;
  }
  return absl::FailedPreconditionError(absl::StrFormat(
      "ShareError: no overlap region between compartments %d and %d", from,
      to));
}

absl::Status FaultStatus(const Fault& fault) {
  return absl::AbortedError(fault.ToString());
}

}  // namespace capsim
