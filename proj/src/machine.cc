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

#include "capsim/machine.h"

#include <optional>
#include <string>

#include "absl/strings/str_format.h"

namespace capsim {
namespace {

constexpr PermSet kLoadPerms{Perm::kLoad};
constexpr PermSet kStorePerms{Perm::kStore};
constexpr PermSet kLoadCapPerms{Perm::kLoad, Perm::kLoadCap};
constexpr PermSet kStoreCapPerms{Perm::kStore, Perm::kStoreCap};

struct MemOperand {
  Capability auth;
  Address addr = 0;
  bool ddc_relative = false;
};

MemOperand Resolve(const MachineState& st, const Instruction& inst) {
  const Address base = inst.rs1 == kNoReg ? 0 : st.regs[inst.rs1].address;
  const Address addr = base + static_cast<uint64_t>(inst.imm);
  if (inst.flags & kViaCap) return {st.regs[inst.rs1], addr, false};
  return {st.ddc, addr, true};
}

// Integer results stay canonical: no stray base/top on an untagged value.
Capability WithAddress(const Capability& c, Address a) {
  if (!c.tag) return Capability::Int(a);
  return SetAddress(c, a);
}

// Carries out one instruction against a scratch copy of the architectural
// state; Step commits it only if no fault was raised.
class Executor {
 public:
  Executor(MachineState& st, TaggedMemory& mem, const MachineHooks* hooks)
      : st_(st), mem_(mem), hooks_(hooks), pc_(st.pcc.address) {}

  std::optional<Fault> fault;

  void Raise(FaultKind kind, Address addr, bool ddc_relative = false,
             uint64_t len = 0) {
    if (!fault) fault = Fault{kind, addr, pc_, ddc_relative, len};
  }

  bool Authorize(const MemOperand& m, uint64_t len, PermSet need) {
    if (std::optional<FaultKind> k = CheckAccess(m.auth, m.addr, len, need)) {
      Raise(*k, m.addr, m.ddc_relative, len);
      return false;
    }
    return true;
  }

  bool Aligned(const MemOperand& m) {
    if (m.addr % TaggedMemory::kGranule != 0) {
      Raise(FaultKind::kAlignment, m.addr, m.ddc_relative);
      return false;
    }
    return true;
  }

  void Observe(Address addr, uint64_t len, bool write, bool sealed_invoke) {
    if (hooks_ == nullptr || !hooks_->on_access) return;
    hooks_->on_access(AccessEvent{addr, len, write, sealed_invoke,
                                  st_.InPrivilegedCode(),
                                  st_.current_compartment});
  }

  std::optional<uint64_t> ReadU64(Address addr) {
    absl::StatusOr<uint64_t> v = mem_.ReadU64(addr);
    if (!v.ok()) {
      Raise(MemoryFaultKind(v.status()), addr);
      return std::nullopt;
    }
    return *v;
  }

  std::optional<Capability> ReadCap(Address addr) {
    absl::StatusOr<Capability> c = mem_.LoadCap(addr);
    if (!c.ok()) {
      Raise(MemoryFaultKind(c.status()), addr);
      return std::nullopt;
    }
    return *c;
  }

  // Memory writes happen last in an instruction, after every check, so a
  // failed write leaves memory untouched.
  bool WriteU64(Address addr, uint64_t v) {
    if (absl::Status s = mem_.WriteU64(addr, v); !s.ok()) {
      Raise(MemoryFaultKind(s), addr);
      return false;
    }
    return true;
  }

  bool CheckStoreRange(Address addr, uint64_t len) {
    if (addr > mem_.size() || len > mem_.size() - addr) {
      Raise(FaultKind::kAddress, addr);
      return false;
    }
    return true;
  }

  MachineState& st_;
  TaggedMemory& mem_;
  const MachineHooks* hooks_;
  const uint64_t pc_;
};

bool InvokeSealedImpl(MachineState& st, uint8_t reg, Executor& ex) {
  const Capability& sealed = st.regs[reg];
  if (!sealed.tag || !sealed.sealed() ||
      (sealed.otype != kSwitcherEntryOType &&
       sealed.otype != kReturnFrameOType)) {
    ex.Raise(FaultKind::kSeal, sealed.address);
    return false;
  }
  const Capability key = *Unseal(sealed);
  const MemOperand pair{key, key.address, false};
  if (!ex.Authorize(pair, 2 * TaggedMemory::kCapabilityBytes, kLoadCapPerms) ||
      !ex.Aligned(pair)) {
    return false;
  }
  std::optional<Capability> code = ex.ReadCap(key.address);
  std::optional<Capability> data =
      ex.ReadCap(key.address + TaggedMemory::kCapabilityBytes);
  if (!code || !data) return false;
  if (!code->tag || !data->tag) {
    ex.Raise(FaultKind::kTag, key.address);
    return false;
  }
  if (std::optional<FaultKind> k =
          CheckAccess(*code, code->address, 1, PermSet{Perm::kExecute})) {
    ex.Raise(*k, code->address);
    return false;
  }
  ex.Observe(key.address, 2 * TaggedMemory::kCapabilityBytes, false, true);

  Capability continuation = st.pcc;
  continuation.address = st.pcc.address + 1;
  st.regs[kLr] = continuation;
  st.regs[kPairDdcReg] = *data;
  st.regs[kPairAddrReg] = Capability::Int(key.address);
  st.pcc = *code;
  if (const int owner = st.OwnerOfCode(st.pcc.address);
      owner != kNoCompartment) {
    st.current_compartment = owner;
  }
  st.ddc_restore_armed = sealed.otype == kReturnFrameOType;
  if (st.classifier.NextIsHot()) {
    ++st.counters.switches_hot;
  } else {
    ++st.counters.switches_cold;
  }
  st.counters.memory_accesses += 2;
  return true;
}

void EmitStep(MachineState& st, const MachineHooks* hooks, uint64_t pc,
              const Instruction& inst) {
  if (hooks == nullptr || !hooks->on_step) return;
  hooks->on_step(StepEvent{st.counters.instructions_retired, pc, inst,
                           st.current_compartment, st.fault});
}

}  // namespace

std::string Fault::ToString() const {
  return absl::StrFormat("%s addr=%#x pc=%d", FaultKindName(kind), addr, pc);
}

bool SwitchClassifier::NextIsHot() {
  if (hot_fraction_ >= 1.0) return true;
  if (hot_fraction_ <= 0.0) return false;
  const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
  return u < hot_fraction_;
}

int MachineState::OwnerOfCode(uint64_t pc) const {
  int owner = kNoCompartment;
  uint64_t best = ~uint64_t{0};
  for (const CodeRange& r : code_owners) {
    if (pc >= r.base && pc < r.top && r.top - r.base < best) {
      best = r.top - r.base;
      owner = r.compartment;
    }
  }
  return owner;
}

void InvokeSealed(MachineState& st, TaggedMemory& mem, uint8_t sealed_reg,
                  const MachineHooks* hooks) {
  if (st.fault) return;
  Executor ex(st, mem, hooks);
  if (sealed_reg >= kNumRegs) {
    ex.Raise(FaultKind::kSeal, 0);
  } else {
    InvokeSealedImpl(st, sealed_reg, ex);
  }
  if (ex.fault) st.fault = ex.fault;
}

void Step(MachineState& st, TaggedMemory& mem, const Program& program,
          const MachineHooks* hooks) {
  if (st.fault || st.halted) return;
  const uint64_t pc = st.pcc.address;
  Executor ex(st, mem, hooks);

  if (std::optional<FaultKind> k =
          CheckAccess(st.pcc, pc, 1, PermSet{Perm::kExecute})) {
    st.fault = Fault{*k, pc, pc};
    EmitStep(st, hooks, pc, Instruction{});
    return;
  }
  if (pc >= program.size() || !IsWellFormed(program[pc])) {
    st.fault = Fault{FaultKind::kAddress, pc, pc};
    EmitStep(st, hooks, pc, Instruction{});
    return;
  }
  const Instruction& inst = program[pc];
  auto& r = st.regs;
  const bool armed = st.ddc_restore_armed;

  // Results are staged here and committed only on success.
  Capability new_pcc = st.pcc;
  new_pcc.address = pc + 1;
  bool pcc_replaced = false;
  std::optional<std::pair<uint8_t, Capability>> w1, w2;
  std::optional<Capability> new_ddc;
  bool halt = false;
  uint64_t accesses = 0;

  // Once a return frame has been unsealed the caller must take its own DDC
  // back before doing anything else; otherwise it would run on the callee's.
  if (armed && !(inst.op == Op::kInstallDdc && inst.rs1 == kPairDdcReg)) {
    ex.Raise(FaultKind::kPermission, pc);
  } else switch (inst.op) {
    case Op::kNop:
      break;
    case Op::kHalt:
      halt = true;
      new_pcc.address = pc;
      break;
    case Op::kMoveReg:
      w1 = {inst.rd, r[inst.rs1]};
      break;
    case Op::kMoveImm:
      w1 = {inst.rd, Capability::Int(static_cast<uint64_t>(inst.imm))};
      break;
    case Op::kAddImm:
      w1 = {inst.rd, WithAddress(r[inst.rs1], r[inst.rs1].address +
                                                  static_cast<uint64_t>(inst.imm))};
      break;
    case Op::kAdd:
      w1 = {inst.rd,
            WithAddress(r[inst.rs1], r[inst.rs1].address + r[inst.rs2].address)};
      break;
    case Op::kShlImm:
      w1 = {inst.rd, Capability::Int(inst.imm >= 64 || inst.imm < 0
                                         ? 0
                                         : r[inst.rs1].address << inst.imm)};
      break;
    case Op::kLoadInt: {
      const MemOperand m = Resolve(st, inst);
      if (!ex.Authorize(m, 8, kLoadPerms)) break;
      std::optional<uint64_t> v = ex.ReadU64(m.addr);
      if (!v) break;
      ex.Observe(m.addr, 8, false, false);
      w1 = {inst.rd, Capability::Int(*v)};
      accesses = 1;
      break;
    }
    case Op::kStoreInt: {
      const MemOperand m = Resolve(st, inst);
      if (!ex.Authorize(m, 8, kStorePerms) || !ex.CheckStoreRange(m.addr, 8)) {
        break;
      }
      ex.WriteU64(m.addr, r[inst.rs2].address);
      ex.Observe(m.addr, 8, true, false);
      accesses = 1;
      break;
    }
    case Op::kLoadCapReg:
    case Op::kLoadCapPair: {
      const bool pair = inst.op == Op::kLoadCapPair;
      const uint64_t len = TaggedMemory::kCapabilityBytes * (pair ? 2 : 1);
      const MemOperand m = Resolve(st, inst);
      if (!ex.Authorize(m, len, kLoadCapPerms) || !ex.Aligned(m)) break;
      std::optional<Capability> a = ex.ReadCap(m.addr);
      std::optional<Capability> b;
      if (pair && a) b = ex.ReadCap(m.addr + TaggedMemory::kCapabilityBytes);
      if (!a || (pair && !b)) break;
      if ((inst.flags & kRequireTag) && (!a->tag || (pair && !b->tag))) {
        ex.Raise(FaultKind::kTag, m.addr);
        break;
      }
      ex.Observe(m.addr, len, false, false);
      w1 = {inst.rd, *a};
      if (pair) w2 = {static_cast<uint8_t>(inst.rd + 1), *b};
      accesses = pair ? 2 : 1;
      break;
    }
    case Op::kStoreCapReg:
    case Op::kStoreCapPair: {
      const bool pair = inst.op == Op::kStoreCapPair;
      const uint64_t len = TaggedMemory::kCapabilityBytes * (pair ? 2 : 1);
      const Capability& a = r[inst.rs2];
      const Capability& b = pair ? r[inst.rs2 + 1] : a;
      const PermSet need = (a.tag || b.tag) ? kStoreCapPerms : kStorePerms;
      const MemOperand m = Resolve(st, inst);
      if (!ex.Authorize(m, len, need) || !ex.Aligned(m) ||
          !ex.CheckStoreRange(m.addr, len)) {
        break;
      }
      const Capability first = a;
      const Capability second = b;
      (void)mem.StoreCap(m.addr, first);
      if (pair) (void)mem.StoreCap(m.addr + TaggedMemory::kCapabilityBytes, second);
      ex.Observe(m.addr, len, true, false);
      accesses = pair ? 2 : 1;
      break;
    }
    case Op::kSetBounds: {
      const Capability& c = r[inst.rs1];
      const Bound top = inst.imm < 0 ? Bound{0} : Bound{c.address} + static_cast<uint64_t>(inst.imm);
      Capability out = SetBounds(c, c.address, top);
      if (inst.imm < 0) out.tag = false;
      w1 = {inst.rd, out};
      break;
    }
    case Op::kSetAddress:
      w1 = {inst.rd, WithAddress(r[inst.rs1], r[inst.rs2].address)};
      break;
    case Op::kRestrictPerms:
      w1 = {inst.rd, RestrictPerms(r[inst.rs1],
                                   PermSet(static_cast<uint8_t>(inst.imm)))};
      break;
    case Op::kSealReg:
      if (!st.InPrivilegedCode()) {
        ex.Raise(FaultKind::kPermission, pc);
        break;
      }
      w1 = {inst.rd, Seal(r[inst.rs1], static_cast<OType>(inst.imm))};
      break;
    case Op::kReadDdc:
      w1 = {inst.rd, st.ddc};
      break;
    case Op::kInstallDdc:
      if (!st.InPrivilegedCode() && !(armed && inst.rs1 == kPairDdcReg)) {
        ex.Raise(FaultKind::kPermission, pc);
        break;
      }
      new_ddc = r[inst.rs1];
      break;
    case Op::kReadCompartment:
      w1 = {inst.rd, Capability::Int(static_cast<uint64_t>(
                         static_cast<int64_t>(st.current_compartment)))};
      break;
    case Op::kBranchCap: {
      const Capability& target = r[inst.rs1];
      if (std::optional<FaultKind> k =
              CheckAccess(target, target.address, 1, PermSet{Perm::kExecute})) {
        ex.Raise(*k, target.address);
        break;
      }
      new_pcc = target;
      pcc_replaced = true;
      break;
    }
    case Op::kCallLocal:
      w1 = {kLr, Capability::Int(pc + 1)};
      new_pcc.address = static_cast<uint64_t>(inst.imm);
      break;
    case Op::kCallReg:
      w1 = {kLr, Capability::Int(pc + 1)};
      new_pcc.address = r[inst.rs1].address;
      break;
    case Op::kReturnLocal:
      new_pcc.address = r[kLr].address;
      break;
    case Op::kLoadPairBranch:
      if (InvokeSealedImpl(st, inst.rs1, ex)) {
        ++st.counters.instructions_retired;
        EmitStep(st, hooks, pc, inst);
        return;
      }
      break;
  }

  if (ex.fault) {
    st.fault = ex.fault;
    EmitStep(st, hooks, pc, inst);
    return;
  }
  if (w1) r[w1->first] = w1->second;
  if (w2) r[w2->first] = w2->second;
  if (new_ddc) st.ddc = *new_ddc;
  st.pcc = new_pcc;
  if (pcc_replaced) {
    if (const int owner = st.OwnerOfCode(st.pcc.address);
        owner != kNoCompartment) {
      st.current_compartment = owner;
    }
  }
  st.halted = halt;
  st.ddc_restore_armed = false;
  st.counters.memory_accesses += accesses;
  ++st.counters.instructions_retired;
  EmitStep(st, hooks, pc, inst);
}

bool HandleFaultDdcSwap(MachineState& st) {
  if (!st.exception_sharing || !st.fault ||
      st.fault->kind != FaultKind::kBounds || !st.fault->ddc_relative) {
    return false;
  }
  const Capability& shared = st.regs[kSharedReg];
  const uint64_t len = st.fault->len == 0 ? 1 : st.fault->len;
  if (CheckAccess(shared, st.fault->addr, len, PermSet{}).has_value()) {
    return false;
  }
  std::swap(st.ddc, st.regs[kSharedReg]);
  st.fault.reset();
  ++st.counters.ddc_swap_events;
  return true;
}

RunResult Run(MachineState& st, TaggedMemory& mem, const Program& program,
              uint64_t max_steps, const MachineHooks* hooks) {
  RunResult result;
  // A handled fault retries the same instruction, so bound attempts as well.
  for (uint64_t attempts = 0;
       result.steps < max_steps && attempts < 2 * max_steps; ++attempts) {
    if (st.halted) break;
    if (st.fault && !HandleFaultDdcSwap(st)) break;
    Step(st, mem, program, hooks);
    if (!st.fault) ++result.steps;
  }
  if (st.halted) {
    result.reason = StopReason::kHalt;
  } else if (st.fault) {
    result.reason = StopReason::kFault;
  } else {
    result.reason = StopReason::kMaxSteps;
  }
  return result;
}

std::string FormatTraceLine(const StepEvent& e) {
  return absl::StrFormat("%6d | %6d | %-14s | %2d | %s", e.index, e.pc,
                         OpName(e.inst.op), e.compartment,
                         e.fault ? e.fault->ToString() : "-");
}

}  // namespace capsim
