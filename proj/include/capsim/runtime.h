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

#ifndef CAPSIM_RUNTIME_H_
#define CAPSIM_RUNTIME_H_

// Cross-compartment calls. A gate is emitted inline at the call site and
// enters the switcher through the caller's sealed entry capability. The
// switcher seals a return frame on the caller stack, swaps to the callee's
// PCC/DDC and stack, and leaves through the callee's trampoline. Returns go
// trampoline -> caller gate epilogue without passing through the switcher.
//
// Register conventions: c0-c7 arguments, c0 return value, c9 callee id,
// c10 callee entry, c11 address of the caller's saved-SP slot, c12 sealed
// capability. After a sealed invoke c16 holds the loaded DDC and c17 the
// address of the unsealed pair.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "capsim/capability.h"
#include "capsim/isa.h"
#include "capsim/layout.h"
#include "capsim/machine.h"
#include "capsim/tagged_memory.h"

namespace capsim {

// Offset of the return half within each trampoline.
inline constexpr uint64_t kTrampolineReturnOffset = 4;
// Caller save area pushed by the gate: c0-c30 plus the saved-SP slot value.
inline constexpr uint64_t kGateSaveBytes = 31 * 32 + 16;
inline constexpr uint64_t kGateSavedSlotOffset = 31 * 32;
inline constexpr uint64_t kSwitchFrameBytes = 64;
inline constexpr uint64_t kTrampolineFrameBytes = 32;

Program EmitSwitcher(const LayoutPlan& plan);
Program EmitTrampoline(const LayoutPlan& plan, int compartment);

struct ReturnDest {
  enum class Kind { kNone, kRegister, kMemory };
  Kind kind = Kind::kNone;
  uint8_t reg = 0;
  Address addr = 0;  // DDC-relative, in the caller

  static ReturnDest None() { return {}; }
  static ReturnDest Register(uint8_t r) { return {Kind::kRegister, r, 0}; }
  static ReturnDest Memory(Address a) { return {Kind::kMemory, 0, a}; }
};

struct GateArg {
  enum class Kind { kImm, kReg, kRegion };
  Kind kind = Kind::kImm;
  uint64_t value = 0;  // immediate, or region base for kRegion
  uint8_t reg = 0;     // caller register for kReg
  uint64_t length = 0;
  PermSet perms;

  static GateArg Imm(uint64_t v) { return {Kind::kImm, v, 0, 0, {}}; }
  static GateArg Reg(uint8_t r) { return {Kind::kReg, 0, r, 0, {}}; }
  // A capability derived from the caller's DDC bounded to [base, base+len).
  static GateArg Region(Address base, uint64_t len, PermSet perms) {
    return {Kind::kRegion, base, 0, len, perms};
  }
};

struct GateDescriptor {
  int caller = 0;
  int callee = 0;
  uint64_t entry = 0;  // instruction index inside the callee
  std::vector<GateArg> args;
  ReturnDest ret;
};

struct GateCode {
  Program code;
  // code[0, prologue_size) runs up to and including the sealed invoke; the
  // rest is the epilogue the callee's trampoline returns into.
  uint64_t prologue_size = 0;
};

absl::StatusOr<GateCode> EmitGate(const LayoutPlan& plan,
                                  const GateDescriptor& gate);

struct CallOptions {
  uint64_t max_steps = 1'000'000;
  const MachineHooks* hooks = nullptr;
};

// Where a prepared call-site stub sits in the instruction space.
struct GateSite {
  uint64_t entry = 0;
  uint64_t epilogue = 0;
  uint64_t end = 0;  // index of the trailing halt
};

// Writes the gate for `gate` into the caller's stub area and points PCC at
// it. The caller then drives the machine.
absl::StatusOr<GateSite> PrepareGate(BootImage& img, MachineState& st,
                                     const GateDescriptor& gate);

// Runs a full cross-compartment call: gate prologue, switcher, trampoline,
// callee, trampoline return, gate epilogue. On a fault st.fault stays set and
// the returned status carries its kind.
absl::Status GateCall(BootImage& img, MachineState& st,
                      const GateDescriptor& gate, const CallOptions& opts = {});

// Step-level entry points for the individual protocol phases. Each runs the
// machine until the phase hands control on and fails if it faults.
absl::Status SwitcherSwitch(BootImage& img, MachineState& st,
                            const MachineHooks* hooks = nullptr);
// Expects PCC at the current compartment's trampoline; stops at the target.
absl::Status TrampolineEnter(BootImage& img, MachineState& st,
                             const MachineHooks* hooks = nullptr);
// Expects PCC at the trampoline's return half; stops in the caller's gate
// epilogue.
absl::Status TrampolineReturn(BootImage& img, MachineState& st,
                              const MachineHooks* hooks = nullptr);

struct SandboxArgSpec {
  enum class Kind { kScalar, kRegion };
  Kind kind = Kind::kScalar;
  uint64_t length = 0;
  PermSet perms;
};

struct SandboxSignature {
  uint64_t entry = 0;
  int host = 0;
  int sandbox = 0;
  std::vector<SandboxArgSpec> args;
};

// `values` holds each scalar, or the base address of each region argument.
absl::Status SandboxCall(BootImage& img, MachineState& st,
                         const SandboxSignature& sig,
                         std::span<const uint64_t> values,
                         ReturnDest ret = ReturnDest::None(),
                         const CallOptions& opts = {});

// Moves a variable that `from` wants to pass by reference to `to` into their
// overlap window. Counts one promotion.
absl::StatusOr<Address> PromoteShared(BootImage& img, int from, int to,
                                      uint64_t size);

// absl::Status view of a machine fault, prefixed with the fault kind name.
absl::Status FaultStatus(const Fault& fault);

}  // namespace capsim

#endif  // CAPSIM_RUNTIME_H_
