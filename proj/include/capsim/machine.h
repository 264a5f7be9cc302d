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

#ifndef CAPSIM_MACHINE_H_
#define CAPSIM_MACHINE_H_

// A small capability register machine. Legacy (DDC-relative) accesses are
// checked against DDC, capability-operand accesses against the operand, and
// every fetch against PCC. Instructions live outside byte memory and PCC
// bounds are instruction indices.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "capsim/capability.h"
#include "capsim/isa.h"
#include "capsim/tagged_memory.h"

namespace capsim {

// Seal types used by the switching protocol.
inline constexpr OType kSwitcherEntryOType = 1;
inline constexpr OType kReturnFrameOType = 2;

inline constexpr int kNoCompartment = -1;

struct Fault {
  FaultKind kind = FaultKind::kTag;
  Address addr = 0;
  uint64_t pc = 0;
  // Set when the faulting access was a legacy access checked against DDC.
  bool ddc_relative = false;
  uint64_t len = 0;

  bool operator==(const Fault&) const = default;
  std::string ToString() const;
};

struct Counters {
  uint64_t instructions_retired = 0;
  uint64_t memory_accesses = 0;
  uint64_t switches_hot = 0;
  uint64_t switches_cold = 0;
  uint64_t ddc_swap_events = 0;

  uint64_t switches() const { return switches_hot + switches_cold; }
  bool operator==(const Counters&) const = default;
};

// A code range in instruction-index space owned by one compartment.
struct CodeRange {
  uint64_t base = 0;
  uint64_t top = 0;
  int compartment = kNoCompartment;
};

// Decides whether each domain transition is served hot or cold.
class SwitchClassifier {
 public:
  SwitchClassifier() : SwitchClassifier(1.0, 0) {}
  explicit SwitchClassifier(double hot_fraction, uint64_t seed = 0)
      : hot_fraction_(hot_fraction), rng_(seed) {}
  bool NextIsHot();

 private:
  double hot_fraction_;
  std::mt19937_64 rng_;
};

struct MachineState {
  std::array<Capability, kNumRegs> regs{};
  Capability ddc;
  Capability pcc;
  int current_compartment = kNoCompartment;
  std::optional<Fault> fault;
  bool halted = false;
  Counters counters;

  // Fixed at boot.
  uint64_t privileged_code_base = 0;
  uint64_t privileged_code_top = 0;
  std::vector<CodeRange> code_owners;
  bool exception_sharing = false;
  SwitchClassifier classifier;

  // Armed by unsealing a return frame. The very next instruction must be an
  // InstallDDC from kPairDdcReg; anything else faults and leaves it armed.
  bool ddc_restore_armed = false;

  uint64_t pc() const { return pcc.address; }
  bool InPrivilegedCode() const {
    return pcc.address >= privileged_code_base &&
           pcc.address < privileged_code_top;
  }
  // Innermost compartment whose code contains `pc`, or kNoCompartment.
  int OwnerOfCode(uint64_t pc) const;
};

struct AccessEvent {
  Address addr = 0;
  uint64_t len = 0;
  bool write = false;
  // Pair loads performed while invoking a sealed capability.
  bool sealed_invoke = false;
  bool privileged = false;
  int compartment = kNoCompartment;
};

struct StepEvent {
  uint64_t index = 0;
  uint64_t pc = 0;
  Instruction inst;
  int compartment = kNoCompartment;
  std::optional<Fault> fault;
};

struct MachineHooks {
  std::function<void(const AccessEvent&)> on_access;
  std::function<void(const StepEvent&)> on_step;
};

// Executes one instruction. A faulting step changes nothing but st.fault.
void Step(MachineState& st, TaggedMemory& mem, const Program& program,
          const MachineHooks* hooks = nullptr);

// Unseals regs[sealed_reg], loads the (PCC, DDC) pair it designates and
// branches to the PCC. The loaded DDC lands in kPairDdcReg, the pair
// address in kPairAddrReg and the caller continuation in kLr. DDC itself is
// left untouched. Counts one domain transition.
void InvokeSealed(MachineState& st, TaggedMemory& mem, uint8_t sealed_reg,
                  const MachineHooks* hooks = nullptr);

// Exception-based sharing: on a DDC bounds fault whose range lies inside
// regs[kSharedReg], swap DDC and that register and clear the fault.
bool HandleFaultDdcSwap(MachineState& st);

enum class StopReason { kHalt, kFault, kMaxSteps };

struct RunResult {
  StopReason reason = StopReason::kMaxSteps;
  uint64_t steps = 0;
};

RunResult Run(MachineState& st, TaggedMemory& mem, const Program& program,
              uint64_t max_steps, const MachineHooks* hooks = nullptr);

// "idx | pc | op | compartment | fault?" line for a step.
std::string FormatTraceLine(const StepEvent& event);

}  // namespace capsim

#endif  // CAPSIM_MACHINE_H_
