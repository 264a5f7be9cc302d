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

#ifndef CAPSIM_ISA_H_
#define CAPSIM_ISA_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"

namespace capsim {

inline constexpr int kNumRegs = 32;
inline constexpr uint8_t kNoReg = 0xff;

// Register roles. Integers live in registers as untagged capabilities.
inline constexpr uint8_t kRetReg = 0;
inline constexpr uint8_t kMaxArgs = 8;
inline constexpr uint8_t kCalleeIdReg = 9;
inline constexpr uint8_t kTargetReg = 10;
inline constexpr uint8_t kSealedReg = 12;
inline constexpr uint8_t kPairDdcReg = 16;
inline constexpr uint8_t kPairAddrReg = 17;
inline constexpr uint8_t kSharedReg = 18;
inline constexpr uint8_t kFp = 29;
inline constexpr uint8_t kLr = 30;
inline constexpr uint8_t kSp = 31;

enum class Op : uint8_t {
  kNop,
  kHalt,
  kMoveReg,
  kMoveImm,
  kAddImm,
  kAdd,
  kShlImm,
  kLoadInt,
  kStoreInt,
  kLoadCapReg,
  kStoreCapReg,
  kLoadCapPair,
  kStoreCapPair,
  kSetBounds,
  kSetAddress,
  kRestrictPerms,
  kSealReg,
  kReadDdc,
  kInstallDdc,
  kReadCompartment,
  kBranchCap,
  kCallLocal,
  kCallReg,
  kReturnLocal,
  kLoadPairBranch,
};

inline constexpr int kNumOps = static_cast<int>(Op::kLoadPairBranch) + 1;

// Instruction flag bits.
inline constexpr uint8_t kViaCap = 1 << 0;      // authorize with rs1, not DDC
inline constexpr uint8_t kRequireTag = 1 << 1;  // capability load must be tagged

// Memory operands address regs[rs1].address + imm, or just imm when rs1 is
// kNoReg. Loads write rd (and rd+1 for pairs); stores read rs2 (and rs2+1).
struct Instruction {
  Op op = Op::kNop;
  uint8_t rd = kNoReg;
  uint8_t rs1 = kNoReg;
  uint8_t rs2 = kNoReg;
  int64_t imm = 0;
  uint8_t flags = 0;

  bool operator==(const Instruction&) const = default;
};

using Program = std::vector<Instruction>;

const char* OpName(Op op);
bool IsMemoryOp(Op op);
bool IsPrivilegedOp(Op op);
// Register operands in range and pair operands not running off the file.
bool IsWellFormed(const Instruction& inst);

// Textual micro-program format, one instruction per line:
//   li c1, 0x40          ld c2, c1, 8         ldc.cap.tag c3, c4, 0
//   st c2, -, 0x100      setbounds c5, c5, 64 lpb c12
// `-` stands for "no base register". `#` starts a comment.
absl::StatusOr<Program> Assemble(absl::string_view text);
std::string Disassemble(const Instruction& inst);
std::string Disassemble(const Program& program);

}  // namespace capsim

#endif  // CAPSIM_ISA_H_
