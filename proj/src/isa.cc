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

#include "capsim/isa.h"

#include <array>
#include <cerrno>
#include <cstdlib>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"

namespace capsim {
namespace {

// Operand pattern letters: d = rd, s = rs1, t = rs2, i = imm.
struct OpInfo {
  Op op;
  const char* name;
  const char* mnemonic;
  const char* operands;
  uint8_t allowed_flags;
};

constexpr std::array<OpInfo, kNumOps> kOps = {{
    {Op::kNop, "Nop", "nop", "", 0},
    {Op::kHalt, "Halt", "halt", "", 0},
    {Op::kMoveReg, "MoveReg", "mov", "ds", 0},
    {Op::kMoveImm, "MoveImm", "li", "di", 0},
    {Op::kAddImm, "AddImm", "addi", "dsi", 0},
    {Op::kAdd, "Add", "add", "dst", 0},
    {Op::kShlImm, "ShlImm", "shli", "dsi", 0},
    {Op::kLoadInt, "LoadInt", "ld", "dsi", kViaCap},
    {Op::kStoreInt, "StoreInt", "st", "tsi", kViaCap},
    {Op::kLoadCapReg, "LoadCapReg", "ldc", "dsi", kViaCap | kRequireTag},
    {Op::kStoreCapReg, "StoreCapReg", "stc", "tsi", kViaCap},
    {Op::kLoadCapPair, "LoadCapPair", "ldpc", "dsi", kViaCap | kRequireTag},
    {Op::kStoreCapPair, "StoreCapPair", "stpc", "tsi", kViaCap},
    {Op::kSetBounds, "SetBounds", "setbounds", "dsi", 0},
    {Op::kSetAddress, "SetAddress", "setaddr", "dst", 0},
    {Op::kRestrictPerms, "RestrictPerms", "andperm", "dsi", 0},
    {Op::kSealReg, "SealReg", "seal", "dsi", 0},
    {Op::kReadDdc, "ReadDDC", "rdddc", "d", 0},
    {Op::kInstallDdc, "InstallDDC", "instddc", "s", 0},
    {Op::kReadCompartment, "ReadCompartment", "rdcomp", "d", 0},
    {Op::kBranchCap, "BranchCap", "br", "s", 0},
    {Op::kCallLocal, "CallLocal", "call", "i", 0},
    {Op::kCallReg, "CallReg", "callr", "s", 0},
    {Op::kReturnLocal, "ReturnLocal", "ret", "", 0},
    {Op::kLoadPairBranch, "LoadPairBranch", "lpb", "s", 0},
}};

const OpInfo& Info(Op op) { return kOps[static_cast<int>(op)]; }

bool ValidReg(uint8_t r) { return r < kNumRegs; }

absl::StatusOr<uint8_t> ParseReg(absl::string_view tok, bool allow_none) {
  if (tok == "-") {
    if (allow_none) return kNoReg;
    return absl::InvalidArgumentError("'-' not allowed here");
  }
  if (tok == "sp") return kSp;
  if (tok == "lr") return kLr;
  if (tok == "fp") return kFp;
  int n = 0;
  if (tok.size() >= 2 && tok[0] == 'c' &&
      absl::SimpleAtoi(tok.substr(1), &n) && n >= 0 && n < kNumRegs) {
    return static_cast<uint8_t>(n);
  }
  return absl::InvalidArgumentError(absl::StrCat("bad register '", tok, "'"));
}

absl::StatusOr<int64_t> ParseImm(absl::string_view tok) {
  std::string s(tok);
  bool negative = false;
  if (!s.empty() && s[0] == '-') {
    negative = true;
    s.erase(0, 1);
  }
  if (s.empty()) return absl::InvalidArgumentError("empty immediate");
  errno = 0;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 0);
  if (errno != 0 || end != s.c_str() + s.size()) {
    return absl::InvalidArgumentError(absl::StrCat("bad immediate '", tok, "'"));
  }
  const int64_t value = static_cast<int64_t>(v);
  return negative ? -value : value;
}

std::string RegName(uint8_t r) {
  if (r == kNoReg) return "-";
  return absl::StrCat("c", r);
}

}  // namespace

const char* OpName(Op op) { return Info(op).name; }

bool IsMemoryOp(Op op) {
  switch (op) {
    case Op::kLoadInt:
    case Op::kStoreInt:
    case Op::kLoadCapReg:
    case Op::kStoreCapReg:
    case Op::kLoadCapPair:
    case Op::kStoreCapPair:
    case Op::kLoadPairBranch:
      return true;
    default:
      return false;
  }
}

bool IsPrivilegedOp(Op op) {
  return op == Op::kSealReg || op == Op::kInstallDdc;
}

bool IsWellFormed(const Instruction& inst) {
  if (static_cast<int>(inst.op) >= kNumOps) return false;
  const OpInfo& info = Info(inst.op);
  if ((inst.flags & ~info.allowed_flags) != 0) return false;
  const bool memory = IsMemoryOp(inst.op);
  const absl::string_view pattern = info.operands;
  auto uses = [&](char c) { return pattern.find(c) != absl::string_view::npos; };
  if (uses('d') ? !ValidReg(inst.rd) : inst.rd != kNoReg) return false;
  if (uses('t') ? !ValidReg(inst.rs2) : inst.rs2 != kNoReg) return false;
  if (!uses('i') && inst.imm != 0) return false;
  if (uses('s')) {
    if (!ValidReg(inst.rs1) && !(memory && inst.rs1 == kNoReg)) return false;
    if ((inst.flags & kViaCap) && inst.rs1 == kNoReg) return false;
  } else if (inst.rs1 != kNoReg) {
    return false;
  }
  if (inst.op == Op::kLoadCapPair && inst.rd + 1 >= kNumRegs) return false;
  if (inst.op == Op::kStoreCapPair && inst.rs2 + 1 >= kNumRegs) return false;
  return true;
}

absl::StatusOr<Program> Assemble(absl::string_view text) {
  Program program;
  int line_no = 0;
  for (absl::string_view raw : absl::StrSplit(text, '\n')) {
    ++line_no;
    absl::string_view line = raw.substr(0, raw.find('#'));
    line = absl::StripAsciiWhitespace(line);
    if (line.empty()) continue;
    std::vector<absl::string_view> toks =
        absl::StrSplit(line, absl::ByAnyChar(" \t,"), absl::SkipEmpty());
    auto error = [&](absl::string_view msg) {
      return absl::InvalidArgumentError(
          absl::StrFormat("line %d: %s", line_no, msg));
    };
    std::vector<absl::string_view> parts = absl::StrSplit(toks[0], '.');
    const OpInfo* info = nullptr;
    for (const OpInfo& candidate : kOps) {
      if (parts[0] == candidate.mnemonic) info = &candidate;
    }
    if (info == nullptr) {
      return error(absl::StrCat("unknown mnemonic '", parts[0], "'"));
    }
    Instruction inst;
    inst.op = info->op;
    for (size_t i = 1; i < parts.size(); ++i) {
      if (parts[i] == "cap") {
        inst.flags |= kViaCap;
      } else if (parts[i] == "tag") {
        inst.flags |= kRequireTag;
      } else {
        return error(absl::StrCat("unknown suffix '.", parts[i], "'"));
      }
    }
    const absl::string_view pattern = info->operands;
    if (toks.size() - 1 != pattern.size()) {
      return error(absl::StrFormat("%s expects %d operands, got %d",
                                   info->mnemonic, pattern.size(),
                                   toks.size() - 1));
    }
    const bool memory = IsMemoryOp(info->op);
    for (size_t i = 0; i < pattern.size(); ++i) {
      const absl::string_view tok = toks[i + 1];
      absl::Status st;
      switch (pattern[i]) {
        case 'd':
        case 't':
        case 's': {
          absl::StatusOr<uint8_t> r = ParseReg(tok, memory && pattern[i] == 's');
          if (!r.ok()) return error(r.status().message());
          (pattern[i] == 'd' ? inst.rd : pattern[i] == 's' ? inst.rs1 : inst.rs2) = *r;
          break;
        }
        case 'i': {
          absl::StatusOr<int64_t> v = ParseImm(tok);
          if (!v.ok()) return error(v.status().message());
          inst.imm = *v;
          break;
        }
      }
    }
    if (!IsWellFormed(inst)) return error("malformed instruction");
    program.push_back(inst);
  }
  return program;
}

std::string Disassemble(const Instruction& inst) {
  const OpInfo& info = Info(inst.op);
  std::string out = info.mnemonic;
  if (inst.flags & kViaCap) out += ".cap";
  if (inst.flags & kRequireTag) out += ".tag";
  std::vector<std::string> operands;
  for (char c : absl::string_view(info.operands)) {
    switch (c) {
      case 'd':
        operands.push_back(RegName(inst.rd));
        break;
      case 's':
        operands.push_back(RegName(inst.rs1));
        break;
      case 't':
        operands.push_back(RegName(inst.rs2));
        break;
      case 'i':
        operands.push_back(inst.imm < 0 ? absl::StrCat(inst.imm)
                                        : absl::StrFormat("%#x", inst.imm));
        break;
    }
  }
  if (!operands.empty()) absl::StrAppend(&out, " ", absl::StrJoin(operands, ", "));
  return out;
}

std::string Disassemble(const Program& program) {
  std::string out;
  for (const Instruction& inst : program) absl::StrAppend(&out, Disassemble(inst), "\n");
  return out;
}

}  // namespace capsim
