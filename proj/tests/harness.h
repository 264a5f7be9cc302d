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

#ifndef CAPSIM_TESTS_HARNESS_H_
#define CAPSIM_TESTS_HARNESS_H_

// Round-trip machinery: random nested call trees with a closed-form
// expected result, and a bit-exact state diff with explicit exclusions.

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "absl/strings/str_format.h"
#include "capsim/layout.h"
#include "capsim/machine.h"
#include "capsim/runtime.h"

namespace capsim::testing {

struct DiffExclusions {
  std::optional<uint8_t> ret_reg;
  std::optional<Address> ret_addr;  // 8 bytes
  std::vector<Interval> memory;     // callee-private and dead caller stack
};

inline std::vector<std::string> DiffRoundTrip(const MachineState& before,
                                              const TaggedMemory& mem_before,
                                              const MachineState& after,
                                              const TaggedMemory& mem_after,
                                              const DiffExclusions& ex) {
  std::vector<std::string> out;
  for (int r = 0; r < kNumRegs; ++r) {
    if (ex.ret_reg && *ex.ret_reg == r) continue;
    if (!(before.regs[r] == after.regs[r])) {
      out.push_back(absl::StrFormat("c%d: %s -> %s", r,
                                    before.regs[r].ToString(),
                                    after.regs[r].ToString()));
    }
  }
  if (!(before.ddc == after.ddc)) {
    out.push_back("ddc: " + before.ddc.ToString() + " -> " + after.ddc.ToString());
  }
  Capability pcc_a = before.pcc;
  Capability pcc_b = after.pcc;
  pcc_a.address = pcc_b.address = 0;
  if (!(pcc_a == pcc_b)) out.push_back("pcc bounds/perms changed");
  if (before.current_compartment != after.current_compartment) {
    out.push_back(absl::StrFormat("compartment %d -> %d",
                                  before.current_compartment,
                                  after.current_compartment));
  }
  if (after.fault) out.push_back("fault: " + after.fault->ToString());
  if (before.halted != after.halted) out.push_back("halted flag");
  if (before.ddc_restore_armed != after.ddc_restore_armed) {
    out.push_back("ddc restore latch");
  }
  auto excluded = [&](uint64_t a) {
    if (ex.ret_addr && a >= *ex.ret_addr && a < *ex.ret_addr + 8) return true;
    for (const Interval& iv : ex.memory) {
      if (iv.Contains(a)) return true;
    }
    return false;
  };
  const auto& ba = mem_before.bytes();
  const auto& bb = mem_after.bytes();
  for (uint64_t a = 0; a < ba.size(); ++a) {
    if (ba[a] != bb[a] && !excluded(a)) {
      out.push_back(absl::StrFormat("byte %#x: %#x -> %#x", a, ba[a], bb[a]));
      if (out.size() > 20) return out;
    }
  }
  for (uint64_t a = 0; a < ba.size(); a += TaggedMemory::kGranule) {
    if (mem_before.TagAt(a) != mem_after.TagAt(a) && !excluded(a)) {
      out.push_back(absl::StrFormat("tag %#x", a));
    }
  }
  return out;
}

// Random function bodies f(x) = x + k [+ g(x + k)] where g runs in another
// compartment through a nested gate.
class CallTreeBuilder {
 public:
  CallTreeBuilder(BootImage& img, std::mt19937_64& rng) : img_(img), rng_(rng) {}

  struct Function {
    uint64_t entry = 0;
    std::function<uint64_t(uint64_t)> eval;
  };

  // `comp` hosts the function; nested gates go to `partner`. Functions
  // only store into memory of compartments listed in `writable`.
  absl::StatusOr<Function> Build(int comp, int partner, int depth_left,
                                 bool may_write) {
    const uint64_t k = rng_() % 1000;
    Program body;
    body.push_back({Op::kAddImm, 0, 0, kNoReg, static_cast<int64_t>(k), 0});
    if (may_write) {
      const CompartmentPlan& c = img_.plan.compartments[comp];
      const uint64_t off = (rng_() % (c.heap.size() / 8)) * 8;
      body.push_back({Op::kStoreInt, kNoReg, kNoReg, 0,
                      static_cast<int64_t>(c.heap.base + off), 0});
    }
    std::function<uint64_t(uint64_t)> inner;
    if (depth_left > 0 && rng_() % 3 != 0) {
      absl::StatusOr<Function> g = Build(partner, comp, depth_left - 1,
                                         /*may_write=*/partner != root_);
      if (!g.ok()) return g.status();
      GateDescriptor gate;
      gate.caller = comp;
      gate.callee = partner;
      gate.entry = g->entry;
      gate.args = {GateArg::Reg(0), GateArg::Imm(rng_())};
      gate.ret = ReturnDest::Register(2);
      absl::StatusOr<GateCode> code = EmitGate(img_.plan, gate);
      if (!code.ok()) return code.status();
      body.insert(body.end(), code->code.begin(), code->code.end());
      body.push_back({Op::kAdd, 0, 0, 2, 0, 0});
      inner = g->eval;
    }
    body.push_back({Op::kReturnLocal, kNoReg, kNoReg, kNoReg, 0, 0});
    absl::StatusOr<uint64_t> entry = PlaceCode(img_, comp, body);
    if (!entry.ok()) return entry.status();
    Function f;
    f.entry = *entry;
    f.eval = [k, inner](uint64_t x) {
      const uint64_t y = x + k;
      return inner ? y + inner(y) : y;
    };
    ++functions_;
    return f;
  }

  void set_root(int root) { root_ = root; }
  int functions() const { return functions_; }

 private:
  BootImage& img_;
  std::mt19937_64& rng_;
  int root_ = 0;
  int functions_ = 0;
};

}  // namespace capsim::testing

#endif  // CAPSIM_TESTS_HARNESS_H_
