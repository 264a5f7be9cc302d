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

#include <algorithm>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"
#include "capsim/layout.h"
#include "capsim/runtime.h"

namespace capsim {
namespace {

absl::Status StoreRoot(TaggedMemory& mem, Address at, Interval range,
                       PermSet perms, Address cursor) {
  absl::StatusOr<Capability> c = MakeRoot(range.base, range.top, perms);
  if (!c.ok()) return c.status();
  c->address = cursor;
  return mem.StoreCap(at, *c);
}

absl::StatusOr<Address> Bump(uint64_t& cursor, Interval range, uint64_t size,
                             absl::string_view what) {
  if (size == 0) return absl::InvalidArgumentError("allocation of zero bytes");
  const uint64_t rounded =
      (size + TaggedMemory::kGranule - 1) & ~(TaggedMemory::kGranule - 1);
  if (rounded < size || rounded > range.top - cursor) {
    return absl::ResourceExhaustedError(absl::StrFormat(
        "AllocError: %d bytes do not fit in %s (%d left)", size, what,
        range.top - cursor));
  }
  const Address out = cursor;
  cursor += rounded;
  return out;
}

}  // namespace

absl::StatusOr<BootImage> BootInit(const LayoutPlan& plan) {
  absl::StatusOr<TaggedMemory> mem = TaggedMemory::Create(plan.memory_size);
  if (!mem.ok()) return mem.status();
  uint64_t code_top = plan.switcher_code.top;
  for (const Region& r : plan.regions) {
    if (r.space == AddressSpace::kCode) {
      code_top = std::max(code_top, r.range.top);
    } else if (r.range.top > plan.memory_size) {
      return absl::InvalidArgumentError(absl::StrFormat(
          "region %s ends at %#x beyond memory size %#x", r.name, r.range.top,
          plan.memory_size));
    }
  }

  BootImage img{plan, *std::move(mem), {}, {}, {}, {}, {}, 0};
  TaggedMemory& m = img.memory;
  img.program.assign(code_top, Instruction{Op::kHalt});
  const Program sw = EmitSwitcher(plan);
  std::copy(sw.begin(), sw.end(), img.program.begin() + plan.switcher_code.base);

  // The switcher's own pair, reachable only through sealed entries.
  const Address pair = plan.switcher_data.base;
  if (absl::Status s = StoreRoot(m, pair, plan.switcher_code, kPccPerms,
                                 plan.switcher_code.base);
      !s.ok()) {
    return s;
  }
  if (absl::Status s = StoreRoot(
          m, pair + TaggedMemory::kCapabilityBytes,
          {plan.switcher_data.base, plan.cap_table.top}, kDdcPerms,
          plan.switcher_data.base);
      !s.ok()) {
    return s;
  }
  absl::StatusOr<Capability> entry =
      MakeRoot(pair, Bound{pair} + 2 * TaggedMemory::kCapabilityBytes,
               kSealedEntryPerms);
  if (!entry.ok()) return entry.status();
  const Capability sealed_entry = Seal(*entry, kSwitcherEntryOType);

  for (const CompartmentPlan& c : plan.compartments) {
    const Program tramp = EmitTrampoline(plan, c.id);
    std::copy(tramp.begin(), tramp.end(), img.program.begin() + c.code.base);
    const Address row = plan.cap_table.base + kCapTableEntryBytes * c.id;
    if (absl::Status s = StoreRoot(m, row, c.code, kPccPerms, c.code.base);
        !s.ok()) {
      return s;
    }
    if (absl::Status s = StoreRoot(m, row + TaggedMemory::kCapabilityBytes,
                                   c.ddc, kDdcPerms, c.ddc.base);
        !s.ok()) {
      return s;
    }
    const Address slot = img.SavedSpAddress(c.id);
    if (absl::Status s = m.WriteU64(
            plan.sp_slots.base + TaggedMemory::kGranule * c.id, slot);
        !s.ok()) {
      return s;
    }
    if (absl::Status s = m.WriteU64(slot, c.stack.top); !s.ok()) return s;
    if (absl::Status s = m.StoreCap(img.SealedEntryAddress(c.id), sealed_entry);
        !s.ok()) {
      return s;
    }
    for (const SharedWindow& w : plan.shared) {
      if (w.mode != SharingMode::kException ||
          (w.first != c.id && w.second != c.id)) {
        continue;
      }
      if (absl::Status s = StoreRoot(m, img.ExceptionCapAddress(c.id), w.range,
                                     kDdcPerms, w.range.base);
          !s.ok()) {
        return s;
      }
    }
    img.code_cursor.push_back(c.code_free.base);
    img.heap_cursor.push_back(c.heap.base);
  }
  for (const SharedWindow& w : plan.shared) {
    img.shared_cursor.push_back(w.range.base);
  }

  absl::StatusOr<MachineState> st = EnterCompartment(img, plan.default_compartment());
  if (!st.ok()) return st.status();
  img.state = *std::move(st);
  return img;
}

absl::StatusOr<MachineState> EnterCompartment(const BootImage& img, int id) {
  const LayoutPlan& plan = img.plan;
  if (id < 0 || id >= static_cast<int>(plan.compartments.size())) {
    return absl::InvalidArgumentError(
        absl::StrFormat("compartment %d does not exist", id));
  }
  const CompartmentPlan& c = plan.compartments[id];
  MachineState st;
  absl::StatusOr<Capability> pcc = MakeRoot(c.code.base, c.code.top, kPccPerms);
  absl::StatusOr<Capability> ddc = MakeRoot(c.ddc.base, c.ddc.top, kDdcPerms);
  if (!pcc.ok()) return pcc.status();
  if (!ddc.ok()) return ddc.status();
  st.pcc = *pcc;
  st.pcc.address = c.code_free.base;
  st.ddc = *ddc;
  absl::StatusOr<uint64_t> sp = img.memory.ReadU64(img.SavedSpAddress(id));
  if (!sp.ok()) return sp.status();
  st.regs[kSp] = Capability::Int(*sp);
  absl::StatusOr<Capability> shared = img.memory.LoadCap(img.ExceptionCapAddress(id));
  if (!shared.ok()) return shared.status();
  st.regs[kSharedReg] = *shared;
  st.current_compartment = id;
  st.privileged_code_base = plan.switcher_code.base;
  st.privileged_code_top = plan.switcher_code.top;
  for (const CompartmentPlan& cp : plan.compartments) {
    st.code_owners.push_back({cp.code.base, cp.code.top, cp.id});
  }
  st.exception_sharing = std::any_of(
      plan.shared.begin(), plan.shared.end(),
      [](const SharedWindow& w) { return w.mode == SharingMode::kException; });
  return st;
}

absl::StatusOr<Address> SharedAlloc(BootImage& img, absl::string_view region,
                                    uint64_t size) {
  for (size_t i = 0; i < img.plan.shared.size(); ++i) {
    if (img.plan.shared[i].name == region) {
      return Bump(img.shared_cursor[i], img.plan.shared[i].range, size,
                  absl::StrCat("shared region ", region));
    }
  }
  return absl::NotFoundError(absl::StrCat("no shared region named ", region));
}

absl::StatusOr<Address> CompAlloc(BootImage& img, int compartment,
                                  uint64_t size) {
  if (compartment < 0 ||
      compartment >= static_cast<int>(img.plan.compartments.size())) {
    return absl::InvalidArgumentError(
        absl::StrFormat("compartment %d does not exist", compartment));
  }
  const CompartmentPlan& c = img.plan.compartments[compartment];
  return Bump(img.heap_cursor[compartment], c.heap, size,
              absl::StrCat(c.name, " heap"));
}

absl::StatusOr<uint64_t> PlaceCode(BootImage& img, int compartment,
                                   const Program& code) {
  if (compartment < 0 ||
      compartment >= static_cast<int>(img.plan.compartments.size())) {
    return absl::InvalidArgumentError(
        absl::StrFormat("compartment %d does not exist", compartment));
  }
  const CompartmentPlan& c = img.plan.compartments[compartment];
  uint64_t& cursor = img.code_cursor[compartment];
  if (code.empty() || code.size() > c.code_free.top - cursor) {
    return absl::ResourceExhaustedError(absl::StrFormat(
        "AllocError: %d instructions do not fit in %s code (%d left)",
        code.size(), c.name, c.code_free.top - cursor));
  }
  const uint64_t entry = cursor;
  std::copy(code.begin(), code.end(), img.program.begin() + entry);
  cursor += code.size();
  return entry;
}

}  // namespace capsim
