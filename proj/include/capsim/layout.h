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

#ifndef CAPSIM_LAYOUT_H_
#define CAPSIM_LAYOUT_H_

// Static single-address-space planning: parses the compartment description,
// places every region, and boots a machine image with the capability table
// and sealed switcher entries in place.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "capsim/capability.h"
#include "capsim/isa.h"
#include "capsim/machine.h"
#include "capsim/tagged_memory.h"

namespace capsim {

enum class SharingMode { kOverlap, kException };

struct CompartmentDecl {
  std::string name;
  uint64_t code = 0;  // instruction slots
  uint64_t data = 0;
  uint64_t stack = 0;
  uint64_t heap = 0;
  int line = 0;
};

struct SharedDecl {
  std::string name;
  uint64_t size = 0;
  std::string first;
  std::string second;
  SharingMode mode = SharingMode::kOverlap;
  int line = 0;
};

struct SandboxDecl {
  std::string function;
  std::string host;
  int line = 0;
};

struct CompartmentConfig {
  std::vector<CompartmentDecl> compartments;
  std::vector<SharedDecl> shared;
  std::vector<SandboxDecl> sandboxes;
};

// Line-oriented format:
//   compartment <name> code=<n> data=<n> stack=<n> heap=<n>
//   shared <name> size=<n> between <a>,<b> [mode=overlap|exception]
//   sandbox <function> host=<compartment>
absl::StatusOr<CompartmentConfig> ParseConfig(absl::string_view text);

// Half-open interval [base, top).
struct Interval {
  uint64_t base = 0;
  uint64_t top = 0;

  uint64_t size() const { return top - base; }
  bool empty() const { return top <= base; }
  bool Contains(uint64_t a) const { return a >= base && a < top; }
  bool Contains(const Interval& o) const {
    return o.base >= base && o.top <= top;
  }
  bool Overlaps(const Interval& o) const {
    return base < o.top && o.base < top;
  }
  bool operator==(const Interval&) const = default;
};

enum class RegionKind {
  kCode,
  kData,
  kStack,
  kHeap,
  kShared,
  kSwitcherCode,
  kSwitcherData,
  kCapTable,
};

const char* RegionKindName(RegionKind kind);

// Code regions are measured in instruction slots, everything else in bytes.
enum class AddressSpace { kCode, kData };

struct Region {
  std::string name;
  RegionKind kind = RegionKind::kData;
  AddressSpace space = AddressSpace::kData;
  Interval range;
  std::vector<std::string> owners;

  bool operator==(const Region&) const = default;
};

struct CompartmentPlan {
  std::string name;
  int id = 0;
  std::optional<int> host;  // set for sandboxes
  Interval code;            // PCC bounds
  Interval code_free;       // slots available for placed functions
  Interval stub;            // scratch call-site slots, empty for sandboxes
  Interval span;            // contiguous private data
  Interval data;
  Interval stack;
  Interval heap;
  Interval ddc;             // span widened over overlap windows

  bool operator==(const CompartmentPlan&) const = default;
};

struct SharedWindow {
  std::string name;
  Interval range;
  int first = 0;
  int second = 0;
  SharingMode mode = SharingMode::kOverlap;

  bool operator==(const SharedWindow&) const = default;
};

struct LayoutPlan {
  uint64_t memory_size = 0;
  Interval switcher_code;
  Interval switcher_data;
  // Inside switcher_data: one 16-byte entry per compartment holding the
  // address of that compartment's saved-SP slot.
  Interval sp_slots;
  Interval cap_table;
  // Indexed by compartment id: declared compartments in declaration order,
  // then sandboxes.
  std::vector<CompartmentPlan> compartments;
  std::vector<SharedWindow> shared;
  // Compartment ids in address order.
  std::vector<int> placement;
  std::vector<Region> regions;

  int default_compartment() const { return 0; }
  std::optional<int> FindCompartment(absl::string_view name) const;
  bool operator==(const LayoutPlan&) const = default;
};

// Fixed layout parameters.
inline constexpr uint64_t kNullGuardBytes = 0x1000;
inline constexpr uint64_t kSwitcherCodeSlots = 64;
inline constexpr uint64_t kTrampolineSlots = 8;
// Reserved head of every compartment's data region.
inline constexpr uint64_t kBootSlotBytes = 80;
inline constexpr uint64_t kSealedEntryOffset = 0;
inline constexpr uint64_t kExceptionCapOffset = 32;
inline constexpr uint64_t kSavedSpOffset = 64;
inline constexpr uint64_t kCapTableEntryBytes = 64;
inline constexpr uint64_t kSandboxScratchBytes = 4096;
inline constexpr uint64_t kSandboxDataBytes = 1024;
inline constexpr uint64_t kSandboxCodeSlots = 128;
inline constexpr uint64_t kStubSlots = 128;
inline constexpr uint64_t kMinCodeSlots = 256;

inline constexpr PermSet kDdcPerms{Perm::kLoad, Perm::kStore, Perm::kLoadCap,
                                   Perm::kStoreCap};
// Code is not held in byte memory, so a load through a code capability would
// read whatever data happens to sit at the same numeric addresses.
inline constexpr PermSet kPccPerms{Perm::kExecute};
inline constexpr PermSet kSealedEntryPerms{Perm::kLoad, Perm::kLoadCap,
                                           Perm::kInvoke};

absl::StatusOr<LayoutPlan> ComputeLayout(const CompartmentConfig& cfg,
                                         uint64_t memory_size);

// Pairwise interval audit: regions disjoint, each DDC contiguous and
// overlapping another only on a shared window, switcher memory outside every
// compartment's DDC and PCC.
absl::Status AuditLayout(const LayoutPlan& plan);

std::string FormatRegionTable(const LayoutPlan& plan);
// One JSON object per line: name, kind, space, base, top, owners.
std::string FormatRegionRecords(const LayoutPlan& plan);

struct BootImage {
  LayoutPlan plan;
  TaggedMemory memory;
  Program program;
  MachineState state;

  std::vector<uint64_t> code_cursor;
  std::vector<uint64_t> heap_cursor;
  std::vector<uint64_t> shared_cursor;
  uint64_t promotions = 0;

  Address SealedEntryAddress(int compartment) const {
    return plan.compartments[compartment].data.base + kSealedEntryOffset;
  }
  Address SavedSpAddress(int compartment) const {
    return plan.compartments[compartment].data.base + kSavedSpOffset;
  }
  Address ExceptionCapAddress(int compartment) const {
    return plan.compartments[compartment].data.base + kExceptionCapOffset;
  }
};

absl::StatusOr<BootImage> BootInit(const LayoutPlan& plan);

// Granule-aligned bump allocation.
absl::StatusOr<Address> SharedAlloc(BootImage& img, absl::string_view region,
                                    uint64_t size);
absl::StatusOr<Address> CompAlloc(BootImage& img, int compartment,
                                  uint64_t size);
// Copies `code` into the compartment's code region; returns its entry index.
absl::StatusOr<uint64_t> PlaceCode(BootImage& img, int compartment,
                                   const Program& code);

// Machine state with compartment `id`'s PCC and DDC installed and its stack
// pointer at the saved position.
absl::StatusOr<MachineState> EnterCompartment(const BootImage& img, int id);

}  // namespace capsim

#endif  // CAPSIM_LAYOUT_H_
