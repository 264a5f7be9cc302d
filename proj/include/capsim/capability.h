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

#ifndef CAPSIM_CAPABILITY_H_
#define CAPSIM_CAPABILITY_H_

// Value algebra for uncompressed hardware capabilities. Every operation here
// is pure. Derivations that would widen authority do not trap: they return a
// capability with the tag cleared, and the fault surfaces when it is used.

#include <array>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>

#include "absl/status/statusor.h"

namespace capsim {

using Address = uint64_t;
// Exclusive upper bound. 65 significant bits so that a root can reach 2^64.
using Bound = unsigned __int128;

inline constexpr Bound kAddressSpaceTop = Bound{1} << 64;

enum class Perm : uint8_t {
  kLoad = 1 << 0,
  kStore = 1 << 1,
  kExecute = 1 << 2,
  kLoadCap = 1 << 3,
  kStoreCap = 1 << 4,
  kInvoke = 1 << 5,
};

class PermSet {
 public:
  static constexpr uint8_t kAllBits = 0x3f;

  constexpr PermSet() = default;
  constexpr explicit PermSet(uint8_t bits) : bits_(bits & kAllBits) {}
  constexpr PermSet(std::initializer_list<Perm> perms) {
    for (Perm p : perms) bits_ |= static_cast<uint8_t>(p);
  }

  static constexpr PermSet All() { return PermSet(kAllBits); }

  constexpr uint8_t bits() const { return bits_; }
  constexpr bool Has(Perm p) const {
    return (bits_ & static_cast<uint8_t>(p)) != 0;
  }
  constexpr bool Contains(PermSet other) const {
    return (other.bits_ & ~bits_) == 0;
  }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr PermSet operator&(PermSet o) const { return PermSet(bits_ & o.bits_); }
  constexpr PermSet operator|(PermSet o) const { return PermSet(bits_ | o.bits_); }
  constexpr bool operator==(const PermSet&) const = default;

  // e.g. "LS-lsI"; one column per permission in declaration order.
  std::string ToString() const;

 private:
  uint8_t bits_ = 0;
};

// Object type of a sealed capability. Zero means unsealed.
using OType = uint16_t;
inline constexpr OType kUnsealed = 0;

enum class FaultKind : uint8_t {
  kTag,
  kSeal,
  kPermission,
  kBounds,
  kAlignment,
  kAddress,
};

const char* FaultKindName(FaultKind kind);

struct Capability {
  Address base = 0;
  Bound top = 0;
  Address address = 0;
  PermSet perms;
  OType otype = kUnsealed;
  bool tag = false;

  bool sealed() const { return otype != kUnsealed; }
  // The canonical integer: an untagged capability whose cursor is `value`.
  static Capability Int(uint64_t value) {
    Capability c;
    c.address = value;
    return c;
  }

  bool operator==(const Capability&) const = default;
  std::string ToString() const;
};

// Builds a tagged, unsealed capability with its cursor at `base`. Only boot
// code is supposed to call this.
absl::StatusOr<Capability> MakeRoot(Address base, Bound top, PermSet perms);

Capability SetBounds(const Capability& c, Address new_base, Bound new_top);
Capability SetAddress(const Capability& c, Address address);
Capability RestrictPerms(const Capability& c, PermSet keep);
Capability Seal(const Capability& c, OType otype);
// Fails if `c` is not sealed. Callers are responsible for privilege checks.
absl::StatusOr<Capability> Unseal(const Capability& c);

// Returns nullopt when the access is authorized, otherwise the first failing
// check in the order tag, seal, permission, bounds.
std::optional<FaultKind> CheckAccess(const Capability& c, Address addr,
                                     uint64_t len, PermSet need);

// Debug record: tag(1) | base(8) | top(9) | address(8) | perms(1) | otype(2),
// all little-endian.
inline constexpr size_t kCapabilityRecordSize = 33;
using CapabilityRecord = std::array<uint8_t, kCapabilityRecordSize>;

CapabilityRecord SerializeCapability(const Capability& c);
Capability DeserializeCapability(std::span<const uint8_t, kCapabilityRecordSize> record);

}  // namespace capsim

#endif  // CAPSIM_CAPABILITY_H_
