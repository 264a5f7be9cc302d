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

#include "capsim/capability.h"

#include <string>

#include "absl/status/status.h"
#include "absl/strings/str_format.h"

namespace capsim {
namespace {

Capability Detag(Capability c) {
  c.tag = false;
  return c;
}

std::string BoundToHex(Bound b) {
  if (b == kAddressSpaceTop) return "0x10000000000000000";
  return absl::StrFormat("%#x", static_cast<uint64_t>(b));
}

}  // namespace

std::string PermSet::ToString() const {
  static constexpr char kLetters[] = "LSXlsI";
  std::string out(6, '-');
  for (int i = 0; i < 6; ++i) {
    if (bits_ & (1 << i)) out[i] = kLetters[i];
  }
  return out;
}

const char* FaultKindName(FaultKind kind) {
  switch (kind) {
    case FaultKind::kTag:
      return "TagFault";
    case FaultKind::kSeal:
      return "SealFault";
    case FaultKind::kPermission:
      return "PermissionFault";
    case FaultKind::kBounds:
      return "BoundsFault";
    case FaultKind::kAlignment:
      return "AlignmentFault";
    case FaultKind::kAddress:
      return "AddressError";
  }
  return "UnknownFault";
}

std::string Capability::ToString() const {
  return absl::StrFormat("%s[%#x,%s)@%#x %s otype=%d", tag ? "T" : "-", base,
                         BoundToHex(top), address, perms.ToString(), otype);
}

absl::StatusOr<Capability> MakeRoot(Address base, Bound top, PermSet perms) {
  if (top > kAddressSpaceTop) {
    return absl::InvalidArgumentError("capability top exceeds 2^64");
  }
  if (Bound{base} > top) {
    return absl::InvalidArgumentError(
        absl::StrFormat("inverted bounds: base %#x above top %s", base,
                        BoundToHex(top)));
  }
  Capability c;
  c.base = base;
  c.top = top;
  c.address = base;
  c.perms = perms;
  c.tag = true;
  return c;
}

Capability SetBounds(const Capability& c, Address new_base, Bound new_top) {
  Capability out = c;
  out.base = new_base;
  out.top = new_top;
  out.address = new_base;
  if (!c.tag || c.sealed() || Bound{new_base} > new_top ||
      new_base < c.base || new_top > c.top) {
    return Detag(out);
  }
  return out;
}

Capability SetAddress(const Capability& c, Address address) {
  Capability out = c;
  out.address = address;
  if (c.sealed()) return Detag(out);
  return out;
}

Capability RestrictPerms(const Capability& c, PermSet keep) {
  Capability out = c;
  out.perms = c.perms & keep;
  if (c.sealed()) return Detag(out);
  return out;
}

Capability Seal(const Capability& c, OType otype) {
  Capability out = c;
  if (c.sealed() || otype == kUnsealed) return Detag(out);
  out.otype = otype;
  return out;
}

absl::StatusOr<Capability> Unseal(const Capability& c) {
  if (!c.sealed()) {
    return absl::FailedPreconditionError("unseal of an unsealed capability");
  }
  Capability out = c;
  out.otype = kUnsealed;
  return out;
}

std::optional<FaultKind> CheckAccess(const Capability& c, Address addr,
                                     uint64_t len, PermSet need) {
  if (!c.tag) return FaultKind::kTag;
  if (c.sealed()) return FaultKind::kSeal;
  if (!c.perms.Contains(need)) return FaultKind::kPermission;
  const Bound end = Bound{addr} + len;
  if (addr < c.base || end > c.top || len == 0) return FaultKind::kBounds;
  return std::nullopt;
}

CapabilityRecord SerializeCapability(const Capability& c) {
  CapabilityRecord r{};
  size_t pos = 0;
  auto put = [&](Bound v, int bytes) {
    for (int i = 0; i < bytes; ++i) r[pos++] = static_cast<uint8_t>(v >> (8 * i));
  };
  put(c.tag ? 1 : 0, 1);
  put(c.base, 8);
  put(c.top, 9);
  put(c.address, 8);
  put(c.perms.bits(), 1);
  put(c.otype, 2);
  return r;
}

Capability DeserializeCapability(
    std::span<const uint8_t, kCapabilityRecordSize> record) {
  size_t pos = 0;
  auto get = [&](int bytes) {
    Bound v = 0;
    for (int i = 0; i < bytes; ++i) v |= Bound{record[pos++]} << (8 * i);
    return v;
  };
  Capability c;
  c.tag = (get(1) & 1) != 0;
  c.base = static_cast<Address>(get(8));
  c.top = get(9) & ((Bound{1} << 65) - 1);
  c.address = static_cast<Address>(get(8));
  c.perms = PermSet(static_cast<uint8_t>(get(1)));
  c.otype = static_cast<OType>(get(2));
  return c;
}

}  // namespace capsim
