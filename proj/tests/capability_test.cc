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

#include <cstdint>
#include <random>
#include <vector>

#include "gtest/gtest.h"

namespace capsim {
namespace {

constexpr PermSet kLS{Perm::kLoad, Perm::kStore};

Capability Cap(Address base, Bound top, PermSet perms = PermSet::All()) {
  absl::StatusOr<Capability> c = MakeRoot(base, top, perms);
  EXPECT_TRUE(c.ok());
  return *c;
}

TEST(MakeRootTest, WholeAddressSpace) {
  absl::StatusOr<Capability> root = MakeRoot(0, kAddressSpaceTop, PermSet::All());
  ASSERT_TRUE(root.ok());
  EXPECT_TRUE(root->tag);
  EXPECT_FALSE(root->sealed());
  EXPECT_EQ(root->base, 0u);
  EXPECT_EQ(root->top, kAddressSpaceTop);
  EXPECT_EQ(root->perms, PermSet::All());
}

TEST(MakeRootTest, DirectFields) {
  absl::StatusOr<Capability> c = MakeRoot(0x1000, 0x2000, kLS);
  ASSERT_TRUE(c.ok());
  EXPECT_TRUE(c->tag);
  EXPECT_EQ(c->base, 0x1000u);
  EXPECT_EQ(c->top, Bound{0x2000});
  EXPECT_EQ(c->address, 0x1000u);
  EXPECT_EQ(c->perms, kLS);
}

TEST(MakeRootTest, InvertedBoundsIsAnError) {
  EXPECT_FALSE(MakeRoot(0x2000, 0x1000, PermSet{Perm::kLoad}).ok());
  EXPECT_FALSE(MakeRoot(0, kAddressSpaceTop + 1, PermSet{}).ok());
}

TEST(SetBoundsTest, StrictSubset) {
  Capability c = SetBounds(Cap(0x1000, 0x2000), 0x1100, 0x1200);
  EXPECT_TRUE(c.tag);
  EXPECT_EQ(c.base, 0x1100u);
  EXPECT_EQ(c.top, Bound{0x1200});
  EXPECT_EQ(c.address, 0x1100u);
}

TEST(SetBoundsTest, Identity) {
  const Capability src = Cap(0x1000, 0x2000);
  Capability c = SetBounds(src, 0x1000, 0x2000);
  EXPECT_TRUE(c.tag);
  EXPECT_EQ(c, src);
}

TEST(SetBoundsTest, WideningClearsTag) {
  EXPECT_FALSE(SetBounds(Cap(0x1000, 0x2000), 0x0F00, 0x2000).tag);
  EXPECT_FALSE(SetBounds(Cap(0x1000, 0x2000), 0x1000, 0x2001).tag);
  EXPECT_FALSE(SetBounds(Cap(0x1000, 0x2000), 0x1800, 0x1700).tag);
}

TEST(SetBoundsTest, UntaggedOrSealedSourceClearsTag) {
  Capability untagged = Cap(0x1000, 0x2000);
  untagged.tag = false;
  EXPECT_FALSE(SetBounds(untagged, 0x1100, 0x1200).tag);
  EXPECT_FALSE(SetBounds(Seal(Cap(0x1000, 0x2000), 7), 0x1100, 0x1200).tag);
}

TEST(SetAddressTest, MovesCursorAndKeepsTag) {
  const Capability src = Cap(0x1000, 0x2000);
  Capability c = SetAddress(src, 0x1800);
  EXPECT_TRUE(c.tag);
  EXPECT_EQ(c.address, 0x1800u);
  EXPECT_EQ(c.base, src.base);
  EXPECT_EQ(c.top, src.top);
  // Out of bounds cursor is legal; use faults later.
  EXPECT_TRUE(SetAddress(src, 0x9000).tag);
}

TEST(SetAddressTest, Identity) {
  const Capability src = SetAddress(Cap(0x1000, 0x2000), 0x1234);
  EXPECT_EQ(SetAddress(src, src.address), src);
}

TEST(SetAddressTest, SealedSourceClearsTag) {
  EXPECT_FALSE(SetAddress(Seal(Cap(0x1000, 0x2000), 7), 0x0).tag);
}

TEST(RestrictPermsTest, Intersection) {
  EXPECT_EQ(RestrictPerms(Cap(0, 16, kLS), PermSet{Perm::kLoad}).perms,
            PermSet{Perm::kLoad});
  const Capability p = Cap(0, 16, kLS);
  EXPECT_EQ(RestrictPerms(p, kLS), p);
  Capability none = RestrictPerms(Cap(0, 16, PermSet{Perm::kLoad}),
                                  PermSet{Perm::kStore});
  EXPECT_TRUE(none.perms.empty());
  EXPECT_TRUE(none.tag);
}

TEST(RestrictPermsTest, SealedSourceClearsTag) {
  EXPECT_FALSE(RestrictPerms(Seal(Cap(0, 16), 3), kLS).tag);
}

TEST(SealTest, RoundTrip) {
  const Capability c = Cap(0x1000, 0x2000);
  absl::StatusOr<Capability> back = Unseal(Seal(c, 7));
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(*back, c);
}

TEST(SealTest, DoubleSealClearsTag) {
  EXPECT_FALSE(Seal(Seal(Cap(0, 32), 7), 8).tag);
}

TEST(SealTest, UnsealOfUnsealedIsAnError) {
  EXPECT_FALSE(Unseal(Cap(0, 32)).ok());
}

TEST(SealTest, SealedIsNotDereferenceable) {
  EXPECT_EQ(CheckAccess(Seal(Cap(0, 32), 7), 0, 8, PermSet{Perm::kLoad}),
            FaultKind::kSeal);
}

TEST(CheckAccessTest, Bounds) {
  const Capability c = Cap(0x1000, 0x2000);
  const PermSet load{Perm::kLoad};
  EXPECT_EQ(CheckAccess(c, 0x1FF8, 8, load), std::nullopt);
  EXPECT_EQ(CheckAccess(c, 0x1FF9, 8, load), FaultKind::kBounds);
  EXPECT_EQ(CheckAccess(c, 0x0FFF, 1, load), FaultKind::kBounds);
  EXPECT_EQ(CheckAccess(c, 0x1000, 1, load), std::nullopt);
}

TEST(CheckAccessTest, UntaggedIsTagFault) {
  Capability c = Cap(0x1000, 0x2000);
  c.tag = false;
  EXPECT_EQ(CheckAccess(c, 0x1000, 1, PermSet{}), FaultKind::kTag);
}

TEST(CheckAccessTest, MissingPermission) {
  EXPECT_EQ(CheckAccess(Cap(0, 64, PermSet{Perm::kLoad}), 0, 8,
                        PermSet{Perm::kStore}),
            FaultKind::kPermission);
}

// Every combination of failing conditions reports the highest-priority one.
TEST(CheckAccessTest, FaultPriorityIsTagSealPermissionBounds) {
  for (int mask = 0; mask < 16; ++mask) {
    Capability c = Cap(0x100, 0x200, PermSet{Perm::kLoad});
    Address addr = 0x100;
    if (mask & 1) c.tag = false;
    if (mask & 2) c.otype = 5;
    PermSet need{Perm::kLoad};
    if (mask & 4) need = PermSet{Perm::kStore};
    if (mask & 8) addr = 0x300;
    std::optional<FaultKind> expected;
    if (mask & 8) expected = FaultKind::kBounds;
    if (mask & 4) expected = FaultKind::kPermission;
    if (mask & 2) expected = FaultKind::kSeal;
    if (mask & 1) expected = FaultKind::kTag;
    EXPECT_EQ(CheckAccess(c, addr, 4, need), expected) << "mask=" << mask;
    // Pure: asking twice gives the same answer.
    EXPECT_EQ(CheckAccess(c, addr, 4, need), CheckAccess(c, addr, 4, need));
  }
}

TEST(SerializationTest, LayoutIsLittleEndian) {
  Capability c = Cap(0x1122334455667788, kAddressSpaceTop,
                     PermSet{Perm::kLoad, Perm::kInvoke});
  c.address = 0x0102030405060708;
  c.otype = 0xABCD;
  const CapabilityRecord r = SerializeCapability(c);
  EXPECT_EQ(r[0], 1);
  EXPECT_EQ(r[1], 0x88);
  EXPECT_EQ(r[8], 0x11);
  for (int i = 9; i < 17; ++i) EXPECT_EQ(r[i], 0) << i;
  EXPECT_EQ(r[17], 1);  // bit 64 of top
  EXPECT_EQ(r[18], 0x08);
  EXPECT_EQ(r[26], 0x21);
  EXPECT_EQ(r[27], 0xCD);
  EXPECT_EQ(r[28], 0xAB);
}

TEST(SerializationTest, RoundTripProperty) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 2000; ++i) {
    Capability c;
    c.base = rng();
    c.top = Bound{c.base} + (rng() >> (rng() % 64));
    c.address = rng();
    c.perms = PermSet(static_cast<uint8_t>(rng()));
    c.otype = static_cast<OType>(rng());
    c.tag = rng() & 1;
    const CapabilityRecord r = SerializeCapability(c);
    EXPECT_EQ(DeserializeCapability(r), c);
  }
}

// Random derivation chains never widen bounds or permissions, and a
// requested widening always yields an untagged result.
TEST(CapabilityPropertyTest, Monotonicity) {
  std::mt19937_64 rng(1);
  const Capability root = Cap(0x10000, 0x20000);
  int widening_attempts = 0;
  for (int chain = 0; chain < 2000; ++chain) {
    Capability c = root;
    for (int step = 0; step < 12 && c.tag; ++step) {
      switch (rng() % 3) {
        case 0: {
          const Address lo = root.base - 0x100 + rng() % 0x10200;
          const Bound hi = Bound{lo} + rng() % 0x10200;
          const bool widens =
              lo < c.base || hi > c.top || Bound{lo} > hi;
          const Capability next = SetBounds(c, lo, hi);
          if (widens) {
            ++widening_attempts;
            EXPECT_FALSE(next.tag);
          }
          c = next;
          break;
        }
        case 1:
          c = RestrictPerms(c, PermSet(static_cast<uint8_t>(rng())));
          break;
        case 2:
          c = SetAddress(c, rng());
          break;
      }
      if (c.tag) {
        EXPECT_GE(c.base, root.base);
        EXPECT_LE(c.top, root.top);
        EXPECT_TRUE(root.perms.Contains(c.perms));
      }
    }
  }
  EXPECT_GT(widening_attempts, 0);
}

TEST(CapabilityPropertyTest, SealOpacity) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 2000; ++trial) {
    Capability c = Seal(Cap(0x1000, 0x2000), 1 + rng() % 100);
    for (int step = 0; step < 8; ++step) {
      switch (rng() % 4) {
        case 0:
          c = SetBounds(c, 0x1000 + rng() % 0x100, 0x1f00);
          break;
        case 1:
          c = SetAddress(c, rng());
          break;
        case 2:
          c = RestrictPerms(c, PermSet(static_cast<uint8_t>(rng())));
          break;
        case 3:
          c = Seal(c, 1 + rng() % 100);
          break;
      }
      EXPECT_FALSE(c.tag && !c.sealed());
    }
  }
}

}  // namespace
}  // namespace capsim
