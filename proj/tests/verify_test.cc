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

#include "capsim/verify.h"

#include "gtest/gtest.h"
#include "test_util.h"

namespace capsim {
namespace {

using ::capsim::testing::MustPlan;
using ::capsim::testing::ReadFixture;

TEST(FuzzIsolationTest, TwoCompartmentsHoldUp) {
  const LayoutPlan plan = MustPlan(ReadFixture("two_comp.cfg"));
  FuzzOptions opts;
  opts.programs = 3000;
  opts.seed = 1;
  const FuzzReport r = FuzzIsolation(plan, opts);
  EXPECT_EQ(r.violations, 0) << (r.examples.empty() ? "" : r.examples[0]);
  EXPECT_EQ(r.programs, 3000);
  // The generator has to actually exercise the interesting paths.
  EXPECT_GT(r.switcher_entries, 100);
  EXPECT_GT(r.faults[static_cast<int>(FaultKind::kBounds)], 100);
  EXPECT_GT(r.faults[static_cast<int>(FaultKind::kTag)], 10);
  EXPECT_GT(r.accesses, 10000);
}

TEST(FuzzIsolationTest, SandboxAndExceptionLayouts) {
  for (const char* cfg : {"libsodium.cfg", "exception.cfg", "chain.cfg"}) {
    FuzzOptions opts;
    opts.programs = 1000;
    const FuzzReport r = FuzzIsolation(MustPlan(ReadFixture(cfg)), opts);
    EXPECT_EQ(r.violations, 0)
        << cfg << ": " << (r.examples.empty() ? "" : r.examples[0]);
  }
}

TEST(FuzzIsolationTest, LargeCodeRegion) {
  // Code indices here run past the switcher data's byte addresses, so any
  // code capability that authorizes loads would show up as a leak.
  FuzzOptions opts;
  opts.programs = 20000;
  opts.seed = 7;
  const FuzzReport r = FuzzIsolation(
      MustPlan("compartment app code=8K data=4K stack=8K heap=4K\n"
               "compartment fs code=1K data=4K stack=8K heap=4K\n"
               "shared w size=1K between app,fs\n"),
      opts);
  EXPECT_EQ(r.violations, 0) << (r.examples.empty() ? "" : r.examples[0]);
}

TEST(FuzzIsolationTest, DetectsALeakyCapabilityTable) {
  const LayoutPlan plan = MustPlan(ReadFixture("two_comp.cfg"));
  FuzzOptions opts;
  opts.programs = 2000;
  // Hand compartment 1 a DDC that spans all of memory.
  opts.after_boot = [](BootImage& img) {
    const Address row = img.plan.cap_table.base + kCapTableEntryBytes + 32;
    ASSERT_TRUE(img.memory
                    .StoreCap(row, *MakeRoot(0, img.plan.memory_size, kDdcPerms))
                    .ok());
  };
  const FuzzReport r = FuzzIsolation(plan, opts);
  EXPECT_GT(r.violations, 0);
}

TEST(FuzzIsolationTest, Deterministic) {
  const LayoutPlan plan = MustPlan(ReadFixture("two_comp.cfg"));
  FuzzOptions opts;
  opts.programs = 300;
  opts.seed = 5;
  const FuzzReport a = FuzzIsolation(plan, opts);
  const FuzzReport b = FuzzIsolation(plan, opts);
  EXPECT_EQ(a.steps, b.steps);
  EXPECT_EQ(a.accesses, b.accesses);
  EXPECT_EQ(a.faults, b.faults);
}

TEST(VerifyLayoutTest, AllPropertiesPass) {
  for (const char* cfg : {"two_comp.cfg", "libsodium.cfg", "exception.cfg",
                          "sqlite_fs.cfg", "chain.cfg"}) {
    FuzzOptions opts;
    opts.programs = 200;
    for (const PropertyResult& p : VerifyLayout(MustPlan(ReadFixture(cfg)), opts)) {
      EXPECT_TRUE(p.ok) << cfg << ": " << p.name << ": " << p.detail;
    }
  }
}

}  // namespace
}  // namespace capsim
