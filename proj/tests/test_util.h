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

#ifndef CAPSIM_TESTS_TEST_UTIL_H_
#define CAPSIM_TESTS_TEST_UTIL_H_

#include <fstream>
#include <sstream>
#include <string>

#include "absl/strings/str_cat.h"
#include "absl/strings/string_view.h"
#include "capsim/isa.h"
#include "capsim/layout.h"
#include "capsim/machine.h"
#include "gtest/gtest.h"

namespace capsim::testing {

inline std::string ReadFixture(absl::string_view name) {
  std::ifstream in(absl::StrCat(CAPSIM_SOURCE_DIR, "/fixtures/", name));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline LayoutPlan MustPlan(absl::string_view text,
                           uint64_t memory = uint64_t{1} << 22) {
  absl::StatusOr<CompartmentConfig> cfg = ParseConfig(text);
  EXPECT_TRUE(cfg.ok()) << cfg.status();
  absl::StatusOr<LayoutPlan> plan = ComputeLayout(*cfg, memory);
  EXPECT_TRUE(plan.ok()) << plan.status();
  return *plan;
}

inline BootImage MustBoot(absl::string_view text,
                          uint64_t memory = uint64_t{1} << 22) {
  absl::StatusOr<BootImage> img = BootInit(MustPlan(text, memory));
  EXPECT_TRUE(img.ok()) << img.status();
  return *std::move(img);
}

// Places `text` (plus a trailing halt) in `comp` and runs it on `st`.
inline RunResult RunIn(BootImage& img, MachineState& st, int comp,
                       absl::string_view text, uint64_t max_steps = 10000) {
  absl::StatusOr<Program> code = Assemble(text);
  EXPECT_TRUE(code.ok()) << code.status();
  code->push_back(Instruction{Op::kHalt});
  absl::StatusOr<uint64_t> entry = PlaceCode(img, comp, *code);
  EXPECT_TRUE(entry.ok()) << entry.status();
  st.pcc.address = *entry;
  st.halted = false;
  return Run(st, img.memory, img.program, max_steps);
}

}  // namespace capsim::testing

#endif  // CAPSIM_TESTS_TEST_UTIL_H_
