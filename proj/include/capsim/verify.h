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

#ifndef CAPSIM_VERIFY_H_
#define CAPSIM_VERIFY_H_

// Isolation checks over a booted layout: a structural suite plus a fuzzer
// that runs random instruction sequences inside compartments and audits
// every memory access the machine lets through.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "capsim/layout.h"
#include "capsim/machine.h"

namespace capsim {

struct FuzzReport {
  uint64_t programs = 0;
  uint64_t steps = 0;
  uint64_t accesses = 0;
  uint64_t switcher_entries = 0;
  std::array<uint64_t, 6> faults{};  // by FaultKind
  uint64_t violations = 0;
  std::vector<std::string> examples;  // first few violations
};

struct FuzzOptions {
  uint64_t programs = 1000;
  uint64_t seed = 0;
  int program_length = 32;
  uint64_t max_steps = 256;
  // Test hook: runs on the freshly booted image before any program.
  std::function<void(BootImage&)> after_boot;
  // Receives every step of every program, tagged with the program index.
  // Only honoured with a single thread.
  std::function<void(uint64_t, const StepEvent&)> on_step;
  // Programs are split into this many shards, each on its own thread with
  // its own image and a seed derived from `seed` and the shard index.
  int threads = 1;
};

// An access is a violation when a compartment touches memory outside its
// own DDC (or an exception-mode window it owns) without faulting. Switcher
// code may touch anything. Sealed invokes may read only the switcher pair or
// a return frame, which lies in some compartment's DDC.
//
// One compartment per program is the attacker and runs random code; every
// other compartment exposes an honest body that dereferences the integer
// pointer it is handed. Faults in attacker code are skipped so one program
// probes many times.
FuzzReport FuzzIsolation(const LayoutPlan& plan, const FuzzOptions& opts);

struct PropertyResult {
  std::string name;
  bool ok = false;
  std::string detail;
};

std::vector<PropertyResult> VerifyLayout(const LayoutPlan& plan,
                                         const FuzzOptions& fuzz);

// Smallest power-of-two memory size that holds every data region.
uint64_t RequiredMemory(const LayoutPlan& plan);

}  // namespace capsim

#endif  // CAPSIM_VERIFY_H_
