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

#ifndef CAPSIM_TAGGED_MEMORY_H_
#define CAPSIM_TAGGED_MEMORY_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "capsim/capability.h"

namespace capsim {

// Flat byte memory with one validity tag per 16-byte granule.
//
// A capability occupies two granules (32 bytes). Its tag lives on the first
// granule; the second is always untagged. Because a capability's payload
// spills into the following granule, a data write to granule g clears the
// tags of both g and g-1.
class TaggedMemory {
 public:
  static constexpr uint64_t kGranule = 16;
  static constexpr uint64_t kCapabilityBytes = 32;
  static constexpr uint64_t kDefaultSize = uint64_t{1} << 24;

  // `size` must be a nonzero power of two and a multiple of the granule.
  static absl::StatusOr<TaggedMemory> Create(uint64_t size = kDefaultSize);

  uint64_t size() const { return bytes_.size(); }

  absl::StatusOr<std::vector<uint8_t>> ReadBytes(Address addr,
                                                 uint64_t len) const;
  absl::Status WriteBytes(Address addr, std::span<const uint8_t> data);

  // Little-endian 8-byte helpers over ReadBytes/WriteBytes.
  absl::StatusOr<uint64_t> ReadU64(Address addr) const;
  absl::Status WriteU64(Address addr, uint64_t value);

  absl::Status StoreCap(Address addr, const Capability& c);
  // An untagged granule loads as an untagged capability, never as an error.
  absl::StatusOr<Capability> LoadCap(Address addr) const;

  bool TagAt(Address addr) const;
  uint64_t TaggedGranuleCount() const;

  // One line per granule: "ADDR: 16 bytes  T|-".
  std::string HexDump(Address addr, uint64_t len) const;

  std::span<const uint8_t> bytes() const { return bytes_; }
  const std::vector<bool>& tags() const { return tags_; }

  bool operator==(const TaggedMemory&) const = default;

 private:
  explicit TaggedMemory(uint64_t size);

  absl::Status CheckRange(Address addr, uint64_t len) const;
  void ClearTagsFor(Address addr, uint64_t len);

  std::vector<uint8_t> bytes_;
  std::vector<bool> tags_;
};

// Maps a memory error status to the machine fault it represents.
FaultKind MemoryFaultKind(const absl::Status& status);

}  // namespace capsim

#endif  // CAPSIM_TAGGED_MEMORY_H_
