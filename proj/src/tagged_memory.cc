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

#include "capsim/tagged_memory.h"

#include <algorithm>
#include <cstring>
#include <string>

#include "absl/strings/match.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_format.h"

namespace capsim {
namespace {

constexpr char kAlignmentPrefix[] = "AlignmentFault";

}  // namespace

absl::StatusOr<TaggedMemory> TaggedMemory::Create(uint64_t size) {
  if (size == 0 || (size & (size - 1)) != 0 || size % kGranule != 0) {
    return absl::InvalidArgumentError(
        absl::StrFormat("memory size %d is not a power of two >= 16", size));
  }
  return TaggedMemory(size);
}

TaggedMemory::TaggedMemory(uint64_t size)
    : bytes_(size, 0), tags_(size / kGranule, false) {}

absl::Status TaggedMemory::CheckRange(Address addr, uint64_t len) const {
  if (addr > size() || len > size() - addr) {
    return absl::OutOfRangeError(absl::StrFormat(
        "AddressError: [%#x, +%d) outside memory of %#x bytes", addr, len,
        size()));
  }
  return absl::OkStatus();
}

void TaggedMemory::ClearTagsFor(Address addr, uint64_t len) {
  if (len == 0) return;
  uint64_t first = addr / kGranule;
  const uint64_t last = (addr + len - 1) / kGranule;
  if (first > 0) --first;
  for (uint64_t g = first; g <= last; ++g) tags_[g] = false;
}

absl::StatusOr<std::vector<uint8_t>> TaggedMemory::ReadBytes(
    Address addr, uint64_t len) const {
  if (absl::Status s = CheckRange(addr, len); !s.ok()) return s;
  return std::vector<uint8_t>(bytes_.begin() + addr,
                              bytes_.begin() + addr + len);
}

absl::Status TaggedMemory::WriteBytes(Address addr,
                                      std::span<const uint8_t> data) {
  if (absl::Status s = CheckRange(addr, data.size()); !s.ok()) return s;
  if (data.empty()) return absl::OkStatus();
  std::copy(data.begin(), data.end(), bytes_.begin() + addr);
  ClearTagsFor(addr, data.size());
  return absl::OkStatus();
}

absl::StatusOr<uint64_t> TaggedMemory::ReadU64(Address addr) const {
  if (absl::Status s = CheckRange(addr, 8); !s.ok()) return s;
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes_[addr + i];
  return v;
}

absl::Status TaggedMemory::WriteU64(Address addr, uint64_t value) {
  std::array<uint8_t, 8> buf;
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<uint8_t>(value >> (8 * i));
  return WriteBytes(addr, buf);
}

absl::Status TaggedMemory::StoreCap(Address addr, const Capability& c) {
  if (addr % kGranule != 0) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "%s: capability store at %#x", kAlignmentPrefix, addr));
  }
  if (absl::Status s = CheckRange(addr, kCapabilityBytes); !s.ok()) return s;
  const CapabilityRecord record = SerializeCapability(c);
  // The tag byte is not stored; it lives in the tag array.
  uint8_t* dst = bytes_.data() + addr;
  std::memset(dst, 0, kCapabilityBytes);
  std::memcpy(dst, record.data() + 1, kCapabilityRecordSize - 1);
  const uint64_t g = addr / kGranule;
  if (g > 0) tags_[g - 1] = false;
  tags_[g] = c.tag;
  tags_[g + 1] = false;
  return absl::OkStatus();
}

absl::StatusOr<Capability> TaggedMemory::LoadCap(Address addr) const {
  if (addr % kGranule != 0) {
    return absl::InvalidArgumentError(absl::StrFormat(
        "%s: capability load at %#x", kAlignmentPrefix, addr));
  }
  if (absl::Status s = CheckRange(addr, kCapabilityBytes); !s.ok()) return s;
  CapabilityRecord record{};
  record[0] = tags_[addr / kGranule] ? 1 : 0;
  std::memcpy(record.data() + 1, bytes_.data() + addr,
              kCapabilityRecordSize - 1);
  return DeserializeCapability(record);
}

bool TaggedMemory::TagAt(Address addr) const {
  return addr < size() && tags_[addr / kGranule];
}

uint64_t TaggedMemory::TaggedGranuleCount() const {
  return static_cast<uint64_t>(std::count(tags_.begin(), tags_.end(), true));
}

std::string TaggedMemory::HexDump(Address addr, uint64_t len) const {
  std::string out;
  const Address start = addr - addr % kGranule;
  for (Address a = start; a < addr + len && a < size(); a += kGranule) {
    absl::StrAppendFormat(&out, "%08x:", a);
    for (uint64_t i = 0; i < kGranule; ++i) {
      absl::StrAppendFormat(&out, " %02x", bytes_[a + i]);
    }
    absl::StrAppend(&out, "  ", tags_[a / kGranule] ? "T" : "-", "\n");
  }
  return out;
}

FaultKind MemoryFaultKind(const absl::Status& status) {
  if (status.code() == absl::StatusCode::kInvalidArgument &&
      absl::StartsWith(status.message(), kAlignmentPrefix)) {
    return FaultKind::kAlignment;
  }
  return FaultKind::kAddress;
}

}  // namespace capsim
