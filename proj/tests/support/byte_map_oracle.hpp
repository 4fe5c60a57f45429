// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "flex/flextree.hpp"

namespace flex::testing {

// Reference model of an extent index: one physical address per logical byte.
// Every operation is a plain vector edit, independent of any tree logic.
class ByteMapOracle {
 public:
  uint64_t size() const { return bytes_.size(); }

  void insert(uint64_t offset, uint64_t length, uint64_t phys) {
    std::vector<uint64_t> run(length);
    for (uint64_t i = 0; i < length; ++i) run[i] = phys == kUnmapped ? kUnmapped : phys + i;
    bytes_.insert(bytes_.begin() + static_cast<ptrdiff_t>(offset), run.begin(), run.end());
  }

  void collapse(uint64_t offset, uint64_t length) {
    bytes_.erase(bytes_.begin() + static_cast<ptrdiff_t>(offset),
                 bytes_.begin() + static_cast<ptrdiff_t>(offset + length));
  }

  void write(uint64_t offset, uint64_t length, uint64_t phys) {
    if (offset + length > bytes_.size()) bytes_.resize(offset + length, kUnmapped);
    for (uint64_t i = 0; i < length; ++i) bytes_[offset + i] = phys + i;
  }

  void remap(uint64_t offset, uint64_t length, uint64_t phys) { write(offset, length, phys); }

  uint64_t at(uint64_t offset) const { return bytes_.at(offset); }

  std::vector<uint64_t> slice(uint64_t offset, uint64_t length) const {
    return {bytes_.begin() + static_cast<ptrdiff_t>(offset),
            bytes_.begin() + static_cast<ptrdiff_t>(offset + length)};
  }

  // Expands query runs into the same per-byte form.
  static std::vector<uint64_t> expand(const std::vector<MappingRun>& runs) {
    std::vector<uint64_t> out;
    for (const auto& r : runs) {
      if (r.length == 0) throw std::logic_error("zero-length run");
      for (uint64_t i = 0; i < r.length; ++i) out.push_back(r.mapped() ? r.phys + i : kUnmapped);
    }
    return out;
  }

 private:
  std::vector<uint64_t> bytes_;
};

}  // namespace flex::testing
