// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "flex/flexspace.hpp"

namespace flex::testing {

// Small geometry so GC, checkpoints and log commits trigger quickly.
inline SpaceConfig small_space_config() {
  SpaceConfig c;
  c.segment_size = 64 << 10;
  c.max_extent = 2 << 10;
  c.reserved_free_segments = 4;
  c.max_segments = 64;
  c.log_size_threshold = 64 << 10;
  c.log_buffer_entries = 256;
  c.tree_capacity = 16;
  c.gc_batch = 2;
  return c;
}

inline std::vector<uint8_t> pattern(size_t n, uint64_t seed) {
  std::vector<uint8_t> v(n);
  std::mt19937_64 rng(seed);
  for (auto& b : v) b = static_cast<uint8_t>(rng());
  return v;
}

// Flat byte-string model of a flexible address space.
class ByteStringOracle {
 public:
  void write(uint64_t off, const std::vector<uint8_t>& d) {
    if (bytes_.size() < off + d.size()) bytes_.resize(off + d.size(), 0);
    std::copy(d.begin(), d.end(), bytes_.begin() + static_cast<ptrdiff_t>(off));
  }
  void insert(uint64_t off, const std::vector<uint8_t>& d) {
    bytes_.insert(bytes_.begin() + static_cast<ptrdiff_t>(off), d.begin(), d.end());
  }
  void collapse(uint64_t off, uint64_t len) {
    bytes_.erase(bytes_.begin() + static_cast<ptrdiff_t>(off), bytes_.begin() + static_cast<ptrdiff_t>(off + len));
  }
  uint64_t size() const { return bytes_.size(); }
  const std::vector<uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<uint8_t> bytes_;
};

inline std::vector<uint8_t> full_content(const FlexSpace& s) { return s.pread(0, s.size()); }

}  // namespace flex::testing
