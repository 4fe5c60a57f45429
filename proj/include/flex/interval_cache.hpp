// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flex/sparse_index.hpp"

namespace flex {

struct CachedItem {
  uint16_t fp = 0;
  std::string key;
  std::string value;

  size_t encoded_size() const;
};

// Decoded records of one interval, sorted by key.
struct CachedInterval {
  std::vector<CachedItem> items;

  // Decodes a run of whole records. Throws Error(kCorruption) on trailing or malformed bytes.
  static std::shared_ptr<CachedInterval> decode(std::span<const uint8_t> bytes);
  std::vector<uint8_t> encode() const;

  // Index of the item with this key, found by fingerprint before comparing keys.
  std::optional<size_t> find(std::string_view key) const;
  // First item with key >= key.
  size_t lower_bound(std::string_view key) const;
  // Bytes before items[index].
  uint64_t byte_offset(size_t index) const;
  uint64_t bytes() const { return byte_offset(items.size()); }
};

// CLOCK cache of decoded intervals keyed by sparse-index entry. Not
// thread-safe; the owner serializes access.
class IntervalCache {
 public:
  explicit IntervalCache(size_t capacity);

  // Sets the reference bit on a hit.
  std::shared_ptr<CachedInterval> get(IntervalEntry* e);
  // Like get, without touching statistics or the reference bit.
  std::shared_ptr<CachedInterval> peek(const IntervalEntry* e) const;
  // Caches data for e, evicting a CLOCK victim when full. Replaces any resident copy.
  void put(IntervalEntry* e, std::shared_ptr<CachedInterval> data);
  void erase(IntervalEntry* e);
  void clear();

  size_t size() const { return resident_; }
  size_t capacity() const { return slots_.size(); }
  uint64_t hits() const { return hits_; }
  uint64_t misses() const { return misses_; }
  uint64_t evictions() const { return evictions_; }
  // Entries in slot order; for tests.
  std::vector<IntervalEntry*> residents() const;

 private:
  struct Slot {
    IntervalEntry* owner = nullptr;
    std::shared_ptr<CachedInterval> data;
    bool referenced = false;
  };

  size_t victim();

  std::vector<Slot> slots_;
  std::vector<size_t> free_;
  size_t hand_ = 0;
  size_t resident_ = 0;
  uint64_t hits_ = 0;
  uint64_t misses_ = 0;
  uint64_t evictions_ = 0;
};

}  // namespace flex
