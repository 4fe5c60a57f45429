// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace flex {

// Sorted write buffer. A value of nullopt is a tombstone. One writer and any
// number of readers may use it concurrently.
class MemTable {
 public:
  using Value = std::optional<std::string>;

  enum class Lookup { kAbsent, kValue, kTombstone };

  struct Entry {
    std::string key;
    Value value;
  };

  void put(std::string_view key, std::string_view value);
  void del(std::string_view key);
  Lookup get(std::string_view key, std::string* value) const;
  // First entry with key > after (or >= when inclusive).
  std::optional<Entry> next(std::string_view after, bool inclusive) const;

  // Rejects further writes.
  void freeze();
  bool frozen() const;
  uint64_t bytes() const;
  size_t size() const;
  bool empty() const { return size() == 0; }
  // All entries in key order.
  std::vector<Entry> entries() const;

 private:
  void set(std::string_view key, Value value);

  static constexpr uint64_t kEntryOverhead = 48;

  mutable std::shared_mutex mu_;
  std::map<std::string, Value, std::less<>> map_;
  uint64_t bytes_ = 0;
  bool frozen_ = false;
};

}  // namespace flex
