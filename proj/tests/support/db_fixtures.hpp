// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "flex/flexdb.hpp"
#include "flex/kv_format.hpp"
#include "support/space_fixtures.hpp"

namespace flex::testing {

inline DbConfig small_db_config() {
  DbConfig c;
  c.space = small_space_config();
  c.memtable_bytes = 16 << 10;
  c.cache_intervals = 64;
  c.index_capacity = 8;
  c.background_commit = false;
  c.check_after_commit = true;
  return c;
}

using KvModel = std::map<std::string, std::string>;

inline std::string key_of(uint64_t i) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "k%010llu", static_cast<unsigned long long>(i));
  return buf;
}

inline std::string value_of(std::mt19937_64& rng, size_t max_len) {
  std::string v(rng() % (max_len + 1), '\0');
  for (auto& c : v) c = static_cast<char>('a' + rng() % 26);
  return v;
}

// Every key/value pair reachable by a full scan.
inline KvModel scan_all(const FlexDB& db) {
  KvModel out;
  for (auto it = db.seek(""); it.valid(); it.next()) out.emplace(it.key(), it.value());
  return out;
}

// The four-interval layout of the sparse-index worked example: intervals at
// 0 (ant, bee), 42 (bit, far), 64 (foo, gum) and 94 (pin, zoo).
inline const std::vector<std::vector<std::pair<std::string, std::string>>>& interval_example() {
  static const std::vector<std::vector<std::pair<std::string, std::string>>> v = {
      {{"ant", std::string(16, 'a')}, {"bee", std::string(16, 'b')}},  // 21 + 21 bytes
      {{"bit", "bbbbbb"}, {"far", "ffffff"}},                          // 11 + 11
      {{"foo", "oooooooooo"}, {"gum", "gggggggggg"}},                  // 15 + 15
      {{"pin", "ppppp"}, {"zoo", "zzzzz"}},                            // 10 + 10
  };
  return v;
}

// Creates a store whose space holds the worked-example records with one
// extent per interval. Reopening with rebuild_stride 1 finds every extent.
inline void build_interval_example_store(StorageEnv& env, const DbConfig& config) {
  FlexDB::open(env, config)->close();
  auto space = FlexSpace::open(env, config.space);
  const auto& iv = interval_example();
  // Inserted back to front so physically adjacent pieces never coalesce.
  for (size_t i = iv.size(); i-- > 0;) {
    std::vector<uint8_t> bytes;
    for (const auto& [k, v] : iv[i]) kv::encode_record(bytes, k, v);
    space->insert_range(0, bytes);
  }
  space->close();
}

}  // namespace flex::testing
