// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

// Key distributions, YCSB op mixes and KV size presets for the KV bench.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace flex::bench {

enum class Distribution { kSequential, kUniform, kZipfian, kZipfianComposite, kLatest };

std::string_view to_string(Distribution d);
std::optional<Distribution> parse_distribution(std::string_view s);

// Fractions of each op kind; they sum to 1.
struct OpMix {
  double read = 0;
  double update = 0;
  double insert = 0;
  double scan = 0;
  double read_modify_write = 0;
};

struct KvPreset {
  std::string_view name;
  size_t key_size;
  size_t value_size;
};

// ZippyDB 48+43, UDB 27+127, SYS 28+396.
const std::vector<KvPreset>& kv_presets();
std::optional<KvPreset> find_preset(std::string_view name);

struct WorkloadSpec {
  std::string name = "custom";
  Distribution distribution = Distribution::kZipfian;
  OpMix mix{.read = 0.5, .update = 0.5};
  uint64_t key_count = 100000;
  size_t key_size = 27;
  size_t value_size = 127;
  uint64_t op_count = 100000;
  size_t scan_length = 50;
  unsigned threads = 1;
  uint64_t seed = 1;

  // Throws Error(kInvalidArgument) on an unusable spec.
  void validate() const;
};

// YCSB A-F (A: 50% update/50% read, B: 5/95, C: read only, D: 5% insert and
// 95% read of the latest keys, E: 5% insert/95% scan, F: 50% read/50%
// read-modify-write). Every mix but D draws keys from a Zipfian.
WorkloadSpec ycsb(char workload, uint64_t key_count, const KvPreset& preset, uint64_t op_count, uint64_t seed);

// Zipf(alpha) ranks over [0, n) through a precomputed CDF; rank 0 is the most popular.
class ZipfGenerator {
 public:
  ZipfGenerator(uint64_t n, double alpha = 0.99);
  uint64_t operator()(std::mt19937_64& rng) const;
  uint64_t n() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

// Key naming. Keys are fixed-width decimal strings ordered like their ids.
// Plain layout: the id itself, zero padded. Composite layout: a three-digit
// prefix (id % 1000) followed by the suffix (id / 1000), so each prefix owns a
// contiguous key range.
class KeySpace {
 public:
  explicit KeySpace(const WorkloadSpec& spec);

  std::string key(uint64_t id) const;
  // Keys present after the load phase, in key order; loaded[i] is load_id(i).
  uint64_t loaded() const { return loaded_; }
  uint64_t load_id(uint64_t i) const;
  bool composite() const { return composite_; }
  uint64_t suffixes_per_prefix() const { return per_prefix_; }

 private:
  bool composite_;
  size_t width_;
  uint64_t loaded_;
  uint64_t per_prefix_ = 0;
};

// Deterministic value for (key, version): eight hex digits of version then
// filler derived from both.
std::string make_value(std::string_view key, uint64_t version, size_t size);
// Version encoded in a value, if the value is exactly make_value(key, version, size).
std::optional<uint64_t> parse_value(std::string_view key, std::string_view value);

uint64_t mix64(uint64_t x);

}  // namespace flex::bench
