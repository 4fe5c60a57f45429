// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/bench/workload.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>

#include "flex/status.hpp"

namespace flex::bench {

namespace {

size_t decimal_digits(uint64_t v) {
  size_t n = 1;
  while (v >= 10) {
    v /= 10;
    ++n;
  }
  return n;
}

void append_padded(std::string& out, uint64_t v, size_t width) {
  char buf[24];
  const int n = std::snprintf(buf, sizeof(buf), "%llu", static_cast<unsigned long long>(v));
  out.append(width - static_cast<size_t>(n), '0');
  out.append(buf, static_cast<size_t>(n));
}

}  // namespace

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string_view to_string(Distribution d) {
  switch (d) {
    case Distribution::kSequential: return "sequential";
    case Distribution::kUniform: return "uniform";
    case Distribution::kZipfian: return "zipfian";
    case Distribution::kZipfianComposite: return "zipfian-composite";
    case Distribution::kLatest: return "latest";
  }
  return "?";
}

std::optional<Distribution> parse_distribution(std::string_view s) {
  for (auto d : {Distribution::kSequential, Distribution::kUniform, Distribution::kZipfian,
                 Distribution::kZipfianComposite, Distribution::kLatest}) {
    if (to_string(d) == s) return d;
  }
  return std::nullopt;
}

const std::vector<KvPreset>& kv_presets() {
  static const std::vector<KvPreset> presets = {
      {"zippydb", 48, 43},
      {"udb", 27, 127},
      {"sys", 28, 396},
  };
  return presets;
}

std::optional<KvPreset> find_preset(std::string_view name) {
  for (const auto& p : kv_presets()) {
    if (p.name == name) return p;
  }
  return std::nullopt;
}

void WorkloadSpec::validate() const {
  auto bad = [](const std::string& m) { throw Error(Errc::kInvalidArgument, m); };
  if (key_count == 0) bad("key_count must be positive");
  if (threads == 0 || threads > 16) bad("threads must be in [1, 16]");
  if (scan_length == 0) bad("scan_length must be positive");
  if (value_size < 8) bad("value_size must be at least 8");
  const double sum = mix.read + mix.update + mix.insert + mix.scan + mix.read_modify_write;
  if (std::abs(sum - 1.0) > 1e-9) bad("op mix must sum to 1");
  for (double f : {mix.read, mix.update, mix.insert, mix.scan, mix.read_modify_write}) {
    if (f < 0) bad("op mix fractions must be non-negative");
  }
  // Inserted ids stay below key_count + 2 * op_count * threads (see KvBench).
  const uint64_t headroom = 2 * (op_count + 1) * threads + 1000;
  if (distribution == Distribution::kZipfianComposite) {
    const uint64_t per = (key_count + 999) / 1000;
    if (key_size < 3 + decimal_digits(per + headroom)) bad("key_size too small for the key population");
  } else if (key_size < decimal_digits(key_count + headroom)) {
    bad("key_size too small for the key population");
  }
}

WorkloadSpec ycsb(char workload, uint64_t key_count, const KvPreset& preset, uint64_t op_count, uint64_t seed) {
  WorkloadSpec s;
  s.name = std::string("ycsb-") + static_cast<char>(std::tolower(workload));
  s.key_count = key_count;
  s.key_size = preset.key_size;
  s.value_size = preset.value_size;
  s.op_count = op_count;
  s.seed = seed;
  s.distribution = Distribution::kZipfian;
  switch (std::toupper(workload)) {
    case 'A': s.mix = {.read = 0.5, .update = 0.5}; break;
    case 'B': s.mix = {.read = 0.95, .update = 0.05}; break;
    case 'C': s.mix = {.read = 1.0}; break;
    case 'D':
      s.mix = {.read = 0.95, .insert = 0.05};
      s.distribution = Distribution::kLatest;
      break;
    case 'E': s.mix = {.insert = 0.05, .scan = 0.95}; break;
    case 'F': s.mix = {.read = 0.5, .read_modify_write = 0.5}; break;
    default: throw Error(Errc::kInvalidArgument, "unknown YCSB workload");
  }
  return s;
}

ZipfGenerator::ZipfGenerator(uint64_t n, double alpha) : cdf_(std::max<uint64_t>(n, 1)) {
  double sum = 0;
  for (uint64_t i = 0; i < cdf_.size(); ++i) {
    sum += 1.0 / std::pow(static_cast<double>(i + 1), alpha);
    cdf_[i] = sum;
  }
  for (auto& c : cdf_) c /= sum;
  cdf_.back() = 1.0;
}

uint64_t ZipfGenerator::operator()(std::mt19937_64& rng) const {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  return static_cast<uint64_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin()) % cdf_.size();
}

KeySpace::KeySpace(const WorkloadSpec& spec)
    : composite_(spec.distribution == Distribution::kZipfianComposite),
      width_(spec.key_size),
      loaded_(spec.key_count) {
  if (composite_) {
    per_prefix_ = (spec.key_count + 999) / 1000;
    loaded_ = per_prefix_ * 1000;
  }
}

std::string KeySpace::key(uint64_t id) const {
  std::string k;
  k.reserve(width_);
  if (composite_) {
    append_padded(k, id % 1000, 3);
    append_padded(k, id / 1000, width_ - 3);
  } else {
    append_padded(k, id, width_);
  }
  return k;
}

uint64_t KeySpace::load_id(uint64_t i) const {
  if (!composite_) return i;
  return (i % per_prefix_) * 1000 + i / per_prefix_;
}

std::string make_value(std::string_view key, uint64_t version, size_t size) {
  std::string v(size, '\0');
  char head[9];
  std::snprintf(head, sizeof(head), "%08llx", static_cast<unsigned long long>(version & 0xffffffffull));
  const size_t h = std::min<size_t>(8, size);
  std::copy(head, head + h, v.begin());
  uint64_t state = std::hash<std::string_view>{}(key) ^ mix64(version);
  for (size_t i = h; i < size; i += 8) {
    state = mix64(state);
    for (size_t j = 0; j < 8 && i + j < size; ++j) v[i + j] = static_cast<char>('a' + ((state >> (8 * j)) & 0xff) % 26);
  }
  return v;
}

std::optional<uint64_t> parse_value(std::string_view key, std::string_view value) {
  if (value.size() < 8) return std::nullopt;
  uint64_t version = 0;
  for (size_t i = 0; i < 8; ++i) {
    const char c = value[i];
    uint64_t d;
    if (c >= '0' && c <= '9') {
      d = static_cast<uint64_t>(c - '0');
    } else if (c >= 'a' && c <= 'f') {
      d = static_cast<uint64_t>(c - 'a' + 10);
    } else {
      return std::nullopt;
    }
    version = version * 16 + d;
  }
  if (make_value(key, version, value.size()) != value) return std::nullopt;
  return version;
}

}  // namespace flex::bench
