// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace flex::bench {

struct LatencySummary {
  double avg_us = 0;
  double p95_us = 0;
  double p99_us = 0;
};

// Summarizes per-op latencies in nanoseconds; the input is reordered.
LatencySummary summarize_latency(std::vector<uint64_t>& ns);

struct PhaseReport {
  std::string name;
  uint64_t ops = 0;
  double seconds = 0;
  double ops_per_sec = 0;
  std::optional<LatencySummary> latency;
  std::optional<double> nodes_modified_per_op;
  std::optional<double> entries_shifted_per_op;
  uint64_t bytes_written = 0;  // storage adapter counters
  uint64_t bytes_read = 0;
  uint64_t logical_bytes = 0;  // payload admitted by the caller

  // bytes_written / logical_bytes; nullopt when nothing was admitted.
  std::optional<double> write_amplification() const;
};

// Thrown when a bench observes a result that disagrees with its model.
class BenchFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BenchReport {
 public:
  std::string bench;
  std::vector<std::pair<std::string, std::string>> params;
  std::vector<PhaseReport> phases;
  std::vector<std::pair<std::string, uint64_t>> counters;
  std::vector<std::string> failures;

  void param(std::string key, std::string value) { params.emplace_back(std::move(key), std::move(value)); }
  void counter(std::string key, uint64_t value) { counters.emplace_back(std::move(key), value); }
  const PhaseReport& phase(std::string_view name) const;
  uint64_t counter(std::string_view key) const;
  bool passed() const { return failures.empty(); }

  // JSON with keys in insertion order.
  std::string to_text() const;
};

}  // namespace flex::bench
