// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string_view>

#include "flex/bench/extent_index.hpp"
#include "flex/bench/report.hpp"
#include "flex/bench/workload.hpp"
#include "flex/flexdb.hpp"
#include "flex/flexspace.hpp"

namespace flex::bench {

// ---- index bench -------------------------------------------------------------

enum class IndexOp { kInsert, kAppend, kLookup, kRangeQuery };

std::string_view to_string(IndexOp op);
std::optional<IndexOp> parse_index_op(std::string_view s);

struct IndexBenchOptions {
  IndexKind kind = IndexKind::kFlexTree;
  IndexOp op = IndexOp::kInsert;
  uint64_t extents = 1000000;
  // Measured ops after the build; ignored for append, whose build is the measurement.
  uint64_t ops = 100000;
  uint64_t extent_length = 4096;
  uint64_t range_extents = 50;
  size_t capacity = 64;
  uint64_t seed = 1;
  bool check = false;  // structural check after the run
};

// Builds the index by appending `extents` extents, then runs the op.
// Throughput covers the back half of the measured ops. The "checksum"
// counter folds every query result, so equal seeds give equal checksums on
// every index kind.
BenchReport run_index_bench(const IndexBenchOptions& options);

// ---- space bench -------------------------------------------------------------

enum class SpacePattern { kRandInsert, kRandWrite, kSeqWrite };

std::string_view to_string(SpacePattern p);
std::optional<SpacePattern> parse_space_pattern(std::string_view s);

struct SpaceBenchOptions {
  SpacePattern pattern = SpacePattern::kRandInsert;
  uint64_t io_size = 4096;
  uint64_t blocks = 65536;
  uint64_t seed = 1;
  SpaceConfig config;
  std::filesystem::path dir;  // empty: in-memory storage
  bool verify = true;
};

// Write phase (ending with a checkpoint), then sequential and shuffled read
// phases that each read every block once and compare it with the block oracle.
BenchReport run_space_bench(const SpaceBenchOptions& options);

// ---- KV bench ----------------------------------------------------------------

struct KvBenchOptions {
  WorkloadSpec spec;
  DbConfig db;
  std::filesystem::path dir;  // empty: in-memory storage
};

// Loads every key in key order (each thread a contiguous range), then runs
// the op mix. Every read and scan is checked against the model; a mismatch
// throws BenchFailure.
BenchReport run_kv_bench(const KvBenchOptions& options);

// ---- crash suite -------------------------------------------------------------

struct CrashSuiteOptions {
  uint64_t seed = 1;
  uint64_t injections = 200;
  uint64_t script_ops = 5000;
};

// Runs a mixed FlexSpace + FlexDB script on one in-memory environment,
// crashes it at sampled write/sync calls, recovers both stores and compares
// them with the states the script allows at that point.
BenchReport run_crash_suite(const CrashSuiteOptions& options);

}  // namespace flex::bench
