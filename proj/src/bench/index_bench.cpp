// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include <chrono>
#include <random>
#include <string>

#include "flex/bench/bench.hpp"
#include "flex/status.hpp"

namespace flex::bench {

std::string_view to_string(IndexOp op) {
  switch (op) {
    case IndexOp::kInsert: return "insert";
    case IndexOp::kAppend: return "append";
    case IndexOp::kLookup: return "lookup";
    case IndexOp::kRangeQuery: return "range-query";
  }
  return "?";
}

std::optional<IndexOp> parse_index_op(std::string_view s) {
  for (auto op : {IndexOp::kInsert, IndexOp::kAppend, IndexOp::kLookup, IndexOp::kRangeQuery}) {
    if (to_string(op) == s) return op;
  }
  return std::nullopt;
}

namespace {

using Clock = std::chrono::steady_clock;

// Times ops [0, n) and reports the rate over the back half.
template <typename Fn>
PhaseReport timed_phase(std::string name, uint64_t n, ExtentIndex& index, Fn&& fn) {
  PhaseReport p;
  p.name = std::move(name);
  p.ops = n;
  uint64_t nodes = 0;
  uint64_t shifted = 0;
  bool has_nodes = false;
  bool has_shifted = false;
  const auto t0 = Clock::now();
  auto half = t0;
  for (uint64_t i = 0; i < n; ++i) {
    if (i == n / 2) half = Clock::now();
    if (fn(i)) {
      if (auto m = index.last_nodes_modified()) {
        nodes += *m;
        has_nodes = true;
      }
      if (auto s = index.last_entries_shifted()) {
        shifted += *s;
        has_shifted = true;
      }
    }
  }
  const auto t1 = Clock::now();
  p.seconds = std::chrono::duration<double>(t1 - t0).count();
  const double back = std::chrono::duration<double>(t1 - half).count();
  const uint64_t back_ops = n - n / 2;
  p.ops_per_sec = back > 0 ? static_cast<double>(back_ops) / back : 0;
  if (n > 0 && has_nodes) p.nodes_modified_per_op = static_cast<double>(nodes) / static_cast<double>(n);
  if (n > 0 && has_shifted) p.entries_shifted_per_op = static_cast<double>(shifted) / static_cast<double>(n);
  return p;
}

}  // namespace

BenchReport run_index_bench(const IndexBenchOptions& o) {
  if (o.extents == 0) throw Error(Errc::kInvalidArgument, "extent count must be positive");
  if (o.extent_length == 0 || o.extent_length > kMaxExtentLength) {
    throw Error(Errc::kInvalidArgument, "extent length out of range");
  }
  BenchReport r;
  r.bench = "index-bench";
  r.param("index", std::string(to_string(o.kind)));
  r.param("op", std::string(to_string(o.op)));
  r.param("extents", std::to_string(o.extents));
  r.param("ops", std::to_string(o.op == IndexOp::kAppend ? o.extents : o.ops));
  r.param("extent_length", std::to_string(o.extent_length));
  r.param("capacity", std::to_string(o.capacity));
  r.param("seed", std::to_string(o.seed));

  auto index = make_index(o.kind, o.capacity);
  // Gaps between physical addresses keep neighbours from looking contiguous.
  uint64_t next_phys = 0;
  auto phys = [&] {
    const uint64_t p = next_phys;
    next_phys += o.extent_length + 1;
    return p;
  };
  const uint64_t len = o.extent_length;
  auto build = timed_phase(o.op == IndexOp::kAppend ? "append" : "build", o.extents, *index, [&](uint64_t) {
    index->insert_range(index->size(), len, phys());
    return true;
  });
  r.phases.push_back(std::move(build));

  std::mt19937_64 rng(o.seed);
  uint64_t checksum = 0;
  auto fold = [&](uint64_t v) { checksum = mix64(checksum ^ v); };
  switch (o.op) {
    case IndexOp::kAppend:
      break;
    case IndexOp::kInsert:
      r.phases.push_back(timed_phase("insert", o.ops, *index, [&](uint64_t) {
        index->insert_range(rng() % (index->size() + 1), len, phys());
        return true;
      }));
      break;
    case IndexOp::kLookup:
      r.phases.push_back(timed_phase("lookup", o.ops, *index, [&](uint64_t) {
        const ExtentInfo e = index->find_extent(rng() % index->size());
        fold(e.start);
        fold(e.phys);
        return false;
      }));
      break;
    case IndexOp::kRangeQuery: {
      const uint64_t span = std::min(index->size(), o.range_extents * len);
      r.phases.push_back(timed_phase("range-query", o.ops, *index, [&](uint64_t) {
        const uint64_t off = rng() % (index->size() - span + 1);
        for (const auto& run : index->query_range(off, span)) {
          fold(run.phys);
          fold(run.length);
        }
        return false;
      }));
      break;
    }
  }
  // Fold a sample of the final layout so mutating ops are compared too.
  for (uint64_t i = 0; i < 64; ++i) {
    const ExtentInfo e = index->find_extent(mix64(o.seed + i) % index->size());
    fold(e.start);
    fold(e.phys);
    fold(e.length);
  }
  if (o.check) index->check_invariants();
  r.counter("extents", index->extent_count());
  r.counter("size", index->size());
  r.counter("checksum", checksum);
  return r;
}

}  // namespace flex::bench
