// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <cstring>
#include <memory>
#include <numeric>
#include <random>
#include <string>

#include "flex/bench/bench.hpp"
#include "flex/status.hpp"

namespace flex::bench {

std::string_view to_string(SpacePattern p) {
  switch (p) {
    case SpacePattern::kRandInsert: return "rand-insert";
    case SpacePattern::kRandWrite: return "rand-write";
    case SpacePattern::kSeqWrite: return "seq-write";
  }
  return "?";
}

std::optional<SpacePattern> parse_space_pattern(std::string_view s) {
  for (auto p : {SpacePattern::kRandInsert, SpacePattern::kRandWrite, SpacePattern::kSeqWrite}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

namespace {

using Clock = std::chrono::steady_clock;

// Content of block `id`.
void fill_block(uint64_t seed, uint64_t id, std::span<uint8_t> out) {
  uint64_t state = mix64(seed * 0x100000001b3ull + id);
  for (size_t i = 0; i < out.size(); i += 8) {
    state = mix64(state);
    std::memcpy(out.data() + i, &state, std::min<size_t>(8, out.size() - i));
  }
}

double secs(Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); }

}  // namespace

BenchReport run_space_bench(const SpaceBenchOptions& o) {
  if (o.io_size == 0 || o.blocks == 0) throw Error(Errc::kInvalidArgument, "io size and block count must be positive");
  if (o.io_size * o.blocks > (uint64_t{1} << 30)) throw Error(Errc::kInvalidArgument, "space bench is limited to 1 GiB");
  BenchReport r;
  r.bench = "space-bench";
  r.param("pattern", std::string(to_string(o.pattern)));
  r.param("io_size", std::to_string(o.io_size));
  r.param("blocks", std::to_string(o.blocks));
  r.param("seed", std::to_string(o.seed));
  r.param("storage", o.dir.empty() ? "memory" : o.dir.string());

  std::unique_ptr<StorageEnv> env;
  if (o.dir.empty()) {
    env = std::make_unique<MemEnv>();
  } else {
    std::filesystem::create_directories(o.dir);
    env = std::make_unique<PosixEnv>(o.dir);
  }
  auto space = FlexSpace::open(*env, o.config);
  if (space->size() != 0) throw Error(Errc::kInvalidArgument, "space bench needs an empty space");
  env->reset_counters();

  // oracle[i] is the id of the block at logical block i.
  std::vector<uint32_t> oracle;
  oracle.reserve(o.blocks);
  std::vector<uint8_t> buf(o.io_size);
  std::mt19937_64 rng(o.seed);

  PhaseReport w;
  w.name = "write";
  w.ops = o.blocks;
  w.logical_bytes = o.blocks * o.io_size;
  const auto t0 = Clock::now();
  switch (o.pattern) {
    case SpacePattern::kSeqWrite:
      for (uint64_t i = 0; i < o.blocks; ++i) {
        fill_block(o.seed, i, buf);
        space->pwrite(i * o.io_size, buf);
        oracle.push_back(static_cast<uint32_t>(i));
      }
      break;
    case SpacePattern::kRandWrite: {
      std::vector<uint32_t> order(o.blocks);
      std::iota(order.begin(), order.end(), 0u);
      std::shuffle(order.begin(), order.end(), rng);
      oracle.assign(o.blocks, 0);
      for (uint32_t b : order) {
        fill_block(o.seed, b, buf);
        space->pwrite(uint64_t{b} * o.io_size, buf);
        oracle[b] = b;
      }
      break;
    }
    case SpacePattern::kRandInsert:
      for (uint64_t i = 0; i < o.blocks; ++i) {
        const uint64_t at = rng() % (i + 1);
        fill_block(o.seed, i, buf);
        space->insert_range(at * o.io_size, buf);
        oracle.insert(oracle.begin() + static_cast<ptrdiff_t>(at), static_cast<uint32_t>(i));
      }
      break;
  }
  space->checkpoint();
  const auto t1 = Clock::now();
  w.seconds = secs(t0, t1);
  w.ops_per_sec = static_cast<double>(w.ops) / w.seconds;
  w.bytes_written = env->total_counters().bytes_written;
  w.bytes_read = env->total_counters().bytes_read;
  r.phases.push_back(w);
  const SpaceStats written = space->stats();

  uint64_t mismatches = 0;
  std::vector<uint8_t> expect(o.io_size);
  auto read_phase = [&](std::string name, const std::vector<uint32_t>& order) {
    env->reset_counters();
    PhaseReport p;
    p.name = std::move(name);
    p.ops = order.size();
    const auto a = Clock::now();
    for (uint32_t b : order) {
      space->pread_into(uint64_t{b} * o.io_size, buf);
      if (o.verify) {
        fill_block(o.seed, oracle[b], expect);
        if (buf != expect) ++mismatches;
      }
    }
    const auto z = Clock::now();
    p.seconds = secs(a, z);
    p.ops_per_sec = static_cast<double>(p.ops) / p.seconds;
    p.bytes_written = env->total_counters().bytes_written;
    p.bytes_read = env->total_counters().bytes_read;
    r.phases.push_back(p);
  };
  std::vector<uint32_t> order(o.blocks);
  std::iota(order.begin(), order.end(), 0u);
  read_phase("seq-read", order);
  std::shuffle(order.begin(), order.end(), rng);
  read_phase("rand-read", order);

  const SpaceStats st = space->stats();
  r.counter("size", st.size);
  r.counter("extents", st.extent_count);
  r.counter("tree_height", st.tree_height);
  // Per-file bytes of the write phase; the read phases reset the counters.
  r.counter("data_bytes_written", written.data_bytes_written);
  r.counter("log_bytes_written", written.log_bytes_written);
  r.counter("tree_bytes_written", written.tree_bytes_written);
  r.counter("gc_passes", st.gc_passes);
  r.counter("checkpoints", st.checkpoints);
  r.counter("verified_blocks", o.verify ? 2 * o.blocks : 0);
  r.counter("mismatched_blocks", mismatches);
  space->close();
  if (mismatches > 0) {
    throw BenchFailure("space-bench: " + std::to_string(mismatches) + " blocks differ from the oracle");
  }
  return r;
}

}  // namespace flex::bench
