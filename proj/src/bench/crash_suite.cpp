// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include "flex/bench/bench.hpp"
#include "flex/status.hpp"

namespace flex::bench {

namespace {

enum class Kind { kSpInsert, kSpCollapse, kSpWrite, kSpBarrier, kSpCheckpoint, kSpGc, kDbPut, kDbDel, kDbSync, kDbFlush };

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::kSpInsert: return "space.insert_range";
    case Kind::kSpCollapse: return "space.collapse_range";
    case Kind::kSpWrite: return "space.pwrite";
    case Kind::kSpBarrier: return "space.barrier";
    case Kind::kSpCheckpoint: return "space.checkpoint";
    case Kind::kSpGc: return "space.gc";
    case Kind::kDbPut: return "db.put";
    case Kind::kDbDel: return "db.del";
    case Kind::kDbSync: return "db.sync";
    case Kind::kDbFlush: return "db.flush";
  }
  return "?";
}

struct ScriptOp {
  Kind kind;
  uint64_t off = 0;
  uint64_t len = 0;
  uint64_t data_seed = 0;
  std::string key;
  std::string value;
};

SpaceConfig crash_space_config() {
  SpaceConfig c;
  c.segment_size = 64 << 10;
  c.max_extent = 2 << 10;
  c.reserved_free_segments = 4;
  c.max_segments = 32;
  c.log_size_threshold = 64 << 10;
  c.log_buffer_entries = 256;
  c.tree_capacity = 16;
  c.gc_batch = 2;
  return c;
}

DbConfig crash_db_config() {
  DbConfig c;
  c.space = crash_space_config();
  c.memtable_bytes = 16 << 10;
  c.cache_intervals = 64;
  c.index_capacity = 8;
  c.wal_buffer_bytes = 4 << 10;
  c.background_commit = false;  // crash points stay reproducible
  return c;
}

std::vector<uint8_t> op_bytes(const ScriptOp& op) {
  std::vector<uint8_t> v(op.len);
  std::mt19937_64 rng(op.data_seed);
  for (auto& b : v) b = static_cast<uint8_t>(rng());
  return v;
}

// Ops are generated against a size-only model so the script is fixed by the seed.
std::vector<ScriptOp> make_script(uint64_t seed, uint64_t n) {
  constexpr uint64_t kSpaceCap = 192 << 10;
  constexpr uint64_t kKeys = 400;
  std::mt19937_64 rng(seed);
  std::vector<ScriptOp> ops;
  ops.reserve(n);
  uint64_t size = 0;
  for (uint64_t i = 0; i < n; ++i) {
    ScriptOp op{};
    const uint64_t r = rng() % 1000;
    op.data_seed = mix64(seed ^ (i << 20));
    if (r < 450) {
      // Space mutation.
      const uint64_t m = rng() % 10;
      if (size < 1024 || (m < 5 && size < kSpaceCap)) {
        op.kind = Kind::kSpInsert;
        op.off = rng() % (size + 1);
        op.len = 1 + rng() % 3000;
        size += op.len;
      } else if (m < 7 || size >= kSpaceCap) {
        op.kind = Kind::kSpCollapse;
        op.off = rng() % size;
        op.len = 1 + rng() % std::min<uint64_t>(size - op.off, 4000);
        size -= op.len;
      } else {
        op.kind = Kind::kSpWrite;
        op.off = rng() % size;
        op.len = 1 + rng() % 2500;
        size = std::max(size, op.off + op.len);
      }
    } else if (r < 470) {
      op.kind = Kind::kSpBarrier;
    } else if (r < 478) {
      op.kind = Kind::kSpCheckpoint;
    } else if (r < 482) {
      op.kind = Kind::kSpGc;
    } else if (r < 850) {
      op.kind = Kind::kDbPut;
      op.key = "key" + std::to_string(rng() % kKeys);
      op.value = std::string(rng() % 200, static_cast<char>('a' + rng() % 26));
    } else if (r < 970) {
      op.kind = Kind::kDbDel;
      op.key = "key" + std::to_string(rng() % kKeys);
    } else if (r < 990) {
      op.kind = Kind::kDbSync;
    } else {
      op.kind = Kind::kDbFlush;
    }
    ops.push_back(std::move(op));
  }
  return ops;
}

uint64_t hash_bytes(std::span<const uint8_t> b) {
  return mix64(std::hash<std::string_view>{}(std::string_view(reinterpret_cast<const char*>(b.data()), b.size())) ^
               b.size());
}

// Order-independent hash of a key/value set.
uint64_t pair_hash(std::string_view k, std::string_view v) {
  return mix64(std::hash<std::string_view>{}(k) ^ mix64(std::hash<std::string_view>{}(v) + 1));
}

uint64_t db_hash(const FlexDB& db, uint64_t* count = nullptr) {
  uint64_t h = 0;
  uint64_t n = 0;
  for (auto it = db.seek(""); it.valid(); it.next(), ++n) h += pair_hash(it.key(), it.value());
  if (count) *count = n;
  return h;
}

// One execution of the script on fresh storage.
struct Execution {
  MemEnv env;
  PrefixEnv space_env{env, "space/"};
  PrefixEnv db_env{env, "db/"};
  std::unique_ptr<FlexSpace> space;
  std::unique_ptr<FlexDB> db;
  size_t pos = 0;                    // script op in progress
  size_t space_snapshot_pos = 0;     // space state at the last completed barrier is SH[this]
  size_t db_durable_pos = 0;         // every db op before this is durable
  std::vector<uint64_t> boundaries;  // mutating-op counts at barrier completion

  Execution() {
    space = FlexSpace::open(space_env, crash_space_config());
    db = FlexDB::open(db_env, crash_db_config());
    space->set_commit_listener([this] {
      space_snapshot_pos = pos;
      boundaries.push_back(env.mutating_ops());
    });
  }

  void apply(const ScriptOp& op) {
    switch (op.kind) {
      case Kind::kSpInsert: space->insert_range(op.off, op_bytes(op)); break;
      case Kind::kSpCollapse: space->collapse_range(op.off, op.len); break;
      case Kind::kSpWrite: space->pwrite(op.off, op_bytes(op)); break;
      case Kind::kSpBarrier: space->barrier(); break;
      case Kind::kSpCheckpoint: space->checkpoint(); break;
      case Kind::kSpGc: space->gc(); break;
      case Kind::kDbPut: db->put(op.key, op.value); break;
      case Kind::kDbDel: db->del(op.key); break;
      case Kind::kDbSync: db->sync(); break;
      case Kind::kDbFlush: db->flush(); break;
    }
    if (op.kind == Kind::kDbSync || op.kind == Kind::kDbFlush) {
      db_durable_pos = pos + 1;
      boundaries.push_back(env.mutating_ops());
    }
  }
};

}  // namespace

BenchReport run_crash_suite(const CrashSuiteOptions& o) {
  BenchReport r;
  r.bench = "crash-suite";
  r.param("seed", std::to_string(o.seed));
  r.param("injections", std::to_string(o.injections));
  r.param("script_ops", std::to_string(o.script_ops));
  const auto t0 = std::chrono::steady_clock::now();

  const auto script = make_script(o.seed, o.script_ops);

  // Dry run: oracle hashes after every prefix of the script, plus the
  // write/sync counts at which barriers complete.
  std::vector<uint64_t> space_h{hash_bytes({})};
  std::vector<uint64_t> db_h{0};
  uint64_t total_ops = 0;
  std::vector<uint64_t> boundaries;
  {
    Execution dry;
    dry.env.reset_counters();
    const uint64_t base = dry.env.mutating_ops();
    std::vector<uint8_t> bytes;
    std::map<std::string, std::string> model;
    uint64_t dh = 0;
    for (size_t i = 0; i < script.size(); ++i) {
      const ScriptOp& op = script[i];
      dry.pos = i;
      dry.apply(op);
      switch (op.kind) {
        case Kind::kSpInsert: {
          const auto d = op_bytes(op);
          bytes.insert(bytes.begin() + static_cast<ptrdiff_t>(op.off), d.begin(), d.end());
          break;
        }
        case Kind::kSpCollapse:
          bytes.erase(bytes.begin() + static_cast<ptrdiff_t>(op.off),
                      bytes.begin() + static_cast<ptrdiff_t>(op.off + op.len));
          break;
        case Kind::kSpWrite: {
          const auto d = op_bytes(op);
          if (bytes.size() < op.off + d.size()) bytes.resize(op.off + d.size(), 0);
          std::copy(d.begin(), d.end(), bytes.begin() + static_cast<ptrdiff_t>(op.off));
          break;
        }
        case Kind::kDbPut: {
          auto it = model.find(op.key);
          if (it != model.end()) dh -= pair_hash(it->first, it->second);
          model[op.key] = op.value;
          dh += pair_hash(op.key, op.value);
          break;
        }
        case Kind::kDbDel: {
          auto it = model.find(op.key);
          if (it != model.end()) {
            dh -= pair_hash(it->first, it->second);
            model.erase(it);
          }
          break;
        }
        default: break;
      }
      space_h.push_back(hash_bytes(bytes));
      db_h.push_back(dh);
    }
    if (dry.space->pread(0, dry.space->size()) != bytes) {
      throw BenchFailure("crash-suite: dry run space content differs from its oracle");
    }
    if (db_hash(*dry.db) != dh) throw BenchFailure("crash-suite: dry run store content differs from its model");
    total_ops = dry.env.mutating_ops() - base;
    for (uint64_t b : dry.boundaries) boundaries.push_back(b - base);
    dry.db->close();
    dry.space->close();
  }
  if (total_ops == 0) throw BenchFailure("crash-suite: script issued no writes");

  // Injection points: the first write, then alternately a random write/sync
  // and one just before or after a completed barrier.
  std::mt19937_64 pick(mix64(o.seed + 17));
  std::vector<uint64_t> points;
  if (o.injections > 0) points.push_back(1);
  while (points.size() < o.injections) {
    uint64_t n;
    if (points.size() % 2 == 0 || boundaries.empty()) {
      n = 1 + pick() % total_ops;
    } else {
      const uint64_t b = boundaries[pick() % boundaries.size()];
      n = std::clamp<uint64_t>(b + (pick() % 2), 1, total_ops);
    }
    points.push_back(n);
  }

  uint64_t passed = 0;
  uint64_t drop_all = 0;
  uint64_t random_subset = 0;
  uint64_t recovered_latest = 0;
  for (size_t idx = 0; idx < points.size(); ++idx) {
    const uint64_t n = points[idx];
    const CrashMode mode = idx % 2 == 0 ? CrashMode::kDropAll : CrashMode::kRandomSubset;
    (mode == CrashMode::kDropAll ? drop_all : random_subset)++;
    std::string where = "injection " + std::to_string(idx) + " at write/sync #" + std::to_string(n) + " (" +
                        (mode == CrashMode::kDropAll ? "drop-all" : "random-subset") + ")";
    auto fail = [&](const std::string& why) { r.failures.push_back(where + ": " + why); };
    const size_t failures_before = r.failures.size();

    Execution ex;
    const uint64_t base = ex.env.mutating_ops();
    ex.env.arm_crash(n);
    bool crashed = false;
    try {
      for (ex.pos = 0; ex.pos < script.size(); ++ex.pos) ex.apply(script[ex.pos]);
    } catch (const SimulatedCrash&) {
      crashed = true;
    } catch (const std::exception& e) {
      if (!ex.env.crashed()) {
        fail(std::string("op failed without a crash: ") + e.what());
        continue;
      }
      crashed = true;
    }
    if (!crashed) {
      fail("script finished before the crash point (" + std::to_string(ex.env.mutating_ops() - base) + " writes)");
      continue;
    }
    const size_t j = ex.pos;
    where += " during op " + std::to_string(j) + " " + kind_name(script[j].kind);
    ex.db->abandon();
    ex.space->abandon();
    ex.env.restart(mode, mix64(o.seed ^ idx));

    try {
      auto space = FlexSpace::open(ex.space_env, crash_space_config());
      const auto got = space->pread(0, space->size());
      const uint64_t sh = hash_bytes(got);
      const bool space_ok = sh == space_h[ex.space_snapshot_pos] || sh == space_h[j] || sh == space_h[j + 1];
      space->check_accounting();

      auto db = FlexDB::open(ex.db_env, crash_db_config());
      uint64_t pairs = 0;
      const uint64_t dh = db_hash(*db, &pairs);
      size_t match = SIZE_MAX;
      for (size_t m = ex.db_durable_pos; m <= j + 1; ++m) {
        if (db_h[m] == dh) match = m;
      }
      db->check_invariants();

      if (n == 1 && (space->size() != 0 || pairs != 0)) fail("crash at the first write left data behind");
      if (!space_ok) {
        fail("space content (" + std::to_string(got.size()) + " bytes) matches neither the barrier snapshot (op " +
             std::to_string(ex.space_snapshot_pos) + ") nor the state around op " + std::to_string(j));
      }
      if (match == SIZE_MAX) {
        fail("store content (" + std::to_string(pairs) + " pairs) matches no prefix between op " +
             std::to_string(ex.db_durable_pos) + " and op " + std::to_string(j + 1));
      }
      // Both stores keep working after recovery.
      const std::vector<uint8_t> probe{1, 2, 3, 4};
      space->insert_range(0, probe);
      if (space->pread(0, 4) != probe) fail("space unusable after recovery");
      db->put("after-recovery", "ok");
      db->flush();
      if (db->get("after-recovery") != "ok") fail("store unusable after recovery");
      db->close();
      space->close();
      if (match == j + 1 || match == j) ++recovered_latest;
    } catch (const std::exception& e) {
      fail(std::string("recovery failed: ") + e.what());
    }
    if (r.failures.size() == failures_before) ++passed;
  }

  PhaseReport p;
  p.name = "crash-suite";
  p.ops = points.size();
  p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  p.ops_per_sec = static_cast<double>(p.ops) / p.seconds;
  r.phases.push_back(p);
  r.counter("script_writes", total_ops);
  r.counter("barrier_points", boundaries.size());
  r.counter("injections", points.size());
  r.counter("drop_all", drop_all);
  r.counter("random_subset", random_subset);
  r.counter("passed", passed);
  r.counter("failed", points.size() - passed);
  r.counter("store_recovered_to_crash_op", recovered_latest);
  return r;
}

}  // namespace flex::bench
