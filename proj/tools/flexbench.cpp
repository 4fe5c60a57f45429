// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

// flexbench: index, space and KV benchmarks plus the crash suite.
// Each subcommand prints one structured report (JSON, stable key order).

#include <CLI11.hpp>

#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "flex/bench/bench.hpp"
#include "flex/status.hpp"

namespace {

using namespace flex;
using namespace flex::bench;

struct Common {
  std::string output;
};

int emit(const Common& c, const BenchReport& r) {
  const std::string text = r.to_text();
  if (c.output.empty() || c.output == "-") {
    std::cout << text << "\n";
  } else {
    std::ofstream f(c.output);
    if (!f) {
      std::cerr << "flexbench: cannot open " << c.output << "\n";
      return 2;
    }
    f << text << "\n";
  }
  for (const auto& msg : r.failures) std::cerr << "FAIL: " << msg << "\n";
  return r.passed() ? 0 : 1;
}

template <typename Parse>
auto parsed(const std::string& name, const std::string& value, Parse parse) {
  auto v = parse(value);
  if (!v) throw Error(Errc::kInvalidArgument, "unknown " + name + " " + value);
  return *v;
}

void add_space_flags(CLI::App* app, SpaceConfig& cfg) {
  app->add_option("--segment-size", cfg.segment_size, "data segment size in bytes");
  app->add_option("--max-extent", cfg.max_extent, "largest extent in bytes");
  app->add_option("--max-segments", cfg.max_segments, "data file capacity in segments");
  app->add_option("--reserved-segments", cfg.reserved_free_segments, "free segments kept for GC");
  app->add_option("--log-threshold", cfg.log_size_threshold, "log size that triggers a checkpoint");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FlexTree / FlexSpace / FlexDB benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();  // -o may follow the subcommand
  Common common;
  app.add_option("-o,--output", common.output, "write the report here instead of stdout");

  // index-bench
  IndexBenchOptions io;
  auto* index_cmd = app.add_subcommand("index-bench", "extent index micro-benchmark");
  std::string index_kind = "flextree", index_op = "insert";
  index_cmd->add_option("--index", index_kind, "index kind")
      ->check(CLI::IsMember({"flextree", "bplustree", "sorted-array"}));
  index_cmd->add_option("--op", index_op, "measured operation")
      ->check(CLI::IsMember({"insert", "append", "lookup", "range-query"}));
  index_cmd->add_option("--extents", io.extents, "extents appended before the measured ops");
  index_cmd->add_option("--ops", io.ops, "measured ops");
  index_cmd->add_option("--extent-length", io.extent_length, "bytes per extent");
  index_cmd->add_option("--range-extents", io.range_extents, "range-query length in extents");
  index_cmd->add_option("--capacity", io.capacity, "node capacity");
  index_cmd->add_option("--seed", io.seed);
  index_cmd->add_flag("--check", io.check, "run the structural check afterwards");

  // space-bench
  SpaceBenchOptions so;
  std::string space_dir;
  auto* space_cmd = app.add_subcommand("space-bench", "FlexSpace I/O benchmark");
  std::string pattern = "rand-insert";
  space_cmd->add_option("--pattern", pattern, "write pattern")
      ->check(CLI::IsMember({"rand-insert", "rand-write", "seq-write"}));
  space_cmd->add_option("--io-size", so.io_size, "bytes per op");
  space_cmd->add_option("--blocks", so.blocks, "ops in the write phase");
  space_cmd->add_option("--seed", so.seed);
  space_cmd->add_option("--dir", space_dir, "store on disk here (default: memory)");
  space_cmd->add_flag("!--no-verify", so.verify, "skip the read-back check");
  add_space_flags(space_cmd, so.config);

  // kv-bench
  KvBenchOptions ko;
  std::string workload = "A";
  std::string preset = "udb";
  std::string dist_name;
  std::optional<uint64_t> key_size, value_size;
  std::optional<double> p_read, p_update, p_insert, p_scan, p_rmw;
  uint64_t keys = 100000, ops = 100000, threads = 1, seed = 1, scan_length = 50;
  std::string kv_dir;
  auto* kv_cmd = app.add_subcommand("kv-bench", "FlexDB YCSB-style benchmark");
  kv_cmd->add_option("--workload", workload, "YCSB workload A-F, or 'custom'");
  kv_cmd->add_option("--preset", preset, "key/value size preset: zippydb, udb, sys");
  kv_cmd->add_option("--distribution", dist_name,
                     "sequential, uniform, zipfian, zipfian-composite, latest (overrides the workload)");
  kv_cmd->add_option("--keys", keys, "keys loaded before the run");
  kv_cmd->add_option("--ops", ops, "run-phase ops");
  kv_cmd->add_option("--threads", threads, "client threads");
  kv_cmd->add_option("--seed", seed);
  kv_cmd->add_option("--scan-length", scan_length);
  kv_cmd->add_option("--key-size", key_size, "override the preset key size");
  kv_cmd->add_option("--value-size", value_size, "override the preset value size");
  kv_cmd->add_option("--read", p_read, "read fraction (custom mix)");
  kv_cmd->add_option("--update", p_update, "update fraction (custom mix)");
  kv_cmd->add_option("--insert", p_insert, "insert fraction (custom mix)");
  kv_cmd->add_option("--scan", p_scan, "scan fraction (custom mix)");
  kv_cmd->add_option("--rmw", p_rmw, "read-modify-write fraction (custom mix)");
  kv_cmd->add_option("--dir", kv_dir, "store on disk here (default: memory)");
  kv_cmd->add_option("--memtable", ko.db.memtable_bytes, "MemTable size in bytes");
  kv_cmd->add_option("--cache-intervals", ko.db.cache_intervals, "interval cache capacity");
  kv_cmd->add_option("--stride", ko.db.rebuild_stride, "rebuild probe stride in bytes");
  kv_cmd->add_flag("--sync-each-op", ko.db.wal_sync_each_op, "sync the WAL after every write");
  add_space_flags(kv_cmd, ko.db.space);

  // crash-suite
  CrashSuiteOptions co;
  auto* crash_cmd = app.add_subcommand("crash-suite", "crash injection over a mixed FlexSpace + FlexDB script");
  crash_cmd->add_option("--seed", co.seed);
  crash_cmd->add_option("--injections", co.injections, "crash points to test");
  crash_cmd->add_option("--script-ops", co.script_ops, "ops in the generated script");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*index_cmd) {
      io.kind = parsed("index", index_kind, parse_index_kind);
      io.op = parsed("op", index_op, parse_index_op);
      return emit(common, run_index_bench(io));
    }
    if (*space_cmd) {
      so.pattern = parsed("pattern", pattern, parse_space_pattern);
      so.dir = space_dir;
      return emit(common, run_space_bench(so));
    }
    if (*kv_cmd) {
      const auto p = find_preset(preset);
      if (!p) throw Error(Errc::kInvalidArgument, "unknown preset " + preset);
      WorkloadSpec s;
      if (workload == "custom") {
        s.name = "custom";
        s.distribution = Distribution::kZipfian;
        s.key_count = keys;
        s.key_size = p->key_size;
        s.value_size = p->value_size;
        s.op_count = ops;
        s.seed = seed;
        s.mix = {};
      } else {
        if (workload.size() != 1) throw Error(Errc::kInvalidArgument, "workload must be A-F or custom");
        s = ycsb(static_cast<char>(std::toupper(static_cast<unsigned char>(workload[0]))), keys, *p, ops, seed);
      }
      if (!dist_name.empty()) {
        const auto d = parse_distribution(dist_name);
        if (!d) throw Error(Errc::kInvalidArgument, "unknown distribution " + dist_name);
        s.distribution = *d;
      }
      if (p_read) s.mix.read = *p_read;
      if (p_update) s.mix.update = *p_update;
      if (p_insert) s.mix.insert = *p_insert;
      if (p_scan) s.mix.scan = *p_scan;
      if (p_rmw) s.mix.read_modify_write = *p_rmw;
      if (key_size) s.key_size = *key_size;
      if (value_size) s.value_size = *value_size;
      s.threads = static_cast<unsigned>(threads);
      s.scan_length = scan_length;
      ko.spec = s;
      ko.dir = kv_dir;
      return emit(common, run_kv_bench(ko));
    }
    if (*crash_cmd) return emit(common, run_crash_suite(co));
  } catch (const BenchFailure& e) {
    std::cerr << "FAIL: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "flexbench: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
