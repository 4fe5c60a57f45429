// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "flex/db_log.hpp"
#include "flex/flexspace.hpp"
#include "flex/interval_cache.hpp"
#include "flex/memtable.hpp"
#include "flex/sparse_index.hpp"

namespace flex {

struct DbConfig {
  SpaceConfig space;
  uint64_t memtable_bytes = uint64_t{8} << 20;
  uint64_t interval_max_bytes = uint64_t{16} << 10;
  uint64_t interval_max_items = 16;
  size_t cache_intervals = 16384;
  uint64_t rebuild_stride = uint64_t{16} << 10;
  uint64_t commit_yield_pairs = 1000;
  size_t index_capacity = 64;
  bool wal_sync_each_op = false;
  size_t wal_buffer_bytes = size_t{64} << 10;
  // Without a committer thread, a full MemTable is committed by the writer.
  bool background_commit = true;
  // Runs check_invariants() after every commit.
  bool check_after_commit = false;
};

struct DbStats {
  uint64_t intervals = 0;
  uint64_t index_height = 0;
  uint64_t cache_resident = 0;
  uint64_t cache_hits = 0;
  uint64_t cache_misses = 0;
  uint64_t cache_evictions = 0;
  uint64_t commits = 0;
  uint64_t pairs_committed = 0;
  uint64_t interval_splits = 0;
  uint64_t interval_merges = 0;
  uint64_t defrags = 0;
  uint64_t rebuild_read_extent_calls = 0;
  uint64_t rebuild_hole_warnings = 0;
  uint64_t wal_records_replayed = 0;
  uint64_t wal_bytes_written = 0;
  uint64_t manifest_bytes_written = 0;
  uint64_t total_bytes_written = 0;  // every store file
  SpaceStats space;
};

class FlexDB;

// Ascending scan over MemTables and the space. MemTable entries shadow the
// space; tombstones hide keys. Must not outlive its store.
class DbIterator {
 public:
  bool valid() const { return valid_; }
  const std::string& key() const { return key_; }
  const std::string& value() const { return value_; }
  void next();

 private:
  friend class FlexDB;
  DbIterator(const FlexDB* db, std::vector<std::shared_ptr<MemTable>> mems, std::string_view start);
  void advance(std::string after, bool inclusive);
  void refill_space(std::string_view after, bool inclusive);

  const FlexDB* db_;
  std::vector<std::shared_ptr<MemTable>> mems_;  // newest first
  std::vector<std::pair<std::string, std::string>> space_buf_;
  size_t space_pos_ = 0;
  bool space_done_ = false;
  bool valid_ = false;
  std::string key_;
  std::string value_;
};

// Sorted KV store over one FlexSpace. Files: the space's files, "wal-0",
// "wal-1" and "manifest".
class FlexDB {
 public:
  static inline const std::string kManifestFile = "manifest";
  static inline const std::string kWalFiles[2] = {"wal-0", "wal-1"};

  static std::unique_ptr<FlexDB> open(StorageEnv& env, const DbConfig& config = {});
  static std::unique_ptr<FlexDB> open(const std::filesystem::path& dir, const DbConfig& config = {});

  ~FlexDB();
  FlexDB(const FlexDB&) = delete;
  FlexDB& operator=(const FlexDB&) = delete;

  // Commits everything, then closes the space.
  void close();
  // Drops the store without further I/O, as if the process died.
  void abandon();

  void put(std::string_view key, std::string_view value);
  void del(std::string_view key);
  std::optional<std::string> get(std::string_view key) const;
  DbIterator seek(std::string_view key) const;

  // Commits every buffered update to the space.
  void flush();
  // Makes every completed put/del durable in the WAL.
  void sync();

  DbStats stats() const;
  std::vector<IntervalInfo> intervals() const;
  IntervalInfo interval_for(std::string_view key) const;
  const DbConfig& config() const { return config_; }
  FlexSpace& space() { return *space_; }
  // Full decode of the space against the index and cache. Throws std::logic_error.
  void check_invariants() const;

 private:
  friend class DbIterator;

  FlexDB(StorageEnv& env, std::unique_ptr<StorageEnv> owned, const DbConfig& config);
  void start();
  void start_or_abandon();
  void rebuild_index();
  void check_usable() const;
  void write(dblog::WalOp op, std::string_view key, std::string_view value);
  void rotate();
  void wait_for_commit(std::unique_lock<std::mutex>& mem_lock);
  void commit_immutable();
  void committer_loop();
  void stop_committer();

  // The callers below hold db_mu_ (shared for load, exclusive for the rest).
  std::shared_ptr<CachedInterval> load(IntervalEntry* e) const;
  void apply(const MemTable::Entry& entry);
  bool oversized(const IntervalEntry* e) const;
  void split_interval(IntervalEntry* e, const CachedInterval& ci);
  bool try_merge(IntervalEntry* a);
  void merge_around(IntervalEntry* e);

  StorageEnv& env_;
  std::unique_ptr<StorageEnv> owned_env_;
  DbConfig config_;
  std::unique_ptr<FlexSpace> space_;
  std::unique_ptr<StorageFile> manifest_file_;
  std::unique_ptr<StorageFile> wal_files_[2];
  dblog::Manifest manifest_;

  mutable std::shared_mutex db_mu_;  // sparse index and space contents
  SparseIndex index_;
  mutable std::mutex cache_mu_;
  mutable IntervalCache cache_;

  std::mutex write_mu_;  // serializes writers, flush and sync
  mutable std::mutex mem_mu_;
  std::condition_variable mem_cv_;
  std::shared_ptr<MemTable> mutable_;
  std::shared_ptr<MemTable> immutable_;
  uint64_t immutable_gen_ = 0;
  uint64_t gen_ = 0;  // generation of the mutable MemTable and its WAL
  std::unique_ptr<dblog::WalWriter> wal_;
  std::thread committer_;
  bool stop_ = false;
  std::exception_ptr bg_error_;
  bool closed_ = false;

  std::atomic<uint64_t> commits_{0};
  std::atomic<uint64_t> pairs_committed_{0};
  uint64_t splits_ = 0;
  uint64_t merges_ = 0;
  uint64_t defrags_ = 0;
  uint64_t rebuild_calls_ = 0;
  uint64_t rebuild_holes_ = 0;
  uint64_t replayed_ = 0;
};

}  // namespace flex
