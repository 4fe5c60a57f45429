// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <shared_mutex>
#include <span>
#include <vector>

#include "flex/flextree.hpp"
#include "flex/space_format.hpp"
#include "flex/storage.hpp"

namespace flex {

struct SpaceConfig {
  uint64_t segment_size = uint64_t{4} << 20;
  uint64_t max_extent = uint64_t{128} << 10;  // segment_size / 32
  uint32_t utilization_num = 30;
  uint32_t utilization_den = 32;
  uint64_t reserved_free_segments = 64;
  uint64_t max_segments = 1024;  // data file capacity in segments
  uint64_t log_size_threshold = uint64_t{4} << 20;
  uint64_t log_buffer_entries = 4096;  // auto-commit once this many entries are buffered
  uint64_t tree_capacity = 64;
  uint64_t gc_batch = 8;  // victims relocated per GC pass

  // Throws Error(kInvalidArgument) when the bounds relating the fields fail.
  void validate() const;
  // Bytes of valid data the space may hold.
  uint64_t capacity_bytes() const;

  format::PersistedConfig to_persisted() const;
  static SpaceConfig from_persisted(const format::PersistedConfig& p);
};

enum class SegmentState : uint8_t { kFree, kOpen, kSealed, kPendingFree };

struct GcVictim {
  uint64_t segment = 0;
  uint64_t valid_before = 0;
};

struct GcReport {
  std::vector<GcVictim> victims;
  uint64_t relocated_bytes = 0;
  uint64_t reclaimed_bytes = 0;  // victim capacity minus relocated bytes
  uint64_t passes = 0;
};

struct SpaceStats {
  uint64_t version = 0;
  uint64_t size = 0;
  uint64_t extent_count = 0;
  uint64_t tree_height = 0;
  uint64_t segments_total = 0;
  uint64_t segments_free = 0;
  uint64_t segments_sealed = 0;
  uint64_t segments_pending_free = 0;
  uint64_t valid_bytes = 0;
  double utilization = 0;  // valid bytes / capacity_bytes
  uint64_t logical_bytes_admitted = 0;
  uint64_t data_bytes_written = 0;
  uint64_t log_bytes_written = 0;
  uint64_t tree_bytes_written = 0;
  uint64_t gc_passes = 0;
  uint64_t gc_relocated_bytes = 0;
  uint64_t checkpoints = 0;
  uint64_t log_commits = 0;
  uint64_t log_size = 0;
};

struct ExtentRead {
  uint64_t start = 0;   // logical start of the containing extent
  uint64_t length = 0;  // length of the extent (or hole)
  std::vector<uint8_t> bytes;
  uint64_t nread = 0;  // 0 for holes
};

// A persistent, byte-addressable space supporting insert_range and
// collapse_range. Files: "data" (segments), "tree" (CoW checkpoints of the
// extent index) and "log" (logical log of index operations since the last
// checkpoint). Readers share, mutators exclude, per handle.
class FlexSpace {
 public:
  static inline const std::string kDataFile = "data";
  static inline const std::string kTreeFile = "tree";
  static inline const std::string kLogFile = "log";

  // Opens the space stored in env, creating it if the tree file is empty.
  // An existing space keeps its persisted configuration.
  static std::unique_ptr<FlexSpace> open(StorageEnv& env, const SpaceConfig& config = {});
  static std::unique_ptr<FlexSpace> open(const std::filesystem::path& dir, const SpaceConfig& config = {});

  ~FlexSpace();
  FlexSpace(const FlexSpace&) = delete;
  FlexSpace& operator=(const FlexSpace&) = delete;

  // Commits outstanding state, checkpoints if anything changed, releases files.
  void close();
  // Drops the handle without writing anything, as if the process died.
  void abandon();

  uint64_t size() const;
  void pwrite(uint64_t offset, std::span<const uint8_t> data);
  std::vector<uint8_t> pread(uint64_t offset, uint64_t length) const;
  void pread_into(uint64_t offset, std::span<uint8_t> out) const;
  void insert_range(uint64_t offset, std::span<const uint8_t> data);
  void collapse_range(uint64_t offset, uint64_t length);
  ExtentRead read_extent(uint64_t offset, uint64_t maxlen) const;
  std::vector<MappingRun> query_range(uint64_t offset, uint64_t length) const;
  void defrag(uint64_t offset, uint64_t length);

  // One forced GC pass plus any passes needed to restore the free reserve.
  GcReport gc();
  // Makes every completed operation durable.
  void barrier();
  // Barrier, then a CoW commit of the index. Returns the new version.
  uint64_t checkpoint();

  uint64_t version() const;
  const SpaceConfig& config() const { return config_; }
  SpaceStats stats() const;
  std::vector<uint64_t> segment_valid_bytes() const;
  SegmentState segment_state(uint64_t segment) const;
  NodeLayout tree_layout() const;
  // Throws std::logic_error if per-segment valid bytes disagree with the index.
  void check_accounting() const;

  // Called under the writer lock after every completed barrier.
  void set_commit_listener(std::function<void()> fn);

 private:
  FlexSpace(StorageEnv& env, std::unique_ptr<StorageEnv> owned);

  void recover(const SpaceConfig& requested);
  void create(const SpaceConfig& requested);
  void load_tree(const format::TreeHeader& header);
  void replay_log();
  void apply_entry(const format::LogEntry& e);
  void apply_relocations(std::span<const format::LogEntry> group);
  void reinit_log(uint64_t base_version);
  void rebuild_segments();

  void check_open() const;
  void ensure_space(uint64_t net_growth, uint64_t raw_bytes);
  uint64_t allocate(uint64_t want, bool whole, uint64_t& granted);
  void open_segment();
  void seal_open_segment();
  void seal_if_full();
  void flush_open_segment();
  void read_phys(uint64_t phys, std::span<uint8_t> out) const;
  void add_valid(uint64_t phys, uint64_t length);
  void drop_runs(const std::vector<MappingRun>& runs);
  void put_data(uint64_t offset, std::span<const uint8_t> data, bool insert);
  void log(const format::LogEntry& e);
  void finish_mutation();
  void barrier_locked();
  void commit_log();
  uint64_t checkpoint_locked();
  GcReport gc_locked(bool force);
  bool gc_pass(GcReport& report);

  StorageEnv& env_;
  std::unique_ptr<StorageEnv> owned_env_;
  std::unique_ptr<StorageFile> data_;
  std::unique_ptr<StorageFile> tree_file_;
  std::unique_ptr<StorageFile> log_file_;
  SpaceConfig config_;
  mutable std::shared_mutex mu_;
  bool closed_ = false;

  FlexTree tree_;
  uint64_t version_ = 0;
  unsigned active_header_ = 0;
  std::vector<bool> slot_used_;

  std::vector<uint64_t> valid_;
  std::vector<SegmentState> state_;
  std::vector<uint64_t> pending_free_;
  uint64_t free_count_ = 0;
  uint64_t valid_total_ = 0;
  static constexpr uint64_t kNoSegment = UINT64_MAX;
  uint64_t open_seg_ = kNoSegment;
  uint64_t open_used_ = 0;
  uint64_t open_flushed_ = 0;
  std::vector<uint8_t> open_buf_;
  bool data_dirty_ = false;

  std::vector<format::LogEntry> log_buf_;
  uint64_t log_end_ = 0;
  uint64_t log_seq_ = 0;
  uint64_t base_version_ = 0;

  uint64_t logical_bytes_ = 0;
  uint64_t gc_passes_ = 0;
  uint64_t gc_relocated_ = 0;
  uint64_t checkpoints_ = 0;
  uint64_t log_commits_ = 0;
  std::function<void()> commit_listener_;
};

}  // namespace flex
