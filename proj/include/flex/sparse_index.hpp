// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace flex {

// One interval of consecutive KV records in the space. Addresses are stable
// for the lifetime of the entry.
struct IntervalEntry {
  std::string key;       // smallest key in the interval; empty for the first interval
  int64_t partial = 0;   // offset relative to the shifts on the search path
  uint64_t size = 0;     // bytes
  uint64_t count = 0;    // records; valid when count_known
  bool count_known = true;
  bool fragmented = false;
  int64_t cache_slot = -1;  // owned by IntervalCache

 private:
  friend class SparseIndex;
  struct SparseLeaf* leaf = nullptr;
};

struct IntervalInfo {
  std::string key;
  uint64_t offset = 0;
  uint64_t size = 0;
  uint64_t count = 0;
  bool count_known = true;
  bool fragmented = false;
  friend bool operator==(const IntervalInfo&, const IntervalInfo&) = default;
};

struct SparseNode {
  bool is_leaf = false;
  int64_t shift = 0;  // applied to every offset below this node
  struct SparseInternal* parent = nullptr;
  virtual ~SparseNode() = default;
};

struct SparseLeaf : SparseNode {
  std::vector<std::unique_ptr<IntervalEntry>> entries;
  SparseLeaf* prev = nullptr;
  SparseLeaf* next = nullptr;
};

struct SparseInternal : SparseNode {
  std::vector<std::unique_ptr<SparseNode>> children;
  std::vector<std::string> keys;  // keys[i] bounds child i from below; keys[0] unused
};

// Volatile B+-tree from interval index keys to interval offsets. Offsets are
// stored as partial offsets plus per-node shifts, so resizing one interval
// shifts all later intervals in O(fanout * height). Always holds at least the
// first interval, which has an empty key and starts at offset 0.
class SparseIndex {
 public:
  explicit SparseIndex(size_t capacity = 64);
  ~SparseIndex();
  SparseIndex(const SparseIndex&) = delete;
  SparseIndex& operator=(const SparseIndex&) = delete;

  // Resets to a single empty first interval.
  void clear();

  // Interval holding key: the one with the greatest index key <= key.
  IntervalEntry* find(std::string_view key) const;
  uint64_t offset(const IntervalEntry* e) const;
  IntervalEntry* first() const;
  IntervalEntry* last() const;
  IntervalEntry* next(const IntervalEntry* e) const;
  IntervalEntry* prev(const IntervalEntry* e) const;

  // Changes e's size by delta and shifts every later interval by delta.
  void resize(IntervalEntry* e, int64_t delta);
  // Cuts e at byte `at`; the new right part gets key and count right_count.
  IntervalEntry* split(IntervalEntry* e, uint64_t at, std::string key, uint64_t right_count);
  // Appends a new last interval at the end of the space.
  IntervalEntry* push_back(std::string key, uint64_t size, uint64_t count, bool count_known);
  // Folds the interval after e into e.
  void merge_next(IntervalEntry* e);
  // Removes an empty interval other than the first.
  void remove(IntervalEntry* e);
  // Replaces the key of e with one that keeps the key order.
  void set_key(IntervalEntry* e, std::string key);

  size_t size() const { return count_; }
  size_t height() const;
  uint64_t total_bytes() const;
  std::vector<IntervalInfo> intervals() const;
  // Throws std::logic_error on a broken structure, order or tiling.
  void check_invariants() const;

 private:
  IntervalEntry* insert_after(IntervalEntry* e, std::unique_ptr<IntervalEntry> fresh);
  void split_node(SparseNode* node);
  void erase_entry(IntervalEntry* e);
  void fix_pivots(SparseNode* node);
  void unlink(SparseNode* node);
  void collapse_root();
  void maybe_merge(SparseNode* node);
  static size_t child_index(const SparseInternal* parent, const SparseNode* child);
  static size_t entry_index(const IntervalEntry* e);
  static const std::string& first_key(const SparseNode* node);

  size_t capacity_;
  std::unique_ptr<SparseNode> root_;
  size_t count_ = 0;
};

}  // namespace flex
