// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "flex/status.hpp"

namespace flex {

// Physical addresses and leaf partial offsets are 48-bit quantities. The
// largest physical address marks a hole (unmapped logical range).
inline constexpr uint64_t kAddressBits = 48;
inline constexpr uint64_t kUnmapped = (uint64_t{1} << kAddressBits) - 1;
inline constexpr uint64_t kMaxPartialOffset = (uint64_t{1} << kAddressBits) - 1;
inline constexpr uint64_t kMaxExtentLength = UINT32_MAX;
inline constexpr uint64_t kNoSlot = UINT64_MAX;

struct ExtentEntry {
  uint64_t partial_offset = 0;
  uint32_t length = 0;
  uint64_t phys = kUnmapped;

  bool mapped() const { return phys != kUnmapped; }
  friend bool operator==(const ExtentEntry&, const ExtentEntry&) = default;
};

// One piece of a logical range translated to physical space.
struct MappingRun {
  uint64_t phys = kUnmapped;
  uint64_t length = 0;

  bool mapped() const { return phys != kUnmapped; }
  friend bool operator==(const MappingRun&, const MappingRun&) = default;
};

struct ExtentInfo {
  uint64_t start = 0;
  uint64_t phys = kUnmapped;
  uint32_t length = 0;

  bool mapped() const { return phys != kUnmapped; }
  friend bool operator==(const ExtentInfo&, const ExtentInfo&) = default;
};

// Plain-value image of a subtree. Used to build trees from explicit node
// contents (worked examples, persistence) and to inspect them.
struct NodeLayout {
  std::vector<ExtentEntry> extents;  // leaf only
  std::vector<int64_t> pivots;       // internal: children.size() - 1 entries
  std::vector<int64_t> shifts;       // internal: one per child
  std::vector<NodeLayout> children;  // empty for leaves
  uint64_t slot = kNoSlot;           // persisted position, if any

  bool leaf() const { return children.empty(); }
  friend bool operator==(const NodeLayout& a, const NodeLayout& b) {
    return a.extents == b.extents && a.pivots == b.pivots && a.shifts == b.shifts &&
           a.children == b.children;
  }
};

struct TreeOptions {
  // Maximum entries per node (extents in a leaf, children in an internal node).
  size_t capacity = 64;
  // A leaf whose largest partial offset exceeds this value is rebased.
  uint64_t rebase_threshold = uint64_t{1} << 47;
};

struct TreeStats {
  uint64_t ops = 0;
  uint64_t nodes_modified = 0;  // excludes split/merge restructuring
  uint64_t splits = 0;
  uint64_t merges = 0;
  uint64_t rebases = 0;
};

// Receives dirtied nodes during a copy-on-write commit. Slots handed to
// release() belong to the previous version and may only be reused once the
// new version is durable.
class NodeSink {
 public:
  virtual ~NodeSink() = default;
  virtual uint64_t write_leaf(std::span<const ExtentEntry> entries) = 0;
  virtual uint64_t write_internal(std::span<const int64_t> pivots,
                                  std::span<const int64_t> shifts,
                                  std::span<const uint64_t> child_slots) = 0;
  virtual void release(uint64_t slot) = 0;
};

namespace detail {

struct Node {
  explicit Node(bool is_leaf) : leaf(is_leaf) {}
  virtual ~Node() = default;

  bool leaf;
  bool dirty = true;
  uint64_t slot = kNoSlot;
  uint64_t touch_epoch = 0;
};

struct LeafNode final : Node {
  LeafNode() : Node(true) {}
  std::vector<ExtentEntry> entries;
};

struct InternalNode final : Node {
  InternalNode() : Node(false) {}
  // pivots[i] is the left boundary of children[i + 1], relative to this
  // node's base (the shift sum of the path leading to it).
  std::vector<int64_t> pivots;
  std::vector<int64_t> shifts;
  std::vector<std::unique_ptr<Node>> children;
};

}  // namespace detail

// Extent index over a byte-granular logical address space. Every child
// pointer carries a signed shift; an entry's effective offset is its partial
// offset plus the shifts along its root-to-leaf path, so inserting or
// collapsing a range rewrites O(height) nodes instead of every later extent.
//
// Not internally synchronized: one writer or many readers at a time.
class FlexTree {
 public:
  explicit FlexTree(TreeOptions options = {});
  ~FlexTree();
  FlexTree(FlexTree&&) noexcept;
  FlexTree& operator=(FlexTree&&) noexcept;
  FlexTree(const FlexTree&) = delete;
  FlexTree& operator=(const FlexTree&) = delete;

  static FlexTree from_layout(const NodeLayout& root, TreeOptions options = {},
                              int64_t root_shift = 0);

  uint64_t size() const { return size_; }
  bool empty() const { return size_ == 0; }

  // Inserts [offset, offset + length) mapped to phys, shifting everything at
  // or after offset forward. With a non-zero coalesce_limit, a mapped insert
  // that directly continues the preceding extent both logically and
  // physically extends that extent instead, up to coalesce_limit bytes.
  void insert_range(uint64_t offset, uint64_t length, uint64_t phys,
                    uint64_t coalesce_limit = 0);

  // Removes [offset, offset + length) and shifts later data backward.
  // Returns the removed pieces in logical order; holes carry kUnmapped.
  std::vector<MappingRun> collapse_range(uint64_t offset, uint64_t length);

  // Overwrites [offset, offset + length) without shifting anything outside
  // the range. Writing past the end first fills the gap with a hole.
  std::vector<MappingRun> write_range(uint64_t offset, uint64_t length, uint64_t phys,
                                      uint64_t coalesce_limit = 0);

  std::vector<MappingRun> query_range(uint64_t offset, uint64_t length) const;
  ExtentInfo find_extent(uint64_t offset) const;

  // Points a sub-run of one mapped extent at new_phys. No offsets move.
  void remap(uint64_t offset, uint64_t length, uint64_t new_phys);

  // Visits every extent in logical order as fn(const ExtentInfo&).
  template <typename Fn>
  void for_each_extent(Fn&& fn) const;

  size_t extent_count() const { return extent_count_; }
  size_t height() const;
  size_t node_count() const;
  const TreeOptions& options() const { return options_; }
  const TreeStats& stats() const { return stats_; }
  // Nodes whose contents changed during the most recent public operation,
  // not counting nodes created or merged by restructuring.
  uint64_t last_op_nodes_modified() const { return last_op_modified_; }

  int64_t root_shift() const { return root_shift_; }
  NodeLayout layout() const;
  std::string debug_dump() const;
  // Throws std::logic_error describing the first violated structural rule.
  void check_invariants() const;

  // Copy-on-write commit: writes every dirty node through sink and returns
  // the slot of the root.
  uint64_t persist(NodeSink& sink);
  bool has_dirty_nodes() const;

 private:
  struct PathStep {
    detail::InternalNode* node;
    size_t index;
    int64_t base;
  };
  using Path = std::vector<PathStep>;

  void begin_op();
  void touch(detail::Node* node);
  size_t node_size(const detail::Node* node) const;
  detail::LeafNode* descend_for_update(uint64_t offset, Path& path, int64_t& leaf_base);
  detail::LeafNode* descend(uint64_t offset, int64_t& leaf_base) const;
  void split_child(detail::InternalNode* parent, size_t index);
  void shift_after_path(const Path& path, int64_t delta);
  void maybe_rebase(detail::LeafNode* leaf, const Path& path);
  void rebalance_after_removal(Path& path, detail::Node* node);
  void merge_children(detail::InternalNode* parent, size_t left_index);
  void borrow_child(detail::InternalNode* parent, size_t index, size_t from);
  void collapse_root();
  void retire(std::unique_ptr<detail::Node> node);
  void insert_one(uint64_t offset, uint32_t length, uint64_t phys, uint64_t coalesce_limit);
  MappingRun collapse_one(uint64_t offset, uint64_t length);

  TreeOptions options_;
  std::unique_ptr<detail::Node> root_;
  int64_t root_shift_ = 0;
  uint64_t size_ = 0;
  size_t extent_count_ = 0;
  uint64_t epoch_ = 0;
  uint64_t last_op_modified_ = 0;
  TreeStats stats_;
  std::vector<uint64_t> retired_slots_;
  Path path_;  // reused by mutations to avoid a per-op allocation
};

// Forward scan over leaves. Tracks the shift sums along the current path so
// effective offsets stay exact while crossing into sibling subtrees.
class LeafCursor {
 public:
  LeafCursor(const detail::Node* root, int64_t root_shift);

  // Positions at the extent containing offset (or the first extent).
  void seek(uint64_t offset);
  void seek_first();
  bool valid() const { return leaf_ != nullptr && index_ < leaf_->entries.size(); }
  void next();

  const ExtentEntry& entry() const { return leaf_->entries[index_]; }
  uint64_t start() const { return static_cast<uint64_t>(base_ + static_cast<int64_t>(entry().partial_offset)); }

 private:
  struct Frame {
    const detail::InternalNode* node;
    size_t index;
    int64_t base;
  };
  void descend_leftmost(const detail::Node* node, int64_t base);
  void advance_leaf();

  const detail::Node* root_;
  int64_t root_shift_;
  std::vector<Frame> stack_;
  const detail::LeafNode* leaf_ = nullptr;
  int64_t base_ = 0;
  size_t index_ = 0;
};

template <typename Fn>
void FlexTree::for_each_extent(Fn&& fn) const {
  if (size_ == 0) return;
  LeafCursor cursor(root_.get(), root_shift_);
  for (cursor.seek_first(); cursor.valid(); cursor.next()) {
    const auto& e = cursor.entry();
    fn(ExtentInfo{cursor.start(), e.phys, e.length});
  }
}

}  // namespace flex
