// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/bench/extent_index.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "flex/status.hpp"

namespace flex::bench {

std::string_view to_string(IndexKind k) {
  switch (k) {
    case IndexKind::kFlexTree: return "flextree";
    case IndexKind::kBPlusTree: return "bplustree";
    case IndexKind::kSortedArray: return "sorted-array";
  }
  return "?";
}

std::optional<IndexKind> parse_index_kind(std::string_view s) {
  for (auto k : {IndexKind::kFlexTree, IndexKind::kBPlusTree, IndexKind::kSortedArray}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

namespace {

void check_insert(uint64_t offset, uint64_t length, uint64_t size) {
  if (offset > size) throw Error(Errc::kOutOfRange, "insert offset beyond end of space");
  if (length == 0) throw Error(Errc::kInvalidArgument, "insert length must be positive");
  if (length > kMaxExtentLength) throw Error(Errc::kInvalidArgument, "extent longer than 32 bits");
}

void check_range(uint64_t offset, uint64_t length, uint64_t size) {
  if (offset > size || length > size - offset) throw Error(Errc::kOutOfRange, "range beyond end of space");
}

void fail(const std::string& what) { throw std::logic_error("extent index: " + what); }

struct Entry {
  uint64_t off;
  uint64_t len;
  uint64_t phys;
};

// ---- FlexTree ----------------------------------------------------------------

class FlexTreeIndex final : public ExtentIndex {
 public:
  explicit FlexTreeIndex(size_t capacity) : tree_(TreeOptions{.capacity = capacity}) {}

  void insert_range(uint64_t offset, uint64_t length, uint64_t phys) override {
    tree_.insert_range(offset, length, phys);
  }
  void collapse_range(uint64_t offset, uint64_t length) override { tree_.collapse_range(offset, length); }
  std::vector<MappingRun> query_range(uint64_t offset, uint64_t length) const override {
    return tree_.query_range(offset, length);
  }
  ExtentInfo find_extent(uint64_t offset) const override { return tree_.find_extent(offset); }
  uint64_t size() const override { return tree_.size(); }
  uint64_t extent_count() const override { return tree_.extent_count(); }
  std::optional<uint64_t> last_nodes_modified() const override { return tree_.last_op_nodes_modified(); }
  std::optional<uint64_t> last_entries_shifted() const override { return std::nullopt; }
  void check_invariants() const override { tree_.check_invariants(); }

 private:
  FlexTree tree_;
};

// ---- sorted array -----------------------------------------------------------

class SortedArrayIndex final : public ExtentIndex {
 public:
  void insert_range(uint64_t offset, uint64_t length, uint64_t phys) override {
    check_insert(offset, length, size_);
    shifted_ = 0;
    const size_t at = split_at(offset);
    shift_from(at, static_cast<int64_t>(length));
    v_.insert(v_.begin() + static_cast<ptrdiff_t>(at), Entry{offset, length, phys});
    size_ += length;
  }

  void collapse_range(uint64_t offset, uint64_t length) override {
    check_range(offset, length, size_);
    shifted_ = 0;
    if (length == 0) return;
    const size_t a = split_at(offset);
    const size_t b = split_at(offset + length);
    v_.erase(v_.begin() + static_cast<ptrdiff_t>(a), v_.begin() + static_cast<ptrdiff_t>(b));
    shift_from(a, -static_cast<int64_t>(length));
    size_ -= length;
  }

  std::vector<MappingRun> query_range(uint64_t offset, uint64_t length) const override {
    std::vector<MappingRun> runs;
    if (length == 0) return runs;
    check_range(offset, length, size_);
    size_t i = locate(offset);
    uint64_t pos = offset;
    while (length > 0) {
      const Entry& e = v_[i++];
      const uint64_t intra = pos - e.off;
      const uint64_t take = std::min(length, e.len - intra);
      runs.push_back(MappingRun{e.phys + intra, take});
      pos += take;
      length -= take;
    }
    return runs;
  }

  ExtentInfo find_extent(uint64_t offset) const override {
    if (offset >= size_) throw Error(Errc::kOutOfRange, "offset beyond end of space");
    const Entry& e = v_[locate(offset)];
    return ExtentInfo{e.off, e.phys, static_cast<uint32_t>(e.len)};
  }

  uint64_t size() const override { return size_; }
  uint64_t extent_count() const override { return v_.size(); }
  std::optional<uint64_t> last_nodes_modified() const override { return std::nullopt; }
  std::optional<uint64_t> last_entries_shifted() const override { return shifted_; }

  void check_invariants() const override {
    uint64_t pos = 0;
    for (const auto& e : v_) {
      if (e.off != pos || e.len == 0) fail("array entries are not contiguous");
      pos += e.len;
    }
    if (pos != size_) fail("array size mismatch");
  }

 private:
  // Index of the extent containing x (x < size_).
  size_t locate(uint64_t x) const {
    auto it = std::upper_bound(v_.begin(), v_.end(), x, [](uint64_t k, const Entry& e) { return k < e.off; });
    return static_cast<size_t>(it - v_.begin()) - 1;
  }

  // Makes an extent start at x; returns its index (v_.size() when x == size_).
  size_t split_at(uint64_t x) {
    if (x >= size_) return v_.size();
    const size_t i = locate(x);
    Entry& e = v_[i];
    if (e.off == x) return i;
    const uint64_t left = x - e.off;
    const Entry right{x, e.len - left, e.phys + left};
    e.len = left;
    v_.insert(v_.begin() + static_cast<ptrdiff_t>(i + 1), right);
    return i + 1;
  }

  void shift_from(size_t i, int64_t delta) {
    for (; i < v_.size(); ++i) {
      v_[i].off = static_cast<uint64_t>(static_cast<int64_t>(v_[i].off) + delta);
      ++shifted_;
    }
  }

  std::vector<Entry> v_;
  uint64_t size_ = 0;
  uint64_t shifted_ = 0;
};

// ---- B+-tree with absolute offsets ------------------------------------------

struct BNode {
  explicit BNode(bool l) : leaf(l) {}
  bool leaf;
  std::vector<Entry> entries;                   // leaf
  std::vector<uint64_t> seps;                   // internal: first offset in each child
  std::vector<std::unique_ptr<BNode>> children;  // internal
  BNode* prev = nullptr;                        // leaf chain
  BNode* next = nullptr;
  uint64_t epoch = 0;

  bool empty() const { return leaf ? entries.empty() : children.empty(); }
  size_t fanout() const { return leaf ? entries.size() : children.size(); }
  uint64_t first() const { return leaf ? entries.front().off : seps.front(); }
};

// Nodes may run underfull after collapses; empty nodes are removed.
class BPlusTreeIndex final : public ExtentIndex {
 public:
  explicit BPlusTreeIndex(size_t capacity) : cap_(std::max<size_t>(capacity, 4)), root_(std::make_unique<BNode>(true)) {}

  void insert_range(uint64_t offset, uint64_t length, uint64_t phys) override {
    check_insert(offset, length, size_);
    begin_op();
    if (offset < size_) {
      split_at(offset);
      shift(root_.get(), offset, static_cast<int64_t>(length));
    }
    insert_entry(Entry{offset, length, phys});
    size_ += length;
  }

  void collapse_range(uint64_t offset, uint64_t length) override {
    check_range(offset, length, size_);
    begin_op();
    if (length == 0) return;
    split_at(offset);
    split_at(offset + length);
    remove_range(root_.get(), offset, offset + length);
    shift(root_.get(), offset + length, -static_cast<int64_t>(length));
    while (!root_->leaf && root_->children.size() == 1) root_ = std::move(root_->children.front());
    if (root_->empty()) root_ = std::make_unique<BNode>(true);
    size_ -= length;
  }

  std::vector<MappingRun> query_range(uint64_t offset, uint64_t length) const override {
    std::vector<MappingRun> runs;
    if (length == 0) return runs;
    check_range(offset, length, size_);
    const BNode* leaf = descend(offset);
    size_t i = leaf_pos(leaf, offset);
    uint64_t pos = offset;
    while (length > 0) {
      if (i == leaf->entries.size()) {
        leaf = leaf->next;
        i = 0;
      }
      const Entry& e = leaf->entries[i++];
      const uint64_t intra = pos - e.off;
      const uint64_t take = std::min(length, e.len - intra);
      runs.push_back(MappingRun{e.phys + intra, take});
      pos += take;
      length -= take;
    }
    return runs;
  }

  ExtentInfo find_extent(uint64_t offset) const override {
    if (offset >= size_) throw Error(Errc::kOutOfRange, "offset beyond end of space");
    const BNode* leaf = descend(offset);
    const Entry& e = leaf->entries[leaf_pos(leaf, offset)];
    return ExtentInfo{e.off, e.phys, static_cast<uint32_t>(e.len)};
  }

  uint64_t size() const override { return size_; }
  uint64_t extent_count() const override { return count_; }
  std::optional<uint64_t> last_nodes_modified() const override { return modified_; }
  std::optional<uint64_t> last_entries_shifted() const override { return shifted_; }

  void check_invariants() const override {
    uint64_t pos = 0;
    uint64_t count = 0;
    const BNode* prev_leaf = nullptr;
    size_t leaf_depth = SIZE_MAX;
    check_node(root_.get(), 0, pos, count, prev_leaf, leaf_depth);
    if (prev_leaf && prev_leaf->next) fail("leaf chain runs past the last leaf");
    if (pos != size_ || count != count_) fail("size or count mismatch");
  }

 private:
  void begin_op() {
    ++epoch_;
    modified_ = 0;
    shifted_ = 0;
  }

  void touch(BNode* n) {
    if (n->epoch != epoch_) {
      n->epoch = epoch_;
      ++modified_;
    }
  }

  static size_t route(const BNode* n, uint64_t x) {
    auto it = std::upper_bound(n->seps.begin(), n->seps.end(), x);
    return it == n->seps.begin() ? 0 : static_cast<size_t>(it - n->seps.begin()) - 1;
  }

  static size_t leaf_pos(const BNode* leaf, uint64_t x) {
    auto it = std::upper_bound(leaf->entries.begin(), leaf->entries.end(), x,
                               [](uint64_t k, const Entry& e) { return k < e.off; });
    return it == leaf->entries.begin() ? 0 : static_cast<size_t>(it - leaf->entries.begin()) - 1;
  }

  BNode* descend(uint64_t x) const {
    BNode* n = root_.get();
    while (!n->leaf) n = n->children[route(n, x)].get();
    return n;
  }

  // Makes an extent start at x when x falls inside one.
  void split_at(uint64_t x) {
    if (x >= size_) return;
    BNode* leaf = descend(x);
    Entry& e = leaf->entries[leaf_pos(leaf, x)];
    if (e.off == x) return;
    const uint64_t left = x - e.off;
    const Entry right{x, e.len - left, e.phys + left};
    e.len = left;
    touch(leaf);
    insert_entry(right);
  }

  void insert_entry(const Entry& e) {
    if (auto sib = insert_into(root_.get(), e)) {
      auto root = std::make_unique<BNode>(false);
      touch(root.get());
      root->seps = {root_->first(), sib->first()};
      root->children.push_back(std::move(root_));
      root->children.push_back(std::move(sib));
      root_ = std::move(root);
    }
    ++count_;
  }

  std::unique_ptr<BNode> insert_into(BNode* n, const Entry& e) {
    touch(n);
    if (n->leaf) {
      auto it = std::upper_bound(n->entries.begin(), n->entries.end(), e.off,
                                 [](uint64_t k, const Entry& x) { return k < x.off; });
      n->entries.insert(it, e);
    } else {
      const size_t i = route(n, e.off);
      auto sib = insert_into(n->children[i].get(), e);
      n->seps[i] = n->children[i]->first();
      if (sib) {
        n->seps.insert(n->seps.begin() + static_cast<ptrdiff_t>(i + 1), sib->first());
        n->children.insert(n->children.begin() + static_cast<ptrdiff_t>(i + 1), std::move(sib));
      }
    }
    return n->fanout() > cap_ ? split_node(n) : nullptr;
  }

  std::unique_ptr<BNode> split_node(BNode* n) {
    auto right = std::make_unique<BNode>(n->leaf);
    touch(right.get());
    const size_t half = n->fanout() / 2;
    if (n->leaf) {
      right->entries.assign(n->entries.begin() + static_cast<ptrdiff_t>(half), n->entries.end());
      n->entries.resize(half);
      right->next = n->next;
      if (right->next) right->next->prev = right.get();
      right->prev = n;
      n->next = right.get();
    } else {
      right->seps.assign(n->seps.begin() + static_cast<ptrdiff_t>(half), n->seps.end());
      n->seps.resize(half);
      for (size_t i = half; i < n->children.size(); ++i) right->children.push_back(std::move(n->children[i]));
      n->children.resize(half);
    }
    return right;
  }

  // Adds delta to every offset >= threshold. Visits the whole right part of the tree.
  void shift(BNode* n, uint64_t threshold, int64_t delta) {
    if (n->leaf) {
      for (auto& e : n->entries) {
        if (e.off >= threshold) {
          e.off = static_cast<uint64_t>(static_cast<int64_t>(e.off) + delta);
          ++shifted_;
          touch(n);
        }
      }
      return;
    }
    for (size_t i = 0; i < n->children.size(); ++i) {
      if (i + 1 < n->children.size() && n->seps[i + 1] <= threshold) continue;
      shift(n->children[i].get(), threshold, delta);
      const uint64_t first = n->children[i]->first();
      if (n->seps[i] != first) {
        n->seps[i] = first;
        touch(n);
      }
    }
  }

  // Drops entries starting in [a, b); boundaries at a and b already exist.
  void remove_range(BNode* n, uint64_t a, uint64_t b) {
    if (n->leaf) {
      auto first = std::find_if(n->entries.begin(), n->entries.end(), [&](const Entry& e) { return e.off >= a; });
      auto last = std::find_if(first, n->entries.end(), [&](const Entry& e) { return e.off >= b; });
      if (first != last) {
        count_ -= static_cast<uint64_t>(last - first);
        n->entries.erase(first, last);
        touch(n);
      }
      return;
    }
    for (size_t i = n->children.size(); i-- > 0;) {
      const uint64_t lo = n->seps[i];
      const uint64_t hi = i + 1 < n->children.size() ? n->seps[i + 1] : UINT64_MAX;
      if (hi <= a || lo >= b) continue;
      BNode* c = n->children[i].get();
      remove_range(c, a, b);
      touch(n);
      if (c->empty()) {
        if (c->leaf) {
          if (c->prev) c->prev->next = c->next;
          if (c->next) c->next->prev = c->prev;
        }
        n->children.erase(n->children.begin() + static_cast<ptrdiff_t>(i));
        n->seps.erase(n->seps.begin() + static_cast<ptrdiff_t>(i));
      } else {
        n->seps[i] = c->first();
      }
    }
  }

  void check_node(const BNode* n, size_t depth, uint64_t& pos, uint64_t& count, const BNode*& prev_leaf,
                  size_t& leaf_depth) const {
    if (n->fanout() > cap_) fail("node over capacity");
    if (n->empty() && n != root_.get()) fail("empty node");
    if (n->leaf) {
      if (leaf_depth == SIZE_MAX) leaf_depth = depth;
      if (leaf_depth != depth) fail("leaves at different depths");
      if (n->prev != prev_leaf || (prev_leaf && prev_leaf->next != n)) fail("broken leaf chain");
      prev_leaf = n;
      for (const auto& e : n->entries) {
        if (e.off != pos || e.len == 0) fail("entries are not contiguous");
        pos += e.len;
        ++count;
      }
      return;
    }
    if (n->seps.size() != n->children.size()) fail("separator count mismatch");
    for (size_t i = 0; i < n->children.size(); ++i) {
      if (n->seps[i] != n->children[i]->first()) fail("stale separator");
      check_node(n->children[i].get(), depth + 1, pos, count, prev_leaf, leaf_depth);
    }
  }

  size_t cap_;
  std::unique_ptr<BNode> root_;
  uint64_t size_ = 0;
  uint64_t count_ = 0;
  uint64_t epoch_ = 0;
  uint64_t modified_ = 0;
  uint64_t shifted_ = 0;
};

}  // namespace

std::unique_ptr<ExtentIndex> make_index(IndexKind kind, size_t capacity) {
  switch (kind) {
    case IndexKind::kFlexTree: return std::make_unique<FlexTreeIndex>(capacity);
    case IndexKind::kBPlusTree: return std::make_unique<BPlusTreeIndex>(capacity);
    case IndexKind::kSortedArray: return std::make_unique<SortedArrayIndex>();
  }
  throw Error(Errc::kInvalidArgument, "unknown index kind");
}

}  // namespace flex::bench
