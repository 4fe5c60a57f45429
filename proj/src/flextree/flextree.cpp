// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/flextree.hpp"

#include <algorithm>
#include <cassert>
#include <sstream>
#include <stdexcept>

namespace flex {

using detail::InternalNode;
using detail::LeafNode;
using detail::Node;

namespace {

LeafNode* as_leaf(Node* n) { return static_cast<LeafNode*>(n); }
const LeafNode* as_leaf(const Node* n) { return static_cast<const LeafNode*>(n); }
InternalNode* as_internal(Node* n) { return static_cast<InternalNode*>(n); }
const InternalNode* as_internal(const Node* n) { return static_cast<const InternalNode*>(n); }

// Index of the child whose subtree holds offset: the number of pivots whose
// effective value is <= offset.
size_t route(const InternalNode* node, int64_t base, uint64_t offset) {
  const int64_t rel = static_cast<int64_t>(offset) - base;
  auto it = std::upper_bound(node->pivots.begin(), node->pivots.end(), rel);
  return static_cast<size_t>(it - node->pivots.begin());
}

// Index of the last entry starting at or before offset (0 if none).
size_t locate(const LeafNode* leaf, int64_t base, uint64_t offset) {
  const int64_t rel = static_cast<int64_t>(offset) - base;
  auto it = std::upper_bound(leaf->entries.begin(), leaf->entries.end(), rel,
                             [](int64_t v, const ExtentEntry& e) {
                               return v < static_cast<int64_t>(e.partial_offset);
                             });
  if (it == leaf->entries.begin()) return 0;
  return static_cast<size_t>(it - leaf->entries.begin()) - 1;
}

void check_phys(uint64_t phys, uint64_t length) {
  if (phys == kUnmapped) return;
  if (phys > kUnmapped || length > kUnmapped - phys) {
    throw Error(Errc::kInvalidArgument, "physical address exceeds 48 bits");
  }
}

ExtentEntry tail_of(const ExtentEntry& e, uint32_t cut) {
  return ExtentEntry{e.partial_offset + cut, e.length - cut,
                     e.mapped() ? e.phys + cut : kUnmapped};
}

std::unique_ptr<Node> build(const NodeLayout& layout, size_t& extents) {
  if (layout.leaf()) {
    auto leaf = std::make_unique<LeafNode>();
    leaf->entries = layout.extents;
    extents += leaf->entries.size();
    leaf->slot = layout.slot;
    leaf->dirty = layout.slot == kNoSlot;
    return leaf;
  }
  if (layout.shifts.size() != layout.children.size() ||
      layout.pivots.size() + 1 != layout.children.size()) {
    throw Error(Errc::kInvalidArgument, "malformed internal node layout");
  }
  auto node = std::make_unique<InternalNode>();
  node->pivots = layout.pivots;
  node->shifts = layout.shifts;
  for (const auto& child : layout.children) node->children.push_back(build(child, extents));
  node->slot = layout.slot;
  node->dirty = layout.slot == kNoSlot;
  return node;
}

NodeLayout snapshot(const Node* node) {
  NodeLayout out;
  out.slot = node->slot;
  if (node->leaf) {
    out.extents = as_leaf(node)->entries;
    return out;
  }
  const auto* in = as_internal(node);
  out.pivots = in->pivots;
  out.shifts = in->shifts;
  for (const auto& c : in->children) out.children.push_back(snapshot(c.get()));
  return out;
}

}  // namespace

FlexTree::FlexTree(TreeOptions options) : options_(options), root_(std::make_unique<LeafNode>()) {
  if (options_.capacity < 4) throw Error(Errc::kInvalidArgument, "node capacity must be >= 4");
  if (options_.rebase_threshold == 0 || options_.rebase_threshold > kMaxPartialOffset) {
    throw Error(Errc::kInvalidArgument, "rebase threshold out of range");
  }
}

FlexTree::~FlexTree() = default;
FlexTree::FlexTree(FlexTree&&) noexcept = default;
FlexTree& FlexTree::operator=(FlexTree&&) noexcept = default;

FlexTree FlexTree::from_layout(const NodeLayout& root, TreeOptions options, int64_t root_shift) {
  FlexTree tree(options);
  size_t extents = 0;
  tree.root_ = build(root, extents);
  tree.root_shift_ = root_shift;
  tree.extent_count_ = extents;
  uint64_t total = 0;
  LeafCursor cursor(tree.root_.get(), root_shift);
  for (cursor.seek_first(); cursor.valid(); cursor.next()) total += cursor.entry().length;
  tree.size_ = total;
  tree.check_invariants();
  return tree;
}

void FlexTree::begin_op() {
  ++epoch_;
  ++stats_.ops;
  last_op_modified_ = 0;
}

void FlexTree::touch(Node* node) {
  node->dirty = true;
  if (node->touch_epoch != epoch_) {
    node->touch_epoch = epoch_;
    ++last_op_modified_;
    ++stats_.nodes_modified;
  }
}

size_t FlexTree::node_size(const Node* node) const {
  return node->leaf ? as_leaf(node)->entries.size() : as_internal(node)->children.size();
}

void FlexTree::retire(std::unique_ptr<Node> node) {
  if (node->slot != kNoSlot) retired_slots_.push_back(node->slot);
}

void FlexTree::split_child(InternalNode* parent, size_t index) {
  Node* child = parent->children[index].get();
  const int64_t shift = parent->shifts[index];
  std::unique_ptr<Node> right;
  int64_t pivot = 0;
  if (child->leaf) {
    auto* left = as_leaf(child);
    auto node = std::make_unique<LeafNode>();
    const size_t mid = left->entries.size() / 2;
    node->entries.assign(left->entries.begin() + static_cast<ptrdiff_t>(mid), left->entries.end());
    left->entries.resize(mid);
    // The new pivot inherits the median entry's effective offset.
    pivot = static_cast<int64_t>(node->entries.front().partial_offset) + shift;
    right = std::move(node);
  } else {
    auto* left = as_internal(child);
    auto node = std::make_unique<InternalNode>();
    const size_t mid = left->children.size() / 2;
    pivot = left->pivots[mid - 1] + shift;
    node->pivots.assign(left->pivots.begin() + static_cast<ptrdiff_t>(mid), left->pivots.end());
    node->shifts.assign(left->shifts.begin() + static_cast<ptrdiff_t>(mid), left->shifts.end());
    for (size_t i = mid; i < left->children.size(); ++i) {
      node->children.push_back(std::move(left->children[i]));
    }
    left->children.resize(mid);
    left->shifts.resize(mid);
    left->pivots.resize(mid - 1);
    right = std::move(node);
  }
  child->dirty = true;
  parent->dirty = true;
  parent->children.insert(parent->children.begin() + static_cast<ptrdiff_t>(index) + 1, std::move(right));
  parent->shifts.insert(parent->shifts.begin() + static_cast<ptrdiff_t>(index) + 1, shift);
  parent->pivots.insert(parent->pivots.begin() + static_cast<ptrdiff_t>(index), pivot);
  ++stats_.splits;
}

LeafNode* FlexTree::descend_for_update(uint64_t offset, Path& path, int64_t& leaf_base) {
  path.clear();
  // Leaves holding capacity - 1 entries are split on the way down so that the
  // target leaf can absorb an extent split plus one new entry. Internal nodes
  // gain at most one child per operation and split only when full.
  const size_t leaf_threshold = options_.capacity - 1;
  auto needs_split = [&](const Node* n) {
    return node_size(n) >= (n->leaf ? leaf_threshold : options_.capacity);
  };
  if (needs_split(root_.get())) {
    auto new_root = std::make_unique<InternalNode>();
    new_root->shifts.push_back(root_shift_);
    new_root->children.push_back(std::move(root_));
    root_shift_ = 0;
    root_ = std::move(new_root);
    split_child(as_internal(root_.get()), 0);
  }
  Node* node = root_.get();
  int64_t base = root_shift_;
  while (!node->leaf) {
    auto* in = as_internal(node);
    size_t idx = route(in, base, offset);
    if (needs_split(in->children[idx].get())) {
      split_child(in, idx);
      idx = route(in, base, offset);
    }
    in->dirty = true;
    path.push_back(PathStep{in, idx, base});
    base += in->shifts[idx];
    node = in->children[idx].get();
  }
  leaf_base = base;
  return as_leaf(node);
}

LeafNode* FlexTree::descend(uint64_t offset, int64_t& leaf_base) const {
  const Node* node = root_.get();
  int64_t base = root_shift_;
  while (!node->leaf) {
    const auto* in = as_internal(node);
    const size_t idx = route(in, base, offset);
    base += in->shifts[idx];
    node = in->children[idx].get();
  }
  leaf_base = base;
  return const_cast<LeafNode*>(as_leaf(node));
}

void FlexTree::shift_after_path(const Path& path, int64_t delta) {
  for (const auto& step : path) {
    auto* in = step.node;
    if (step.index + 1 >= in->children.size()) continue;
    for (size_t k = step.index + 1; k < in->shifts.size(); ++k) in->shifts[k] += delta;
    for (size_t k = step.index; k < in->pivots.size(); ++k) in->pivots[k] += delta;
    touch(in);
  }
}

void FlexTree::maybe_rebase(LeafNode* leaf, const Path& path) {
  if (leaf->entries.empty() || leaf->entries.back().partial_offset <= options_.rebase_threshold) {
    return;
  }
  const uint64_t m = leaf->entries.front().partial_offset;
  if (m > 0) {
    for (auto& e : leaf->entries) e.partial_offset -= m;
    if (path.empty()) {
      root_shift_ += static_cast<int64_t>(m);
    } else {
      const auto& parent = path.back();
      parent.node->shifts[parent.index] += static_cast<int64_t>(m);
      parent.node->dirty = true;
    }
    leaf->dirty = true;
    ++stats_.rebases;
  }
  if (leaf->entries.back().partial_offset > kMaxPartialOffset) {
    throw Error(Errc::kOverflow, "leaf span exceeds partial offset width");
  }
}

void FlexTree::insert_range(uint64_t offset, uint64_t length, uint64_t phys, uint64_t coalesce_limit) {
  if (offset > size_) throw Error(Errc::kOutOfRange, "insert offset beyond end of space");
  if (length == 0) throw Error(Errc::kInvalidArgument, "insert length must be positive");
  check_phys(phys, length);
  if (length > UINT64_MAX / 2 - size_) throw Error(Errc::kOverflow, "address space overflow");
  uint64_t modified = 0;
  while (length > 0) {
    const auto chunk = static_cast<uint32_t>(std::min<uint64_t>(length, kMaxExtentLength));
    insert_one(offset, chunk, phys, coalesce_limit);
    modified += last_op_modified_;
    offset += chunk;
    length -= chunk;
    if (phys != kUnmapped) phys += chunk;
  }
  last_op_modified_ = modified;
}

void FlexTree::insert_one(uint64_t offset, uint32_t length, uint64_t phys, uint64_t coalesce_limit) {
  begin_op();
  Path& path = path_;
  int64_t base = 0;
  LeafNode* leaf = descend_for_update(offset, path, base);
  auto& entries = leaf->entries;
  touch(leaf);

  size_t pos = 0;
  if (!entries.empty()) {
    const size_t j = locate(leaf, base, offset);
    const uint64_t start = static_cast<uint64_t>(base + static_cast<int64_t>(entries[j].partial_offset));
    const uint64_t intra = offset - start;
    if (intra == 0) {
      pos = j;
    } else if (intra >= entries[j].length) {
      pos = j + 1;
    } else {
      // Inserting into the middle of an extent: split it first.
      const ExtentEntry tail = tail_of(entries[j], static_cast<uint32_t>(intra));
      entries[j].length = static_cast<uint32_t>(intra);
      entries.insert(entries.begin() + static_cast<ptrdiff_t>(j) + 1, tail);
      ++extent_count_;
      pos = j + 1;
    }
  }

  size_t first_shifted = pos;
  bool coalesced = false;
  if (coalesce_limit > 0 && phys != kUnmapped && pos > 0) {
    auto& prev = entries[pos - 1];
    if (prev.mapped() && prev.phys + prev.length == phys &&
        uint64_t{prev.length} + length <= std::min(coalesce_limit, kMaxExtentLength)) {
      prev.length += length;
      coalesced = true;
    }
  }
  if (!coalesced) {
    const int64_t poff = static_cast<int64_t>(offset) - base;
    assert(poff >= 0);
    entries.insert(entries.begin() + static_cast<ptrdiff_t>(pos),
                   ExtentEntry{static_cast<uint64_t>(poff), length, phys});
    ++extent_count_;
    first_shifted = pos + 1;
  }
  for (size_t k = first_shifted; k < entries.size(); ++k) entries[k].partial_offset += length;
  shift_after_path(path, length);
  size_ += length;
  maybe_rebase(leaf, path);
}

std::vector<MappingRun> FlexTree::collapse_range(uint64_t offset, uint64_t length) {
  if (offset > size_ || length > size_ - offset) {
    throw Error(Errc::kOutOfRange, "collapse range beyond end of space");
  }
  std::vector<MappingRun> freed;
  uint64_t modified = 0;
  while (length > 0) {
    MappingRun run = collapse_one(offset, length);
    modified += last_op_modified_;
    length -= run.length;
    freed.push_back(run);
  }
  last_op_modified_ = modified;
  return freed;
}

MappingRun FlexTree::collapse_one(uint64_t offset, uint64_t length) {
  begin_op();
  Path& path = path_;
  int64_t base = 0;
  LeafNode* leaf = descend_for_update(offset, path, base);
  auto& entries = leaf->entries;
  touch(leaf);

  size_t j = locate(leaf, base, offset);
  const uint64_t start = static_cast<uint64_t>(base + static_cast<int64_t>(entries[j].partial_offset));
  const uint64_t intra = offset - start;
  if (intra > 0) {
    const ExtentEntry tail = tail_of(entries[j], static_cast<uint32_t>(intra));
    entries[j].length = static_cast<uint32_t>(intra);
    entries.insert(entries.begin() + static_cast<ptrdiff_t>(j) + 1, tail);
    ++extent_count_;
    ++j;
  }
  auto& victim = entries[j];
  const auto removed = static_cast<uint32_t>(std::min<uint64_t>(length, victim.length));
  MappingRun run{victim.phys, removed};
  size_t first_shifted;
  if (removed == victim.length) {
    entries.erase(entries.begin() + static_cast<ptrdiff_t>(j));
    --extent_count_;
    first_shifted = j;
  } else {
    victim.length -= removed;
    if (victim.mapped()) victim.phys += removed;
    first_shifted = j + 1;
  }
  for (size_t k = first_shifted; k < entries.size(); ++k) entries[k].partial_offset -= removed;
  shift_after_path(path, -static_cast<int64_t>(removed));
  size_ -= removed;
  rebalance_after_removal(path, leaf);
  return run;
}

void FlexTree::merge_children(InternalNode* parent, size_t left_index) {
  const size_t ri = left_index + 1;
  Node* left = parent->children[left_index].get();
  std::unique_ptr<Node> right = std::move(parent->children[ri]);
  const int64_t left_shift = parent->shifts[left_index];
  const int64_t right_shift = parent->shifts[ri];
  const int64_t separator = parent->pivots[left_index];

  if (left->leaf) {
    auto* l = as_leaf(left);
    auto* r = as_leaf(right.get());
    if (l->entries.empty()) {
      l->entries = std::move(r->entries);
      parent->shifts[left_index] = right_shift;
    } else if (!r->entries.empty()) {
      const int64_t delta = right_shift - left_shift;
      for (const auto& e : r->entries) {
        ExtentEntry moved = e;
        moved.partial_offset = static_cast<uint64_t>(static_cast<int64_t>(e.partial_offset) + delta);
        l->entries.push_back(moved);
      }
    }
  } else {
    auto* l = as_internal(left);
    auto* r = as_internal(right.get());
    const int64_t delta = right_shift - left_shift;
    l->pivots.push_back(separator - left_shift);
    for (auto p : r->pivots) l->pivots.push_back(p + delta);
    for (size_t k = 0; k < r->children.size(); ++k) {
      l->shifts.push_back(r->shifts[k] + delta);
      l->children.push_back(std::move(r->children[k]));
    }
  }
  left->dirty = true;
  parent->dirty = true;
  parent->children.erase(parent->children.begin() + static_cast<ptrdiff_t>(ri));
  parent->shifts.erase(parent->shifts.begin() + static_cast<ptrdiff_t>(ri));
  parent->pivots.erase(parent->pivots.begin() + static_cast<ptrdiff_t>(left_index));
  retire(std::move(right));
  ++stats_.merges;

  if (left->leaf) {
    auto* l = as_leaf(left);
    if (!l->entries.empty() && l->entries.back().partial_offset > options_.rebase_threshold) {
      const uint64_t m = l->entries.front().partial_offset;
      for (auto& e : l->entries) e.partial_offset -= m;
      parent->shifts[left_index] += static_cast<int64_t>(m);
      ++stats_.rebases;
    }
  }
}

void FlexTree::borrow_child(InternalNode* parent, size_t index, size_t from) {
  auto* dst = as_internal(parent->children[index].get());
  auto* src = as_internal(parent->children[from].get());
  const int64_t dst_shift = parent->shifts[index];
  const int64_t src_shift = parent->shifts[from];
  if (from == index + 1) {
    dst->pivots.push_back(parent->pivots[index] - dst_shift);
    dst->shifts.push_back(src->shifts.front() + src_shift - dst_shift);
    dst->children.push_back(std::move(src->children.front()));
    parent->pivots[index] = src->pivots.front() + src_shift;
    src->pivots.erase(src->pivots.begin());
    src->shifts.erase(src->shifts.begin());
    src->children.erase(src->children.begin());
  } else {
    dst->pivots.insert(dst->pivots.begin(), parent->pivots[from] - dst_shift);
    dst->shifts.insert(dst->shifts.begin(), src->shifts.back() + src_shift - dst_shift);
    dst->children.insert(dst->children.begin(), std::move(src->children.back()));
    parent->pivots[from] = src->pivots.back() + src_shift;
    src->pivots.pop_back();
    src->shifts.pop_back();
    src->children.pop_back();
  }
  dst->dirty = true;
  src->dirty = true;
  parent->dirty = true;
  ++stats_.merges;
}

void FlexTree::rebalance_after_removal(Path& path, Node* node) {
  // Emptied nodes are unlinked outright, then the shrunken ancestor chain is
  // merged with siblings while the combined size stays under the threshold.
  size_t level = path.size();
  while (level > 0 && node_size(node) == 0) {
    --level;
    auto* parent = path[level].node;
    const size_t idx = path[level].index;
    std::unique_ptr<Node> gone = std::move(parent->children[idx]);
    parent->children.erase(parent->children.begin() + static_cast<ptrdiff_t>(idx));
    parent->shifts.erase(parent->shifts.begin() + static_cast<ptrdiff_t>(idx));
    if (!parent->pivots.empty()) {
      const size_t p = idx > 0 ? idx - 1 : 0;
      parent->pivots.erase(parent->pivots.begin() + static_cast<ptrdiff_t>(p));
    }
    parent->dirty = true;
    retire(std::move(gone));
    ++stats_.merges;
    node = parent;
  }

  // A non-root internal node keeps at least two children, which bounds the
  // height; single-child nodes merge with or borrow from a sibling.
  const size_t merge_threshold = options_.capacity / 2;
  while (level-- > 0) {
    auto* parent = path[level].node;
    const size_t idx = path[level].index;
    if (parent->children.size() < 2) {
      node = parent;
      continue;
    }
    const size_t left = idx + 1 < parent->children.size() ? idx : idx - 1;
    const size_t a = node_size(parent->children[left].get());
    const size_t b = node_size(parent->children[left + 1].get());
    if (a + b <= merge_threshold || (!node->leaf && node_size(node) == 1 && a + b < options_.capacity)) {
      merge_children(parent, left);
      node = parent;
      continue;
    }
    if (!node->leaf && node_size(node) == 1) borrow_child(parent, idx, left == idx ? idx + 1 : left);
    break;
  }
  collapse_root();
}

void FlexTree::collapse_root() {
  if (!root_->leaf && as_internal(root_.get())->children.empty()) {
    retire(std::move(root_));
    root_ = std::make_unique<LeafNode>();
  }
  while (!root_->leaf && as_internal(root_.get())->children.size() == 1) {
    auto* in = as_internal(root_.get());
    root_shift_ += in->shifts[0];
    std::unique_ptr<Node> child = std::move(in->children[0]);
    retire(std::move(root_));
    root_ = std::move(child);
    root_->dirty = true;
  }
  if (root_->leaf && as_leaf(root_.get())->entries.empty()) root_shift_ = 0;
}

std::vector<MappingRun> FlexTree::write_range(uint64_t offset, uint64_t length, uint64_t phys,
                                              uint64_t coalesce_limit) {
  if (length == 0) throw Error(Errc::kInvalidArgument, "write length must be positive");
  check_phys(phys, length);
  uint64_t modified = 0;
  if (offset > size_) {
    insert_range(size_, offset - size_, kUnmapped);
    modified += last_op_modified_;
  }
  std::vector<MappingRun> replaced;
  const uint64_t overlap = std::min(length, size_ - offset);
  if (overlap > 0) {
    replaced = collapse_range(offset, overlap);
    modified += last_op_modified_;
  }
  insert_range(offset, length, phys, coalesce_limit);
  last_op_modified_ += modified;
  return replaced;
}

std::vector<MappingRun> FlexTree::query_range(uint64_t offset, uint64_t length) const {
  std::vector<MappingRun> runs;
  if (length == 0) return runs;
  if (offset > size_ || length > size_ - offset) {
    throw Error(Errc::kOutOfRange, "query range beyond end of space");
  }
  LeafCursor cursor(root_.get(), root_shift_);
  cursor.seek(offset);
  uint64_t pos = offset;
  while (length > 0) {
    assert(cursor.valid());
    const auto& e = cursor.entry();
    const uint64_t intra = pos - cursor.start();
    if (intra >= e.length) {
      cursor.next();
      continue;
    }
    const uint64_t take = std::min<uint64_t>(length, e.length - intra);
    runs.push_back(MappingRun{e.mapped() ? e.phys + intra : kUnmapped, take});
    pos += take;
    length -= take;
    cursor.next();
  }
  return runs;
}

ExtentInfo FlexTree::find_extent(uint64_t offset) const {
  if (offset >= size_) throw Error(Errc::kOutOfRange, "offset beyond end of space");
  int64_t base = 0;
  const LeafNode* leaf = descend(offset, base);
  const auto& e = leaf->entries[locate(leaf, base, offset)];
  return ExtentInfo{static_cast<uint64_t>(base + static_cast<int64_t>(e.partial_offset)), e.phys, e.length};
}

void FlexTree::remap(uint64_t offset, uint64_t length, uint64_t new_phys) {
  if (length == 0) throw Error(Errc::kInvalidArgument, "remap length must be positive");
  if (new_phys == kUnmapped) throw Error(Errc::kInvalidArgument, "remap target must be mapped");
  check_phys(new_phys, length);
  if (offset >= size_) throw Error(Errc::kOutOfRange, "remap offset beyond end of space");
  {
    const ExtentInfo info = find_extent(offset);
    if (!info.mapped() || offset + length > info.start + info.length) {
      throw Error(Errc::kInvalidArgument, "remap must stay within one mapped extent");
    }
  }
  begin_op();
  Path& path = path_;
  int64_t base = 0;
  LeafNode* leaf = descend_for_update(offset, path, base);
  auto& entries = leaf->entries;
  touch(leaf);
  size_t j = locate(leaf, base, offset);
  const uint64_t start = static_cast<uint64_t>(base + static_cast<int64_t>(entries[j].partial_offset));
  const uint64_t intra = offset - start;
  if (intra > 0) {
    const ExtentEntry tail = tail_of(entries[j], static_cast<uint32_t>(intra));
    entries[j].length = static_cast<uint32_t>(intra);
    entries.insert(entries.begin() + static_cast<ptrdiff_t>(j) + 1, tail);
    ++extent_count_;
    ++j;
  }
  if (length < entries[j].length) {
    const ExtentEntry tail = tail_of(entries[j], static_cast<uint32_t>(length));
    entries[j].length = static_cast<uint32_t>(length);
    entries.insert(entries.begin() + static_cast<ptrdiff_t>(j) + 1, tail);
    ++extent_count_;
  }
  entries[j].phys = new_phys;
}

size_t FlexTree::height() const {
  size_t h = 1;
  for (const Node* n = root_.get(); !n->leaf; n = as_internal(n)->children.front().get()) ++h;
  return h;
}

size_t FlexTree::node_count() const {
  size_t count = 0;
  std::vector<const Node*> stack{root_.get()};
  while (!stack.empty()) {
    const Node* n = stack.back();
    stack.pop_back();
    ++count;
    if (!n->leaf) {
      for (const auto& c : as_internal(n)->children) stack.push_back(c.get());
    }
  }
  return count;
}

NodeLayout FlexTree::layout() const { return snapshot(root_.get()); }

std::string FlexTree::debug_dump() const {
  std::ostringstream out;
  out << "size=" << size_ << " extents=" << extent_count_ << " root_shift=" << root_shift_ << "\n";
  struct Item {
    const Node* node;
    int depth;
  };
  std::vector<Item> stack{{root_.get(), 0}};
  while (!stack.empty()) {
    auto [n, depth] = stack.back();
    stack.pop_back();
    out << std::string(static_cast<size_t>(depth) * 2, ' ');
    if (n->leaf) {
      out << "leaf";
      for (const auto& e : as_leaf(n)->entries) {
        out << " (" << e.partial_offset << "," << e.length << ",";
        if (e.mapped()) {
          out << e.phys;
        } else {
          out << "-";
        }
        out << ")";
      }
      out << "\n";
      continue;
    }
    const auto* in = as_internal(n);
    out << "internal shifts=[";
    for (size_t i = 0; i < in->shifts.size(); ++i) out << (i ? "," : "") << in->shifts[i];
    out << "] pivots=[";
    for (size_t i = 0; i < in->pivots.size(); ++i) out << (i ? "," : "") << in->pivots[i];
    out << "]\n";
    for (size_t i = in->children.size(); i-- > 0;) stack.push_back({in->children[i].get(), depth + 1});
  }
  return out.str();
}

void FlexTree::check_invariants() const {
  auto fail = [](const std::string& msg) { throw std::logic_error("flextree invariant: " + msg); };
  using FailFn = decltype(fail);
  uint64_t expected = 0;
  size_t extents = 0;
  int leaf_depth = -1;

  // Returns the effective offset of the first extent in the subtree.
  struct Walker {
    const FlexTree& tree;
    uint64_t& expected;
    size_t& extents;
    int& leaf_depth;
    FailFn& fail;

    int64_t walk(const Node* n, int64_t base, int depth, bool is_root) {
      const size_t count = n->leaf ? as_leaf(n)->entries.size() : as_internal(n)->children.size();
      if (count > tree.options_.capacity) fail("node over capacity");
      if (n->leaf) {
        if (leaf_depth < 0) leaf_depth = depth;
        if (leaf_depth != depth) fail("leaves at different depths");
        const auto* leaf = as_leaf(n);
        if (leaf->entries.empty() && !is_root) fail("empty non-root leaf");
        int64_t first = static_cast<int64_t>(expected);
        for (const auto& e : leaf->entries) {
          if (e.length == 0) fail("zero-length extent");
          if (e.partial_offset > kMaxPartialOffset) fail("partial offset exceeds 48 bits");
          if (e.phys != kUnmapped && e.phys + e.length > kUnmapped) fail("physical run exceeds 48 bits");
          const int64_t eff = base + static_cast<int64_t>(e.partial_offset);
          if (eff != static_cast<int64_t>(expected)) {
            fail("extent at " + std::to_string(eff) + " expected " + std::to_string(expected));
          }
          expected += e.length;
          ++extents;
        }
        return first;
      }
      const auto* in = as_internal(n);
      if (in->children.empty()) fail("internal node without children");
      if (!is_root && in->children.size() < 2) fail("non-root internal node with one child");
      if (in->pivots.size() + 1 != in->children.size() || in->shifts.size() != in->children.size()) {
        fail("internal node arrays out of sync");
      }
      int64_t first = 0;
      for (size_t i = 0; i < in->children.size(); ++i) {
        const int64_t child_first = walk(in->children[i].get(), base + in->shifts[i], depth + 1, false);
        if (i == 0) {
          first = child_first;
        } else {
          if (base + in->pivots[i - 1] != child_first) {
            fail("pivot " + std::to_string(base + in->pivots[i - 1]) + " != subtree start " +
                 std::to_string(child_first));
          }
          if (i >= 2 && in->pivots[i - 1] <= in->pivots[i - 2]) fail("pivots not increasing");
        }
      }
      return first;
    }
  };
  Walker walker{*this, expected, extents, leaf_depth, fail};
  walker.walk(root_.get(), root_shift_, 0, true);
  if (expected != size_) fail("extents cover " + std::to_string(expected) + " of " + std::to_string(size_));
  if (extents != extent_count_) fail("extent count mismatch");
}

bool FlexTree::has_dirty_nodes() const { return root_->dirty || !retired_slots_.empty(); }

uint64_t FlexTree::persist(NodeSink& sink) {
  for (uint64_t slot : retired_slots_) sink.release(slot);
  retired_slots_.clear();

  struct Writer {
    NodeSink& sink;
    uint64_t write(Node* n) {
      if (!n->dirty && n->slot != kNoSlot) return n->slot;
      uint64_t slot;
      if (n->leaf) {
        slot = sink.write_leaf(as_leaf(n)->entries);
      } else {
        auto* in = as_internal(n);
        std::vector<uint64_t> child_slots;
        child_slots.reserve(in->children.size());
        for (auto& c : in->children) child_slots.push_back(write(c.get()));
        slot = sink.write_internal(in->pivots, in->shifts, child_slots);
      }
      if (n->slot != kNoSlot) sink.release(n->slot);
      n->slot = slot;
      n->dirty = false;
      return slot;
    }
  };
  Writer writer{sink};
  return writer.write(root_.get());
}

LeafCursor::LeafCursor(const Node* root, int64_t root_shift) : root_(root), root_shift_(root_shift) {}

void LeafCursor::descend_leftmost(const Node* node, int64_t base) {
  while (!node->leaf) {
    const auto* in = as_internal(node);
    stack_.push_back(Frame{in, 0, base});
    base += in->shifts[0];
    node = in->children[0].get();
  }
  leaf_ = as_leaf(node);
  base_ = base;
  index_ = 0;
}

void LeafCursor::seek_first() {
  stack_.clear();
  descend_leftmost(root_, root_shift_);
  if (leaf_->entries.empty()) advance_leaf();
}

void LeafCursor::seek(uint64_t offset) {
  stack_.clear();
  const Node* node = root_;
  int64_t base = root_shift_;
  while (!node->leaf) {
    const auto* in = as_internal(node);
    const size_t idx = route(in, base, offset);
    stack_.push_back(Frame{in, idx, base});
    base += in->shifts[idx];
    node = in->children[idx].get();
  }
  leaf_ = as_leaf(node);
  base_ = base;
  index_ = leaf_->entries.empty() ? 0 : locate(leaf_, base, offset);
  if (leaf_->entries.empty()) advance_leaf();
}

void LeafCursor::advance_leaf() {
  while (!stack_.empty()) {
    Frame& top = stack_.back();
    if (top.index + 1 < top.node->children.size()) {
      ++top.index;
      const int64_t base = top.base + top.node->shifts[top.index];
      const Node* child = top.node->children[top.index].get();
      descend_leftmost(child, base);
      if (!leaf_->entries.empty()) return;
      continue;
    }
    stack_.pop_back();
  }
  leaf_ = nullptr;
}

void LeafCursor::next() {
  if (leaf_ == nullptr) return;
  if (++index_ < leaf_->entries.size()) return;
  advance_leaf();
}

}  // namespace flex
