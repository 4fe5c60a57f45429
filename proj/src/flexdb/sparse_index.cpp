// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/sparse_index.hpp"

#include <algorithm>
#include <stdexcept>

#include "flex/status.hpp"

namespace flex {

namespace {

SparseInternal* as_internal(SparseNode* n) { return static_cast<SparseInternal*>(n); }
const SparseInternal* as_internal(const SparseNode* n) { return static_cast<const SparseInternal*>(n); }
SparseLeaf* as_leaf(SparseNode* n) { return static_cast<SparseLeaf*>(n); }
const SparseLeaf* as_leaf(const SparseNode* n) { return static_cast<const SparseLeaf*>(n); }

size_t node_size(const SparseNode* n) {
  return n->is_leaf ? as_leaf(n)->entries.size() : as_internal(n)->children.size();
}

}  // namespace

SparseIndex::SparseIndex(size_t capacity) : capacity_(capacity) {
  if (capacity_ < 3) throw Error(Errc::kInvalidArgument, "sparse index capacity below 3");
  clear();
}

SparseIndex::~SparseIndex() = default;

void SparseIndex::clear() {
  auto leaf = std::make_unique<SparseLeaf>();
  leaf->is_leaf = true;
  auto first = std::make_unique<IntervalEntry>();
  first->leaf = leaf.get();
  leaf->entries.push_back(std::move(first));
  root_ = std::move(leaf);
  count_ = 1;
}

size_t SparseIndex::child_index(const SparseInternal* parent, const SparseNode* child) {
  for (size_t i = 0; i < parent->children.size(); ++i) {
    if (parent->children[i].get() == child) return i;
  }
  throw std::logic_error("sparse index: child not found in parent");
}

size_t SparseIndex::entry_index(const IntervalEntry* e) {
  const auto& v = e->leaf->entries;
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i].get() == e) return i;
  }
  throw std::logic_error("sparse index: entry not found in leaf");
}

const std::string& SparseIndex::first_key(const SparseNode* node) {
  while (!node->is_leaf) node = as_internal(node)->children.front().get();
  return as_leaf(node)->entries.front()->key;
}

IntervalEntry* SparseIndex::find(std::string_view key) const {
  const SparseNode* n = root_.get();
  while (!n->is_leaf) {
    const auto* in = as_internal(n);
    const auto it = std::upper_bound(in->keys.begin() + 1, in->keys.end(), key,
                                     [](std::string_view k, const std::string& p) { return k < p; });
    n = in->children[static_cast<size_t>(it - in->keys.begin()) - 1].get();
  }
  const auto* leaf = as_leaf(n);
  const auto it = std::upper_bound(leaf->entries.begin(), leaf->entries.end(), key,
                                   [](std::string_view k, const auto& e) { return k < e->key; });
  if (it == leaf->entries.begin()) {
    // Unreachable while pivots are exact; kept so a search never falls off a leaf.
    return leaf->prev ? leaf->prev->entries.back().get() : leaf->entries.front().get();
  }
  return std::prev(it)->get();
}

uint64_t SparseIndex::offset(const IntervalEntry* e) const {
  int64_t off = e->partial;
  for (const SparseNode* n = e->leaf; n; n = n->parent) off += n->shift;
  return static_cast<uint64_t>(off);
}

IntervalEntry* SparseIndex::first() const {
  const SparseNode* n = root_.get();
  while (!n->is_leaf) n = as_internal(n)->children.front().get();
  return as_leaf(n)->entries.front().get();
}

IntervalEntry* SparseIndex::last() const {
  const SparseNode* n = root_.get();
  while (!n->is_leaf) n = as_internal(n)->children.back().get();
  return as_leaf(n)->entries.back().get();
}

IntervalEntry* SparseIndex::next(const IntervalEntry* e) const {
  const size_t i = entry_index(e);
  if (i + 1 < e->leaf->entries.size()) return e->leaf->entries[i + 1].get();
  return e->leaf->next ? e->leaf->next->entries.front().get() : nullptr;
}

IntervalEntry* SparseIndex::prev(const IntervalEntry* e) const {
  const size_t i = entry_index(e);
  if (i > 0) return e->leaf->entries[i - 1].get();
  return e->leaf->prev ? e->leaf->prev->entries.back().get() : nullptr;
}

void SparseIndex::resize(IntervalEntry* e, int64_t delta) {
  if (delta < 0 && static_cast<uint64_t>(-delta) > e->size) {
    throw std::logic_error("sparse index: interval shrunk below zero");
  }
  e->size = static_cast<uint64_t>(static_cast<int64_t>(e->size) + delta);
  if (delta == 0) return;
  auto& v = e->leaf->entries;
  for (size_t i = entry_index(e) + 1; i < v.size(); ++i) v[i]->partial += delta;
  for (SparseNode* n = e->leaf; n->parent; n = n->parent) {
    auto& kids = n->parent->children;
    for (size_t i = child_index(n->parent, n) + 1; i < kids.size(); ++i) kids[i]->shift += delta;
  }
}

IntervalEntry* SparseIndex::insert_after(IntervalEntry* e, std::unique_ptr<IntervalEntry> fresh) {
  SparseLeaf* leaf = e->leaf;
  const size_t i = entry_index(e);
  fresh->leaf = leaf;
  IntervalEntry* out = fresh.get();
  leaf->entries.insert(leaf->entries.begin() + static_cast<ptrdiff_t>(i + 1), std::move(fresh));
  ++count_;
  if (leaf->entries.size() > capacity_) split_node(leaf);
  return out;
}

IntervalEntry* SparseIndex::split(IntervalEntry* e, uint64_t at, std::string key, uint64_t right_count) {
  if (at > e->size) throw std::logic_error("sparse index: split point beyond interval");
  auto fresh = std::make_unique<IntervalEntry>();
  fresh->key = std::move(key);
  fresh->partial = e->partial + static_cast<int64_t>(at);
  fresh->size = e->size - at;
  fresh->count = right_count;
  fresh->count_known = e->count_known;
  e->size = at;
  if (e->count_known) e->count -= right_count;
  return insert_after(e, std::move(fresh));
}

IntervalEntry* SparseIndex::push_back(std::string key, uint64_t size, uint64_t count, bool count_known) {
  IntervalEntry* tail = last();
  auto fresh = std::make_unique<IntervalEntry>();
  fresh->key = std::move(key);
  fresh->partial = tail->partial + static_cast<int64_t>(tail->size);
  fresh->size = size;
  fresh->count = count;
  fresh->count_known = count_known;
  return insert_after(tail, std::move(fresh));
}

void SparseIndex::merge_next(IntervalEntry* e) {
  IntervalEntry* n = next(e);
  if (!n) throw std::logic_error("sparse index: no interval to merge");
  e->size += n->size;
  e->count += n->count;
  e->count_known = e->count_known && n->count_known;
  erase_entry(n);
}

void SparseIndex::remove(IntervalEntry* e) {
  if (e == first()) throw std::logic_error("sparse index: the first interval is permanent");
  if (e->size != 0) throw std::logic_error("sparse index: removing a non-empty interval");
  erase_entry(e);
}

void SparseIndex::set_key(IntervalEntry* e, std::string key) {
  e->key = std::move(key);
  if (entry_index(e) == 0) fix_pivots(e->leaf);
}

void SparseIndex::erase_entry(IntervalEntry* e) {
  SparseLeaf* leaf = e->leaf;
  const size_t i = entry_index(e);
  leaf->entries.erase(leaf->entries.begin() + static_cast<ptrdiff_t>(i));
  --count_;
  if (leaf->entries.empty()) {
    unlink(leaf);
    return;
  }
  if (i == 0) fix_pivots(leaf);
  maybe_merge(leaf);
}

// Refreshes the pivot naming node's subtree after its first key changed.
void SparseIndex::fix_pivots(SparseNode* node) {
  const std::string& key = first_key(node);
  for (SparseNode* n = node; n->parent; n = n->parent) {
    const size_t i = child_index(n->parent, n);
    if (i > 0) {
      n->parent->keys[i] = key;
      return;
    }
  }
}

void SparseIndex::split_node(SparseNode* node) {
  const size_t total = node_size(node);
  const size_t mid = total / 2;
  std::unique_ptr<SparseNode> right;
  std::string pivot;
  if (node->is_leaf) {
    auto* l = as_leaf(node);
    auto r = std::make_unique<SparseLeaf>();
    r->is_leaf = true;
    r->shift = l->shift;
    for (size_t i = mid; i < total; ++i) {
      l->entries[i]->leaf = r.get();
      r->entries.push_back(std::move(l->entries[i]));
    }
    l->entries.resize(mid);
    r->prev = l;
    r->next = l->next;
    if (l->next) l->next->prev = r.get();
    l->next = r.get();
    pivot = r->entries.front()->key;
    right = std::move(r);
  } else {
    auto* in = as_internal(node);
    auto r = std::make_unique<SparseInternal>();
    r->shift = in->shift;
    pivot = in->keys[mid];
    for (size_t i = mid; i < total; ++i) {
      in->children[i]->parent = r.get();
      r->children.push_back(std::move(in->children[i]));
      r->keys.push_back(std::move(in->keys[i]));
    }
    in->children.resize(mid);
    in->keys.resize(mid);
    r->keys[0].clear();
    right = std::move(r);
  }
  SparseInternal* parent = node->parent;
  if (!parent) {
    auto root = std::make_unique<SparseInternal>();
    node->parent = root.get();
    right->parent = root.get();
    root->children.push_back(std::move(root_));
    root->keys.emplace_back();
    root->children.push_back(std::move(right));
    root->keys.push_back(std::move(pivot));
    root_ = std::move(root);
    return;
  }
  const size_t i = child_index(parent, node);
  right->parent = parent;
  parent->children.insert(parent->children.begin() + static_cast<ptrdiff_t>(i + 1), std::move(right));
  parent->keys.insert(parent->keys.begin() + static_cast<ptrdiff_t>(i + 1), std::move(pivot));
  if (parent->children.size() > capacity_) split_node(parent);
}

void SparseIndex::unlink(SparseNode* node) {
  SparseInternal* parent = node->parent;
  if (!parent) throw std::logic_error("sparse index: emptied the root");
  if (node->is_leaf) {
    auto* l = as_leaf(node);
    if (l->prev) l->prev->next = l->next;
    if (l->next) l->next->prev = l->prev;
  }
  const size_t i = child_index(parent, node);
  parent->children.erase(parent->children.begin() + static_cast<ptrdiff_t>(i));
  parent->keys.erase(parent->keys.begin() + static_cast<ptrdiff_t>(i));
  if (parent->children.empty()) {
    unlink(parent);
    return;
  }
  if (i == 0) {
    parent->keys[0].clear();
    fix_pivots(parent);
  }
  if (parent == root_.get()) {
    collapse_root();
  } else {
    maybe_merge(parent);
  }
}

void SparseIndex::collapse_root() {
  while (!root_->is_leaf && as_internal(root_.get())->children.size() == 1) {
    auto child = std::move(as_internal(root_.get())->children.front());
    child->shift += root_->shift;
    child->parent = nullptr;
    root_ = std::move(child);
  }
}

// Merges node with an adjacent sibling when both fit in half a node.
void SparseIndex::maybe_merge(SparseNode* node) {
  SparseInternal* parent = node->parent;
  if (!parent) return;
  const size_t i = child_index(parent, node);
  size_t li = 0;
  if (i + 1 < parent->children.size()) {
    li = i;
  } else if (i > 0) {
    li = i - 1;
  } else {
    return;
  }
  SparseNode* left = parent->children[li].get();
  SparseNode* right = parent->children[li + 1].get();
  if (node_size(left) + node_size(right) > capacity_ / 2) return;
  const int64_t delta = right->shift - left->shift;
  if (left->is_leaf) {
    auto* l = as_leaf(left);
    auto* r = as_leaf(right);
    for (auto& e : r->entries) {
      e->partial += delta;
      e->leaf = l;
      l->entries.push_back(std::move(e));
    }
    l->next = r->next;
    if (r->next) r->next->prev = l;
  } else {
    auto* l = as_internal(left);
    auto* r = as_internal(right);
    r->keys[0] = parent->keys[li + 1];
    for (size_t k = 0; k < r->children.size(); ++k) {
      r->children[k]->shift += delta;
      r->children[k]->parent = l;
      l->children.push_back(std::move(r->children[k]));
      l->keys.push_back(std::move(r->keys[k]));
    }
  }
  parent->children.erase(parent->children.begin() + static_cast<ptrdiff_t>(li + 1));
  parent->keys.erase(parent->keys.begin() + static_cast<ptrdiff_t>(li + 1));
  if (parent == root_.get()) {
    collapse_root();
  } else {
    maybe_merge(parent);
  }
}

size_t SparseIndex::height() const {
  size_t h = 1;
  for (const SparseNode* n = root_.get(); !n->is_leaf; n = as_internal(n)->children.front().get()) ++h;
  return h;
}

uint64_t SparseIndex::total_bytes() const {
  const IntervalEntry* tail = last();
  return offset(tail) + tail->size;
}

std::vector<IntervalInfo> SparseIndex::intervals() const {
  std::vector<IntervalInfo> out;
  out.reserve(count_);
  for (const IntervalEntry* e = first(); e; e = next(e)) {
    out.push_back({e->key, offset(e), e->size, e->count, e->count_known, e->fragmented});
  }
  return out;
}

void SparseIndex::check_invariants() const {
  auto fail = [](const std::string& what) { throw std::logic_error("sparse index: " + what); };
  size_t leaf_depth = 0;
  size_t entries = 0;
  const SparseLeaf* prev_leaf = nullptr;
  auto walk = [&](auto&& self, const SparseNode* n, size_t depth) -> void {
    const size_t sz = node_size(n);
    if (sz == 0) fail("empty node");
    if (sz > capacity_) fail("node over capacity");
    if (n->is_leaf) {
      const auto* l = as_leaf(n);
      if (leaf_depth == 0) leaf_depth = depth;
      if (depth != leaf_depth) fail("leaves at different depths");
      if (l->prev != prev_leaf) fail("broken leaf chain");
      if (prev_leaf && prev_leaf->next != l) fail("broken leaf chain");
      prev_leaf = l;
      for (const auto& e : l->entries) {
        if (e->leaf != l) fail("stale leaf back-pointer");
      }
      entries += l->entries.size();
      return;
    }
    const auto* in = as_internal(n);
    if (in->keys.size() != in->children.size()) fail("pivot count mismatch");
    for (size_t i = 0; i < sz; ++i) {
      if (in->children[i]->parent != in) fail("stale parent pointer");
      if (i > 0 && in->keys[i] != first_key(in->children[i].get())) fail("pivot differs from subtree's first key");
      self(self, in->children[i].get(), depth + 1);
    }
  };
  if (root_->parent) fail("root has a parent");
  walk(walk, root_.get(), 1);
  if (prev_leaf && prev_leaf->next) fail("leaf chain runs past the last leaf");
  if (entries != count_) fail("entry count mismatch");

  const IntervalEntry* e = first();
  if (!e->key.empty()) fail("first interval has a key");
  if (offset(e) != 0) fail("first interval does not start at 0");
  for (const IntervalEntry* n = next(e); n; e = n, n = next(n)) {
    if (n->key.empty() || n->key <= e->key) fail("index keys out of order");
    if (offset(n) != offset(e) + e->size) fail("intervals do not tile the space");
  }
}

}  // namespace flex
