// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

// A common interface over FlexTree and two baseline extent indexes that store
// absolute offsets: a B+-tree and a sorted array. In the baselines every
// insert_range/collapse_range rewrites the offset of each later extent.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "flex/flextree.hpp"

namespace flex::bench {

enum class IndexKind { kFlexTree, kBPlusTree, kSortedArray };

std::string_view to_string(IndexKind k);
std::optional<IndexKind> parse_index_kind(std::string_view s);

class ExtentIndex {
 public:
  virtual ~ExtentIndex() = default;

  // Same contracts as the FlexTree operations of the same name, without coalescing.
  virtual void insert_range(uint64_t offset, uint64_t length, uint64_t phys) = 0;
  virtual void collapse_range(uint64_t offset, uint64_t length) = 0;
  virtual std::vector<MappingRun> query_range(uint64_t offset, uint64_t length) const = 0;
  virtual ExtentInfo find_extent(uint64_t offset) const = 0;

  virtual uint64_t size() const = 0;
  virtual uint64_t extent_count() const = 0;
  // Nodes written by the last mutation; nullopt for the array.
  virtual std::optional<uint64_t> last_nodes_modified() const = 0;
  // Stored offsets rewritten by the last mutation; nullopt for FlexTree.
  virtual std::optional<uint64_t> last_entries_shifted() const = 0;
  // Throws std::logic_error on a broken structure.
  virtual void check_invariants() const = 0;
};

std::unique_ptr<ExtentIndex> make_index(IndexKind kind, size_t capacity = 64);

}  // namespace flex::bench
