// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/memtable.hpp"

#include <mutex>
#include <stdexcept>

namespace flex {

void MemTable::set(std::string_view key, Value value) {
  std::unique_lock lock(mu_);
  if (frozen_) throw std::logic_error("write to an immutable MemTable");
  const uint64_t add = value ? value->size() : 0;
  auto it = map_.find(key);
  if (it == map_.end()) {
    bytes_ += key.size() + add + kEntryOverhead;
    map_.emplace(std::string(key), std::move(value));
    return;
  }
  bytes_ -= it->second ? it->second->size() : 0;
  bytes_ += add;
  it->second = std::move(value);
}

void MemTable::put(std::string_view key, std::string_view value) { set(key, std::string(value)); }

void MemTable::del(std::string_view key) { set(key, std::nullopt); }

MemTable::Lookup MemTable::get(std::string_view key, std::string* value) const {
  std::shared_lock lock(mu_);
  const auto it = map_.find(key);
  if (it == map_.end()) return Lookup::kAbsent;
  if (!it->second) return Lookup::kTombstone;
  if (value) *value = *it->second;
  return Lookup::kValue;
}

std::optional<MemTable::Entry> MemTable::next(std::string_view after, bool inclusive) const {
  std::shared_lock lock(mu_);
  const auto it = inclusive ? map_.lower_bound(after) : map_.upper_bound(after);
  if (it == map_.end()) return std::nullopt;
  return Entry{it->first, it->second};
}

void MemTable::freeze() {
  std::unique_lock lock(mu_);
  frozen_ = true;
}

bool MemTable::frozen() const {
  std::shared_lock lock(mu_);
  return frozen_;
}

uint64_t MemTable::bytes() const {
  std::shared_lock lock(mu_);
  return bytes_;
}

size_t MemTable::size() const {
  std::shared_lock lock(mu_);
  return map_.size();
}

std::vector<MemTable::Entry> MemTable::entries() const {
  std::shared_lock lock(mu_);
  std::vector<Entry> out;
  out.reserve(map_.size());
  for (const auto& [k, v] : map_) out.push_back({k, v});
  return out;
}

}  // namespace flex
