// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/interval_cache.hpp"

#include <algorithm>

#include "flex/kv_format.hpp"
#include "flex/status.hpp"

namespace flex {

size_t CachedItem::encoded_size() const { return kv::record_size(key.size(), value.size()); }

std::shared_ptr<CachedInterval> CachedInterval::decode(std::span<const uint8_t> bytes) {
  auto out = std::make_shared<CachedInterval>();
  size_t pos = 0;
  while (pos < bytes.size()) {
    const auto r = kv::decode_record(bytes, pos);
    if (!r) throw Error(Errc::kCorruption, "undecodable KV record in interval");
    if (!out->items.empty() && r->key <= out->items.back().key) {
      throw Error(Errc::kCorruption, "KV records out of order");
    }
    out->items.push_back({kv::fingerprint(r->key), std::string(r->key), std::string(r->value)});
    pos += r->size;
  }
  return out;
}

std::vector<uint8_t> CachedInterval::encode() const {
  std::vector<uint8_t> out;
  out.reserve(bytes());
  for (const auto& it : items) kv::encode_record(out, it.key, it.value);
  return out;
}

std::optional<size_t> CachedInterval::find(std::string_view key) const {
  const uint16_t fp = kv::fingerprint(key);
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i].fp == fp && items[i].key == key) return i;
  }
  return std::nullopt;
}

size_t CachedInterval::lower_bound(std::string_view key) const {
  const auto it = std::lower_bound(items.begin(), items.end(), key,
                                   [](const CachedItem& a, std::string_view k) { return a.key < k; });
  return static_cast<size_t>(it - items.begin());
}

uint64_t CachedInterval::byte_offset(size_t index) const {
  uint64_t off = 0;
  for (size_t i = 0; i < index; ++i) off += items[i].encoded_size();
  return off;
}

IntervalCache::IntervalCache(size_t capacity) : slots_(std::max<size_t>(capacity, 1)) {
  free_.reserve(slots_.size());
  for (size_t i = slots_.size(); i-- > 0;) free_.push_back(i);
}

std::shared_ptr<CachedInterval> IntervalCache::get(IntervalEntry* e) {
  if (e->cache_slot < 0) {
    ++misses_;
    return nullptr;
  }
  ++hits_;
  Slot& s = slots_[static_cast<size_t>(e->cache_slot)];
  s.referenced = true;
  return s.data;
}

std::shared_ptr<CachedInterval> IntervalCache::peek(const IntervalEntry* e) const {
  return e->cache_slot < 0 ? nullptr : slots_[static_cast<size_t>(e->cache_slot)].data;
}

size_t IntervalCache::victim() {
  for (;;) {
    Slot& s = slots_[hand_];
    const size_t at = hand_;
    hand_ = (hand_ + 1) % slots_.size();
    if (s.referenced) {
      s.referenced = false;
      continue;
    }
    s.owner->cache_slot = -1;
    s.owner = nullptr;
    s.data.reset();
    --resident_;
    ++evictions_;
    return at;
  }
}

void IntervalCache::put(IntervalEntry* e, std::shared_ptr<CachedInterval> data) {
  if (e->cache_slot >= 0) {
    Slot& s = slots_[static_cast<size_t>(e->cache_slot)];
    s.data = std::move(data);
    s.referenced = true;
    return;
  }
  size_t at = 0;
  if (!free_.empty()) {
    at = free_.back();
    free_.pop_back();
  } else {
    at = victim();
  }
  slots_[at] = Slot{e, std::move(data), true};
  e->cache_slot = static_cast<int64_t>(at);
  ++resident_;
}

void IntervalCache::erase(IntervalEntry* e) {
  if (e->cache_slot < 0) return;
  const auto at = static_cast<size_t>(e->cache_slot);
  slots_[at] = Slot{};
  e->cache_slot = -1;
  free_.push_back(at);
  --resident_;
}

void IntervalCache::clear() {
  for (size_t i = 0; i < slots_.size(); ++i) {
    if (slots_[i].owner) erase(slots_[i].owner);
  }
}

std::vector<IntervalEntry*> IntervalCache::residents() const {
  std::vector<IntervalEntry*> out;
  for (const auto& s : slots_) {
    if (s.owner) out.push_back(s.owner);
  }
  return out;
}

}  // namespace flex
