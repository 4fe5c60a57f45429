// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/space_format.hpp"

#include <zlib.h>

#include "flex/status.hpp"

namespace flex::format {

uint32_t crc32(std::span<const uint8_t> bytes, uint32_t seed) {
  return static_cast<uint32_t>(::crc32(seed, bytes.data(), static_cast<uInt>(bytes.size())));
}

void encode_entry(const LogEntry& e, uint8_t* out) {
  const uint64_t word1 = (e.phys & kUnmapped) | (uint64_t{e.flags & 0x3fffu} << 48) |
                         (uint64_t{static_cast<uint8_t>(e.op)} << 62);
  put<uint64_t>(out, e.offset);
  put<uint64_t>(out + 8, word1);
  put<uint64_t>(out + 16, e.length);
}

LogEntry decode_entry(const uint8_t* in) {
  LogEntry e;
  e.offset = get<uint64_t>(in);
  const auto word1 = get<uint64_t>(in + 8);
  e.phys = word1 & kUnmapped;
  e.flags = static_cast<uint16_t>((word1 >> 48) & 0x3fff);
  e.op = static_cast<LogOp>(word1 >> 62);
  e.length = get<uint64_t>(in + 16);
  return e;
}

std::array<uint8_t, kLogHeaderSize> encode_log_header(uint64_t base_version) {
  std::array<uint8_t, kLogHeaderSize> h{};
  put<uint32_t>(h.data(), kLogMagic);
  h[4] = kFormatVersion;
  put<uint64_t>(h.data() + 8, base_version);
  put<uint32_t>(h.data() + 16, crc32(std::span(h.data(), 16)));
  return h;
}

std::optional<uint64_t> decode_log_header(std::span<const uint8_t> bytes) {
  if (bytes.size() < kLogHeaderSize) return std::nullopt;
  if (get<uint32_t>(bytes.data()) != kLogMagic || bytes[4] != kFormatVersion) return std::nullopt;
  if (get<uint32_t>(bytes.data() + 16) != crc32(bytes.first(16))) return std::nullopt;
  return get<uint64_t>(bytes.data() + 8);
}

namespace {

uint32_t batch_crc(uint32_t count, uint64_t seq, uint64_t base_version, std::span<const uint8_t> entries) {
  uint8_t head[20];
  put<uint32_t>(head, count);
  put<uint64_t>(head + 4, seq);
  put<uint64_t>(head + 12, base_version);
  return crc32(entries, crc32(std::span<const uint8_t>(head, sizeof(head))));
}

}  // namespace

std::vector<uint8_t> encode_batch(std::span<const LogEntry> entries, uint64_t seq, uint64_t base_version) {
  std::vector<uint8_t> out(kBatchHeaderSize + entries.size() * kLogEntrySize);
  for (size_t i = 0; i < entries.size(); ++i) {
    encode_entry(entries[i], out.data() + kBatchHeaderSize + i * kLogEntrySize);
  }
  const auto count = static_cast<uint32_t>(entries.size());
  put<uint32_t>(out.data(), count);
  put<uint32_t>(out.data() + 4,
                batch_crc(count, seq, base_version, std::span(out).subspan(kBatchHeaderSize)));
  put<uint64_t>(out.data() + 8, seq);
  put<uint64_t>(out.data() + 16, base_version);
  return out;
}

BatchHeader decode_batch_header(const uint8_t* in) {
  return BatchHeader{get<uint32_t>(in), get<uint32_t>(in + 4), get<uint64_t>(in + 8), get<uint64_t>(in + 16)};
}

bool batch_crc_ok(const BatchHeader& h, std::span<const uint8_t> entry_bytes) {
  return batch_crc(h.count, h.seq, h.base_version, entry_bytes) == h.crc;
}

std::vector<uint8_t> encode_tree_header(const TreeHeader& h) {
  std::vector<uint8_t> out(kHeaderSlotSize, 0);
  uint8_t* p = out.data();
  put<uint32_t>(p, kTreeMagic);
  p[4] = kFormatVersion;
  put<uint64_t>(p + 8, h.version);
  put<uint64_t>(p + 16, h.root_slot);
  put<int64_t>(p + 24, h.root_shift);
  const auto& c = h.config;
  put<uint64_t>(p + 32, c.segment_size);
  put<uint64_t>(p + 40, c.max_extent);
  put<uint32_t>(p + 48, c.utilization_num);
  put<uint32_t>(p + 52, c.utilization_den);
  put<uint64_t>(p + 56, c.reserved_free_segments);
  put<uint64_t>(p + 64, c.max_segments);
  put<uint64_t>(p + 72, c.log_size_threshold);
  put<uint64_t>(p + 80, c.log_buffer_entries);
  put<uint64_t>(p + 88, c.tree_capacity);
  put<uint64_t>(p + 96, c.gc_batch);
  put<uint32_t>(p + 104, crc32(std::span(out).first(104)));
  return out;
}

std::optional<TreeHeader> decode_tree_header(std::span<const uint8_t> bytes) {
  if (bytes.size() < 108) return std::nullopt;
  const uint8_t* p = bytes.data();
  if (get<uint32_t>(p) != kTreeMagic || p[4] != kFormatVersion) return std::nullopt;
  if (get<uint32_t>(p + 104) != crc32(bytes.first(104))) return std::nullopt;
  TreeHeader h;
  h.version = get<uint64_t>(p + 8);
  h.root_slot = get<uint64_t>(p + 16);
  h.root_shift = get<int64_t>(p + 24);
  auto& c = h.config;
  c.segment_size = get<uint64_t>(p + 32);
  c.max_extent = get<uint64_t>(p + 40);
  c.utilization_num = get<uint32_t>(p + 48);
  c.utilization_den = get<uint32_t>(p + 52);
  c.reserved_free_segments = get<uint64_t>(p + 56);
  c.max_segments = get<uint64_t>(p + 64);
  c.log_size_threshold = get<uint64_t>(p + 72);
  c.log_buffer_entries = get<uint64_t>(p + 80);
  c.tree_capacity = get<uint64_t>(p + 88);
  c.gc_batch = get<uint64_t>(p + 96);
  return h;
}

size_t node_slot_size(size_t capacity) {
  const size_t raw = kNodeHeaderSize + capacity * kInternalEntrySize;
  return (raw + 255) / 256 * 256;
}

uint64_t slot_offset(uint64_t slot, size_t capacity) {
  return kNodeAreaOffset + slot * node_slot_size(capacity);
}

namespace {

void finish_node(uint8_t kind, size_t count, std::span<uint8_t> out, size_t payload) {
  out[0] = kind;
  out[1] = 0;
  put<uint16_t>(out.data() + 2, static_cast<uint16_t>(count));
  put<uint32_t>(out.data() + 4, crc32(out.subspan(kNodeHeaderSize, payload), crc32(out.first(4))));
}

}  // namespace

void encode_leaf(std::span<const ExtentEntry> entries, std::span<uint8_t> out) {
  std::fill(out.begin(), out.end(), 0);
  uint8_t* p = out.data() + kNodeHeaderSize;
  for (const auto& e : entries) {
    put48(p, e.partial_offset);
    put<uint32_t>(p + 6, e.length);
    put48(p + 10, e.phys);
    p += kLeafEntrySize;
  }
  finish_node(0, entries.size(), out, entries.size() * kLeafEntrySize);
}

void encode_internal(std::span<const int64_t> pivots, std::span<const int64_t> shifts,
                     std::span<const uint64_t> child_slots, std::span<uint8_t> out) {
  std::fill(out.begin(), out.end(), 0);
  uint8_t* p = out.data() + kNodeHeaderSize;
  const size_t n = child_slots.size();
  for (size_t i = 0; i < n; ++i) {
    put<int64_t>(p, shifts[i]);
    put<uint64_t>(p + 8, child_slots[i]);
    put<int64_t>(p + 16, i == 0 ? 0 : pivots[i - 1]);
    p += kInternalEntrySize;
  }
  finish_node(1, n, out, n * kInternalEntrySize);
}

DecodedNode decode_node(std::span<const uint8_t> bytes, size_t capacity) {
  DecodedNode node;
  const uint8_t kind = bytes[0];
  const size_t count = get<uint16_t>(bytes.data() + 2);
  if (kind > 1 || count > capacity) throw Error(Errc::kCorruption, "bad tree node header");
  const size_t payload = count * (kind == 0 ? kLeafEntrySize : kInternalEntrySize);
  if (kNodeHeaderSize + payload > bytes.size()) throw Error(Errc::kCorruption, "tree node overflows slot");
  const uint32_t crc = crc32(bytes.subspan(kNodeHeaderSize, payload), crc32(bytes.first(4)));
  if (crc != get<uint32_t>(bytes.data() + 4)) throw Error(Errc::kCorruption, "tree node checksum mismatch");
  const uint8_t* p = bytes.data() + kNodeHeaderSize;
  node.leaf = kind == 0;
  if (node.leaf) {
    for (size_t i = 0; i < count; ++i, p += kLeafEntrySize) {
      node.extents.push_back(ExtentEntry{get48(p), get<uint32_t>(p + 6), get48(p + 10)});
    }
  } else {
    for (size_t i = 0; i < count; ++i, p += kInternalEntrySize) {
      node.shifts.push_back(get<int64_t>(p));
      node.child_slots.push_back(get<uint64_t>(p + 8));
      if (i > 0) node.pivots.push_back(get<int64_t>(p + 16));
    }
  }
  return node;
}

}  // namespace flex::format
