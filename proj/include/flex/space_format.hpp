// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

// On-disk formats of a flexible address space. All integers little-endian.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <vector>

#include "flex/flextree.hpp"

namespace flex::format {

static_assert(std::endian::native == std::endian::little, "on-disk codecs assume a little-endian host");

template <typename T>
inline void put(uint8_t* p, T v) {
  std::memcpy(p, &v, sizeof(T));
}
template <typename T>
inline T get(const uint8_t* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}
inline void put48(uint8_t* p, uint64_t v) { std::memcpy(p, &v, 6); }
inline uint64_t get48(const uint8_t* p) {
  uint64_t v = 0;
  std::memcpy(&v, p, 6);
  return v;
}

uint32_t crc32(std::span<const uint8_t> bytes, uint32_t seed = 0);

// ---- logical log -------------------------------------------------------

enum class LogOp : uint8_t { kInsert = 0, kRemove = 1, kWrite = 2, kRelocate = 3 };

inline constexpr uint16_t kLogFlagCoalesce = 1;
inline constexpr size_t kLogEntrySize = 24;

// word0: logical offset (old phys for RELOCATE)
// word1: bits 0..47 phys (new phys for RELOCATE), 48..61 flags, 62..63 op
// word2: length
struct LogEntry {
  LogOp op = LogOp::kInsert;
  uint16_t flags = 0;
  uint64_t offset = 0;
  uint64_t phys = kUnmapped;
  uint64_t length = 0;

  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

void encode_entry(const LogEntry& e, uint8_t* out);
LogEntry decode_entry(const uint8_t* in);

inline constexpr uint32_t kLogMagic = 0x474c5846;  // "FXLG"
inline constexpr uint8_t kFormatVersion = 1;
inline constexpr size_t kLogHeaderSize = 24;
inline constexpr size_t kBatchHeaderSize = 24;

// Log file header: magic u32, format u8, pad[3], base_version u64, crc u32, pad u32.
std::array<uint8_t, kLogHeaderSize> encode_log_header(uint64_t base_version);
std::optional<uint64_t> decode_log_header(std::span<const uint8_t> bytes);

// Batch: count u32, crc u32, seq u64, base_version u64, then count entries.
// The crc covers count, seq, base_version and the entry bytes.
std::vector<uint8_t> encode_batch(std::span<const LogEntry> entries, uint64_t seq, uint64_t base_version);

struct BatchHeader {
  uint32_t count = 0;
  uint32_t crc = 0;
  uint64_t seq = 0;
  uint64_t base_version = 0;
};
BatchHeader decode_batch_header(const uint8_t* in);
bool batch_crc_ok(const BatchHeader& h, std::span<const uint8_t> entry_bytes);

// ---- tree file ---------------------------------------------------------

inline constexpr uint32_t kTreeMagic = 0x52545846;  // "FXTR"
inline constexpr size_t kHeaderSlotSize = 4096;
inline constexpr size_t kNodeAreaOffset = 2 * kHeaderSlotSize;

struct PersistedConfig {
  uint64_t segment_size = 0;
  uint64_t max_extent = 0;
  uint32_t utilization_num = 0;
  uint32_t utilization_den = 0;
  uint64_t reserved_free_segments = 0;
  uint64_t max_segments = 0;
  uint64_t log_size_threshold = 0;
  uint64_t log_buffer_entries = 0;
  uint64_t tree_capacity = 0;
  uint64_t gc_batch = 0;

  friend bool operator==(const PersistedConfig&, const PersistedConfig&) = default;
};

struct TreeHeader {
  uint64_t version = 0;
  uint64_t root_slot = 0;
  int64_t root_shift = 0;
  PersistedConfig config;

  friend bool operator==(const TreeHeader&, const TreeHeader&) = default;
};

std::vector<uint8_t> encode_tree_header(const TreeHeader& h);
std::optional<TreeHeader> decode_tree_header(std::span<const uint8_t> bytes);

inline constexpr size_t kNodeHeaderSize = 8;  // kind u8, pad u8, count u16, crc u32
inline constexpr size_t kLeafEntrySize = 16;  // partial 48, length 32, phys 48
inline constexpr size_t kInternalEntrySize = 24;

size_t node_slot_size(size_t capacity);
uint64_t slot_offset(uint64_t slot, size_t capacity);

void encode_leaf(std::span<const ExtentEntry> entries, std::span<uint8_t> out);
void encode_internal(std::span<const int64_t> pivots, std::span<const int64_t> shifts,
                     std::span<const uint64_t> child_slots, std::span<uint8_t> out);

struct DecodedNode {
  bool leaf = true;
  std::vector<ExtentEntry> extents;
  std::vector<int64_t> pivots;
  std::vector<int64_t> shifts;
  std::vector<uint64_t> child_slots;
};
// Throws Error(kCorruption) on a bad checksum or count.
DecodedNode decode_node(std::span<const uint8_t> bytes, size_t capacity);

}  // namespace flex::format
