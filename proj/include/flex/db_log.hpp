// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

// Write-ahead log and manifest of a FlexDB store.
//
// WAL file: 32-byte header (magic "FXWL", format u8, pad, generation u64,
// crc u32), then records of [payload length u32][crc u32][payload]. The
// record crc covers the generation and the payload, so records left over
// from an older generation never parse. Payload: op u8, varint key length,
// varint value length, key, value.
//
// Manifest file: two 64-byte slots at 0 and 512 (magic "FXMF", format u8,
// pad, seq u64, committed generation u64, comparator tag[16], crc u32). The
// valid slot with the higher seq wins.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "flex/storage.hpp"

namespace flex::dblog {

enum class WalOp : uint8_t { kPut = 1, kDelete = 2 };

struct WalRecord {
  WalOp op = WalOp::kPut;
  std::string key;
  std::string value;
  friend bool operator==(const WalRecord&, const WalRecord&) = default;
};

inline constexpr size_t kWalHeaderSize = 32;
inline constexpr size_t kWalRecordHeaderSize = 8;

std::array<uint8_t, kWalHeaderSize> encode_wal_header(uint64_t gen);
std::optional<uint64_t> decode_wal_header(std::span<const uint8_t> bytes);
void append_wal_record(std::vector<uint8_t>& out, uint64_t gen, WalOp op, std::string_view key,
                       std::string_view value);

struct WalContents {
  uint64_t gen = 0;
  std::vector<WalRecord> records;
  uint64_t valid_end = 0;  // end of the last intact record
};

// nullopt when the file has no valid header. Stops at the first torn record.
std::optional<WalContents> read_wal(StorageFile& file);

// Appends records to a WAL file that it resets to an empty log of gen.
class WalWriter {
 public:
  WalWriter(StorageFile& file, uint64_t gen, bool sync_each, size_t buffer_limit);

  // On failure the record is dropped from the buffer and the error rethrown.
  void append(WalOp op, std::string_view key, std::string_view value);
  // Writes buffered records and makes them durable.
  void sync();
  uint64_t gen() const { return gen_; }

 private:
  void write_buffer();

  StorageFile& file_;
  uint64_t gen_;
  bool sync_each_;
  size_t buffer_limit_;
  uint64_t end_ = kWalHeaderSize;
  std::vector<uint8_t> buffer_;
  bool unsynced_ = false;
};

inline constexpr size_t kManifestSlotSize = 64;
inline constexpr uint64_t kManifestSlotStride = 512;
inline constexpr std::string_view kComparatorTag = "bytewise";

struct Manifest {
  uint64_t seq = 0;
  uint64_t committed_gen = 0;
  friend bool operator==(const Manifest&, const Manifest&) = default;
};

std::array<uint8_t, kManifestSlotSize> encode_manifest(const Manifest& m);
// Throws Error(kCorruption) on a valid slot with a foreign comparator.
std::optional<Manifest> decode_manifest(std::span<const uint8_t> bytes);

// Reads both slots. nullopt when neither is valid.
std::optional<Manifest> read_manifest(StorageFile& file);
// Writes m into the slot its seq selects, then syncs.
void write_manifest(StorageFile& file, const Manifest& m);

}  // namespace flex::dblog
