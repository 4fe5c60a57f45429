// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

// KV record encoding: varint(key length) | varint(value length) | key | value.
// Varints are base-128, least significant group first.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flex::kv {

inline constexpr size_t kMaxVarintBytes = 10;

size_t varint_size(uint64_t v);
// Appends the encoding of v to out.
void put_varint(std::vector<uint8_t>& out, uint64_t v);
size_t put_varint(uint8_t* out, uint64_t v);
// Decodes a varint at in[pos], advancing pos. nullopt when truncated or longer than 10 bytes.
std::optional<uint64_t> get_varint(std::span<const uint8_t> in, size_t& pos);

size_t record_size(size_t key_len, size_t value_len);
void encode_record(std::vector<uint8_t>& out, std::string_view key, std::string_view value);
std::vector<uint8_t> encode_record(std::string_view key, std::string_view value);

struct RecordView {
  std::string_view key;
  std::string_view value;
  size_t size = 0;  // encoded bytes
};

// Decodes the record at in[pos]. nullopt when the bytes are truncated or the key is empty.
std::optional<RecordView> decode_record(std::span<const uint8_t> in, size_t pos = 0);

// 16-bit fingerprint used to filter key comparisons in cached intervals.
uint16_t fingerprint(std::string_view key);

}  // namespace flex::kv
