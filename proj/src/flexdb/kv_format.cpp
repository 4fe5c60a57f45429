// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/kv_format.hpp"

#include <functional>

namespace flex::kv {

size_t varint_size(uint64_t v) {
  size_t n = 1;
  while (v >= 0x80) {
    v >>= 7;
    ++n;
  }
  return n;
}

size_t put_varint(uint8_t* out, uint64_t v) {
  size_t n = 0;
  while (v >= 0x80) {
    out[n++] = static_cast<uint8_t>(v | 0x80);
    v >>= 7;
  }
  out[n++] = static_cast<uint8_t>(v);
  return n;
}

void put_varint(std::vector<uint8_t>& out, uint64_t v) {
  uint8_t buf[kMaxVarintBytes];
  const size_t n = put_varint(buf, v);
  out.insert(out.end(), buf, buf + n);
}

std::optional<uint64_t> get_varint(std::span<const uint8_t> in, size_t& pos) {
  uint64_t v = 0;
  for (size_t i = 0; i < kMaxVarintBytes; ++i) {
    if (pos + i >= in.size()) return std::nullopt;
    const uint8_t b = in[pos + i];
    if (i == kMaxVarintBytes - 1 && b > 1) return std::nullopt;  // overflows 64 bits
    v |= static_cast<uint64_t>(b & 0x7f) << (7 * i);
    if (!(b & 0x80)) {
      pos += i + 1;
      return v;
    }
  }
  return std::nullopt;
}

size_t record_size(size_t key_len, size_t value_len) {
  return varint_size(key_len) + varint_size(value_len) + key_len + value_len;
}

void encode_record(std::vector<uint8_t>& out, std::string_view key, std::string_view value) {
  put_varint(out, key.size());
  put_varint(out, value.size());
  out.insert(out.end(), key.begin(), key.end());
  out.insert(out.end(), value.begin(), value.end());
}

std::vector<uint8_t> encode_record(std::string_view key, std::string_view value) {
  std::vector<uint8_t> out;
  out.reserve(record_size(key.size(), value.size()));
  encode_record(out, key, value);
  return out;
}

std::optional<RecordView> decode_record(std::span<const uint8_t> in, size_t pos) {
  const size_t begin = pos;
  const auto klen = get_varint(in, pos);
  if (!klen) return std::nullopt;
  const auto vlen = get_varint(in, pos);
  if (!vlen) return std::nullopt;
  if (*klen == 0 || *klen > in.size() - pos || *vlen > in.size() - pos - *klen) return std::nullopt;
  const char* base = reinterpret_cast<const char*>(in.data());
  RecordView r;
  r.key = std::string_view(base + pos, *klen);
  r.value = std::string_view(base + pos + *klen, *vlen);
  r.size = pos + *klen + *vlen - begin;
  return r;
}

uint16_t fingerprint(std::string_view key) {
  const uint64_t h = std::hash<std::string_view>{}(key);
  return static_cast<uint16_t>(h ^ (h >> 16) ^ (h >> 32) ^ (h >> 48));
}

}  // namespace flex::kv
