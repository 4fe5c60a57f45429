// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/db_log.hpp"

#include <algorithm>

#include "flex/kv_format.hpp"
#include "flex/space_format.hpp"
#include "flex/status.hpp"

namespace flex::dblog {

using format::get;
using format::put;

namespace {

constexpr uint32_t kWalMagic = 0x4c575846;       // "FXWL"
constexpr uint32_t kManifestMagic = 0x464d5846;  // "FXMF"
constexpr uint8_t kFormat = 1;
constexpr uint32_t kMaxPayload = 1u << 30;

uint32_t record_crc(uint64_t gen, std::span<const uint8_t> payload) {
  uint8_t g[8];
  put<uint64_t>(g, gen);
  return format::crc32(payload, format::crc32(g));
}

}  // namespace

std::array<uint8_t, kWalHeaderSize> encode_wal_header(uint64_t gen) {
  std::array<uint8_t, kWalHeaderSize> h{};
  put<uint32_t>(h.data(), kWalMagic);
  h[4] = kFormat;
  put<uint64_t>(h.data() + 8, gen);
  put<uint32_t>(h.data() + 16, format::crc32(std::span(h.data(), 16)));
  return h;
}

std::optional<uint64_t> decode_wal_header(std::span<const uint8_t> bytes) {
  if (bytes.size() < kWalHeaderSize) return std::nullopt;
  if (get<uint32_t>(bytes.data()) != kWalMagic || bytes[4] != kFormat) return std::nullopt;
  if (get<uint32_t>(bytes.data() + 16) != format::crc32(bytes.first(16))) return std::nullopt;
  return get<uint64_t>(bytes.data() + 8);
}

void append_wal_record(std::vector<uint8_t>& out, uint64_t gen, WalOp op, std::string_view key,
                       std::string_view value) {
  const size_t at = out.size();
  out.resize(at + kWalRecordHeaderSize);
  out.push_back(static_cast<uint8_t>(op));
  kv::encode_record(out, key, value);
  const auto payload = std::span<const uint8_t>(out).subspan(at + kWalRecordHeaderSize);
  put<uint32_t>(out.data() + at, static_cast<uint32_t>(payload.size()));
  put<uint32_t>(out.data() + at + 4, record_crc(gen, payload));
}

std::optional<WalContents> read_wal(StorageFile& file) {
  const uint64_t size = file.size();
  if (size < kWalHeaderSize) return std::nullopt;
  std::vector<uint8_t> bytes(size);
  file.read(0, bytes);
  const auto gen = decode_wal_header(bytes);
  if (!gen) return std::nullopt;
  WalContents out;
  out.gen = *gen;
  size_t pos = kWalHeaderSize;
  while (size - pos >= kWalRecordHeaderSize) {
    const uint32_t len = get<uint32_t>(bytes.data() + pos);
    const uint32_t crc = get<uint32_t>(bytes.data() + pos + 4);
    if (len < 2 || len > kMaxPayload || len > size - pos - kWalRecordHeaderSize) break;
    const auto payload = std::span<const uint8_t>(bytes).subspan(pos + kWalRecordHeaderSize, len);
    if (record_crc(*gen, payload) != crc) break;
    const auto op = static_cast<WalOp>(payload[0]);
    const auto rec = kv::decode_record(payload, 1);
    if ((op != WalOp::kPut && op != WalOp::kDelete) || !rec || rec->size != len - 1) break;
    out.records.push_back({op, std::string(rec->key), std::string(rec->value)});
    pos += kWalRecordHeaderSize + len;
  }
  out.valid_end = pos;
  return out;
}

WalWriter::WalWriter(StorageFile& file, uint64_t gen, bool sync_each, size_t buffer_limit)
    : file_(file), gen_(gen), sync_each_(sync_each), buffer_limit_(buffer_limit) {
  // Leftover records of an older generation fail their crc under the new header.
  file_.write(0, encode_wal_header(gen_));
  file_.truncate(kWalHeaderSize);
  file_.sync();
}

void WalWriter::append(WalOp op, std::string_view key, std::string_view value) {
  const size_t before = buffer_.size();
  append_wal_record(buffer_, gen_, op, key, value);
  try {
    if (sync_each_) {
      sync();
    } else if (buffer_.size() >= buffer_limit_) {
      write_buffer();
    }
  } catch (...) {
    if (buffer_.size() > before) buffer_.resize(before);
    throw;
  }
}

void WalWriter::write_buffer() {
  if (buffer_.empty()) return;
  file_.write(end_, buffer_);
  end_ += buffer_.size();
  buffer_.clear();
  unsynced_ = true;
}

void WalWriter::sync() {
  write_buffer();
  if (!unsynced_) return;
  file_.sync();
  unsynced_ = false;
}

std::array<uint8_t, kManifestSlotSize> encode_manifest(const Manifest& m) {
  std::array<uint8_t, kManifestSlotSize> s{};
  put<uint32_t>(s.data(), kManifestMagic);
  s[4] = kFormat;
  put<uint64_t>(s.data() + 8, m.seq);
  put<uint64_t>(s.data() + 16, m.committed_gen);
  std::copy(kComparatorTag.begin(), kComparatorTag.end(), s.begin() + 24);
  put<uint32_t>(s.data() + 40, format::crc32(std::span(s.data(), 40)));
  return s;
}

std::optional<Manifest> decode_manifest(std::span<const uint8_t> bytes) {
  if (bytes.size() < kManifestSlotSize) return std::nullopt;
  if (get<uint32_t>(bytes.data()) != kManifestMagic || bytes[4] != kFormat) return std::nullopt;
  if (get<uint32_t>(bytes.data() + 40) != format::crc32(bytes.first(40))) return std::nullopt;
  const auto tag = std::string_view(reinterpret_cast<const char*>(bytes.data() + 24), 16);
  if (tag.substr(0, tag.find('\0')) != kComparatorTag) {
    throw Error(Errc::kCorruption, "store was created with a different key comparator");
  }
  return Manifest{get<uint64_t>(bytes.data() + 8), get<uint64_t>(bytes.data() + 16)};
}

std::optional<Manifest> read_manifest(StorageFile& file) {
  std::optional<Manifest> best;
  for (uint64_t slot = 0; slot < 2; ++slot) {
    std::array<uint8_t, kManifestSlotSize> buf{};
    file.read(slot * kManifestSlotStride, buf);
    const auto m = decode_manifest(buf);
    if (m && (!best || m->seq > best->seq)) best = m;
  }
  return best;
}

void write_manifest(StorageFile& file, const Manifest& m) {
  file.write((m.seq % 2) * kManifestSlotStride, encode_manifest(m));
  file.sync();
}

}  // namespace flex::dblog
