// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <random>
#include <set>
#include <thread>

#include "flex/db_log.hpp"
#include "flex/flexdb.hpp"
#include "flex/interval_cache.hpp"
#include "flex/kv_format.hpp"
#include "flex/sparse_index.hpp"
#include "support/db_fixtures.hpp"

namespace flex {
namespace {

using testing::build_interval_example_store;
using testing::interval_example;
using testing::key_of;
using testing::KvModel;
using testing::scan_all;
using testing::small_db_config;
using testing::value_of;

// ---- record format ---------------------------------------------------------

TEST(KvFormat, VarintBoundaries) {
  for (uint64_t v : {0ull, 1ull, 127ull, 128ull, 16383ull, 16384ull, (1ull << 32) + 5, ~0ull}) {
    std::vector<uint8_t> buf;
    kv::put_varint(buf, v);
    EXPECT_EQ(buf.size(), kv::varint_size(v));
    size_t pos = 0;
    EXPECT_EQ(kv::get_varint(buf, pos), v);
    EXPECT_EQ(pos, buf.size());
  }
  std::vector<uint8_t> truncated{0x80, 0x80};
  size_t pos = 0;
  EXPECT_FALSE(kv::get_varint(truncated, pos));
}

TEST(KvFormat, RecordRoundTripAndSize) {
  EXPECT_EQ(kv::record_size(3, 4), 9u);  // ("cat", "abcd")
  const auto rec = kv::encode_record("cat", "abcd");
  ASSERT_EQ(rec.size(), 9u);
  const auto r = kv::decode_record(rec);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->key, "cat");
  EXPECT_EQ(r->value, "abcd");
  EXPECT_EQ(r->size, 9u);

  const std::string big(300, 'v');
  const auto rec2 = kv::encode_record("k", big);
  EXPECT_EQ(rec2.size(), 1 + 2 + 1 + 300u);
  EXPECT_EQ(kv::decode_record(rec2)->value, big);
  for (size_t cut = 0; cut < rec2.size(); ++cut) {
    EXPECT_FALSE(kv::decode_record(std::span(rec2.data(), cut))) << cut;
  }
  EXPECT_FALSE(kv::decode_record(kv::encode_record("", "x")));
}

// ---- sparse index ----------------------------------------------------------

void fill_interval_example(SparseIndex& idx) {
  idx.resize(idx.first(), 42);
  idx.first()->count = 2;
  idx.push_back("bit", 22, 2, true);
  idx.push_back("foo", 30, 2, true);
  idx.push_back("pin", 20, 2, true);
}

TEST(SparseIndexTest, WorkedExampleSearchAndShift) {
  SparseIndex idx(3);  // two leaves, so the shift crosses a node boundary
  fill_interval_example(idx);
  idx.check_invariants();
  ASSERT_GE(idx.height(), 2u);

  IntervalEntry* kit = idx.find("kit");
  EXPECT_EQ(kit->key, "foo");
  EXPECT_EQ(idx.offset(kit), 64u);
  EXPECT_EQ(idx.find("cat")->key, "bit");
  EXPECT_EQ(idx.find("aaa")->key, "");
  EXPECT_EQ(idx.find("zzz")->key, "pin");

  idx.resize(idx.find("cat"), 9);
  idx.check_invariants();
  const auto iv = idx.intervals();
  ASSERT_EQ(iv.size(), 4u);
  EXPECT_EQ(iv[0].offset, 0u);
  EXPECT_EQ(iv[1].offset, 42u);
  EXPECT_EQ(iv[1].size, 31u);
  EXPECT_EQ(iv[2].offset, 73u);
  EXPECT_EQ(iv[3].offset, 103u);
}

// Random resize/split/merge/remove/rename against a flat vector model.
TEST(SparseIndexTest, RandomOpsMatchFlatModel) {
  struct M {
    std::string key;
    uint64_t size;
  };
  std::mt19937_64 rng(3);
  SparseIndex idx(4);
  std::vector<M> model{{"", 0}};
  auto pick = [&] { return rng() % model.size(); };
  auto nth = [&](size_t i) {
    IntervalEntry* e = idx.first();
    while (i--) e = idx.next(e);
    return e;
  };
  for (int op = 0; op < 20000; ++op) {
    const int r = static_cast<int>(rng() % 10);
    if (r < 3) {
      const size_t i = pick();
      const int64_t d = static_cast<int64_t>(rng() % 100) - (r == 0 ? static_cast<int64_t>(model[i].size % 100) : 0);
      idx.resize(nth(i), d);
      model[i].size = static_cast<uint64_t>(static_cast<int64_t>(model[i].size) + d);
    } else if (r < 6) {
      // New key strictly between model[i].key and the next key.
      const size_t i = pick();
      const std::string lo = model[i].key;
      const std::string hi = i + 1 < model.size() ? model[i + 1].key : std::string("\xff\xff\xff\xff");
      std::string k = lo + static_cast<char>('a' + rng() % 26);
      if (k >= hi) continue;
      const uint64_t at = model[i].size ? rng() % (model[i].size + 1) : 0;
      idx.split(nth(i), at, k, 0);
      model.insert(model.begin() + static_cast<ptrdiff_t>(i + 1), {k, model[i].size - at});
      model[i].size = at;
    } else if (r < 8 && model.size() > 1) {
      const size_t i = rng() % (model.size() - 1);
      idx.merge_next(nth(i));
      model[i].size += model[i + 1].size;
      model.erase(model.begin() + static_cast<ptrdiff_t>(i + 1));
    } else if (r < 9 && model.size() > 1) {
      const size_t i = 1 + rng() % (model.size() - 1);
      IntervalEntry* e = nth(i);
      idx.resize(e, -static_cast<int64_t>(model[i].size));
      idx.remove(e);
      model.erase(model.begin() + static_cast<ptrdiff_t>(i));
    } else if (model.size() > 1) {
      const size_t i = 1 + rng() % (model.size() - 1);
      const std::string next = i + 1 < model.size() ? model[i + 1].key : std::string("\xff\xff\xff\xff");
      std::string k = model[i].key + "m";
      if (k >= next) continue;
      idx.set_key(nth(i), k);
      model[i].key = k;
    }
    if (op % 97 == 0) idx.check_invariants();
    ASSERT_EQ(idx.size(), model.size());
  }
  idx.check_invariants();
  uint64_t off = 0;
  const auto iv = idx.intervals();
  for (size_t i = 0; i < model.size(); ++i) {
    ASSERT_EQ(iv[i].key, model[i].key);
    ASSERT_EQ(iv[i].offset, off);
    off += model[i].size;
    // find(k) lands on the interval owning k.
    if (i > 0) {
      ASSERT_EQ(idx.find(model[i].key)->key, model[i].key);
      ASSERT_EQ(idx.find(model[i].key + "\x01")->key, model[i].key);
    }
  }
}

// ---- cache, memtable, logs --------------------------------------------------

TEST(IntervalCacheTest, ClockEvictsUnreferencedSlots) {
  IntervalCache cache(2);
  IntervalEntry a, b, c;
  auto data = std::make_shared<CachedInterval>();
  cache.put(&a, data);
  cache.put(&b, data);
  EXPECT_EQ(cache.size(), 2u);
  // Both referenced: the hand clears a and b, then takes a.
  cache.put(&c, data);
  EXPECT_EQ(a.cache_slot, -1);
  EXPECT_GE(b.cache_slot, 0);
  EXPECT_GE(c.cache_slot, 0);
  // b's bit was cleared by the sweep, c's is set: a replaces b.
  EXPECT_FALSE(cache.get(&a));
  cache.put(&a, data);
  EXPECT_EQ(b.cache_slot, -1);
  EXPECT_TRUE(cache.get(&c));
  EXPECT_EQ(cache.evictions(), 2u);
  EXPECT_EQ(cache.hits(), 1u);
  EXPECT_EQ(cache.misses(), 1u);
  cache.erase(&c);
  EXPECT_EQ(cache.size(), 1u);
}

TEST(IntervalCacheTest, FingerprintLookup) {
  std::vector<uint8_t> bytes;
  for (const char* k : {"a", "b", "c", "d"}) kv::encode_record(bytes, k, std::string("v") + k);
  const auto ci = CachedInterval::decode(bytes);
  ASSERT_EQ(ci->items.size(), 4u);
  EXPECT_EQ(ci->find("c"), 2u);
  EXPECT_FALSE(ci->find("e"));
  EXPECT_EQ(ci->lower_bound("bb"), 2u);
  EXPECT_EQ(ci->byte_offset(2), 10u);
  EXPECT_EQ(ci->encode(), bytes);
  bytes.push_back(0x05);
  EXPECT_THROW(CachedInterval::decode(bytes), Error);
}

TEST(MemTableTest, TombstonesAndFreeze) {
  MemTable m;
  m.put("a", "1");
  m.put("b", "2");
  m.del("a");
  std::string v;
  EXPECT_EQ(m.get("a", &v), MemTable::Lookup::kTombstone);
  EXPECT_EQ(m.get("b", &v), MemTable::Lookup::kValue);
  EXPECT_EQ(v, "2");
  EXPECT_EQ(m.get("c", &v), MemTable::Lookup::kAbsent);
  EXPECT_EQ(m.next("a", false)->key, "b");
  EXPECT_EQ(m.next("a", true)->key, "a");
  EXPECT_FALSE(m.next("b", false));
  m.freeze();
  EXPECT_THROW(m.put("c", "3"), std::logic_error);
}

TEST(DbLogTest, WalRoundTripAndTornTail) {
  MemEnv env;
  auto f = env.open("w");
  {
    dblog::WalWriter w(*f, 7, false, 1 << 20);
    w.append(dblog::WalOp::kPut, "a", "1");
    w.append(dblog::WalOp::kDelete, "b", "");
    w.append(dblog::WalOp::kPut, "c", std::string(100, 'x'));
    w.sync();
  }
  auto got = dblog::read_wal(*f);
  ASSERT_TRUE(got);
  EXPECT_EQ(got->gen, 7u);
  ASSERT_EQ(got->records.size(), 3u);
  EXPECT_EQ(got->records[1], (dblog::WalRecord{dblog::WalOp::kDelete, "b", ""}));

  // Tear the last record: replay stops after the second.
  f->truncate(f->size() - 3);
  got = dblog::read_wal(*f);
  ASSERT_EQ(got->records.size(), 2u);

  // A new generation ignores the older records still in the file.
  std::vector<uint8_t> old(f->size());
  f->read(0, old);
  { dblog::WalWriter w(*f, 9, false, 1 << 20); }
  f->write(dblog::kWalHeaderSize, std::span(old).subspan(dblog::kWalHeaderSize));
  got = dblog::read_wal(*f);
  EXPECT_EQ(got->gen, 9u);
  EXPECT_TRUE(got->records.empty());
}

TEST(DbLogTest, ManifestPicksNewestValidSlot) {
  MemEnv env;
  auto f = env.open("m");
  EXPECT_FALSE(dblog::read_manifest(*f));
  dblog::write_manifest(*f, {1, 0});
  dblog::write_manifest(*f, {2, 5});
  EXPECT_EQ(dblog::read_manifest(*f), (dblog::Manifest{2, 5}));
  // Damage the newer slot (seq 2 lives in slot 0).
  const uint8_t junk[1] = {0xEE};
  f->write(10, junk);
  EXPECT_EQ(dblog::read_manifest(*f), (dblog::Manifest{1, 0}));
}

// ---- store -----------------------------------------------------------------

TEST(FlexDBBasic, PutGetDelete) {
  MemEnv env;
  auto db = FlexDB::open(env, small_db_config());
  EXPECT_FALSE(db->get("a"));
  db->put("a", "1");
  EXPECT_EQ(db->get("a"), "1");
  db->del("a");
  EXPECT_FALSE(db->get("a"));
  db->put("a", "2");
  db->flush();
  EXPECT_EQ(db->get("a"), "2");
  db->del("a");
  db->flush();
  EXPECT_FALSE(db->get("a"));
  EXPECT_EQ(db->space().size(), 0u);
  EXPECT_THROW(db->put("", "x"), Error);
  db->close();
  EXPECT_THROW(db->put("b", "x"), Error);
}

TEST(FlexDBBasic, SeekExamples) {
  MemEnv env;
  auto db = FlexDB::open(env, small_db_config());
  for (const char* k : {"a", "b", "c"}) db->put(k, std::string("v") + k);
  for (bool flushed : {false, true}) {
    if (flushed) db->flush();
    auto it = db->seek("b");
    ASSERT_TRUE(it.valid());
    EXPECT_EQ(it.key(), "b");
    it.next();
    ASSERT_TRUE(it.valid());
    EXPECT_EQ(it.key(), "c");
    EXPECT_EQ(it.value(), "vc");
    it.next();
    EXPECT_FALSE(it.valid());
    EXPECT_FALSE(db->seek("d").valid());
  }
}

TEST(FlexDBBasic, EmptyCommitWritesNothing) {
  MemEnv env;
  auto db = FlexDB::open(env, small_db_config());
  const uint64_t before = env.total_counters().bytes_written;
  db->flush();
  EXPECT_EQ(env.total_counters().bytes_written, before);
  EXPECT_EQ(db->space().size(), 0u);
}

TEST(FlexDBBasic, OversizedRecordRejected) {
  MemEnv env;
  auto db = FlexDB::open(env, small_db_config());
  EXPECT_THROW(db->put("k", std::string(4096, 'x')), Error);  // max_extent is 2 KiB here
}

TEST(FlexDBFigure, SearchAndInsertShiftLaterIntervals) {
  MemEnv env;
  DbConfig cfg = small_db_config();
  cfg.rebuild_stride = 1;
  build_interval_example_store(env, cfg);
  auto db = FlexDB::open(env, cfg);
  auto iv = db->intervals();
  ASSERT_EQ(iv.size(), 4u);
  EXPECT_EQ(iv[1].key, "bit");
  EXPECT_EQ(iv[2].key, "foo");
  EXPECT_EQ(iv[3].key, "pin");

  const IntervalInfo kit = db->interval_for("kit");
  EXPECT_EQ(kit.key, "foo");
  EXPECT_EQ(kit.offset, 64u);
  EXPECT_EQ(db->interval_for("cat").offset, 42u);

  db->put("cat", "abcd");
  db->flush();
  iv = db->intervals();
  ASSERT_EQ(iv.size(), 4u);
  EXPECT_EQ(iv[0].offset, 0u);
  EXPECT_EQ(iv[1].offset, 42u);
  EXPECT_EQ(iv[1].size, 22u + 9u);
  EXPECT_EQ(iv[2].offset, 64u + 9u);
  EXPECT_EQ(iv[3].offset, 94u + 9u);
  // The new record sits between "bit" and "far".
  const auto bytes = db->space().pread(42 + 11, 9);
  EXPECT_EQ(kv::decode_record(bytes)->key, "cat");
  db->check_invariants();
}

TEST(FlexDBFigure, FragmentationMarkFollowsExtentCount) {
  // Four records in one extent, then four records in three extents.
  for (int extents : {1, 3}) {
    MemEnv env;
    DbConfig cfg = small_db_config();
    cfg.rebuild_stride = 1 << 20;
    FlexDB::open(env, cfg)->close();
    {
      auto space = FlexSpace::open(env, cfg.space);
      std::vector<std::vector<uint8_t>> pieces(static_cast<size_t>(extents));
      const char* keys[] = {"a", "b", "c", "d"};
      for (size_t i = 0; i < 4; ++i) {
        kv::encode_record(pieces[extents == 1 ? 0 : std::min<size_t>(i, 2)], keys[i], "vvvv");
      }
      for (size_t i = pieces.size(); i-- > 0;) space->insert_range(0, pieces[i]);
      space->close();
    }
    auto db = FlexDB::open(env, cfg);
    ASSERT_EQ(db->get("c"), "vvvv");
    const auto iv = db->intervals();
    ASSERT_EQ(iv.size(), 1u);
    EXPECT_EQ(iv[0].count, 4u);
    EXPECT_EQ(iv[0].fragmented, extents == 3) << extents;
    if (extents == 3) {
      // An update to a marked interval defragments it.
      db->put("b", "wwww");
      db->flush();
      EXPECT_EQ(db->space().query_range(0, db->space().size()).size(), 1u);
      EXPECT_FALSE(db->intervals()[0].fragmented);
      EXPECT_EQ(db->stats().defrags, 1u);
    }
  }
}

void run_model_ops(FlexDB& db, KvModel& model, std::mt19937_64& rng, int ops, uint64_t key_space, size_t max_value) {
  for (int i = 0; i < ops; ++i) {
    const std::string k = key_of(rng() % key_space);
    const uint64_t r = rng() % 10;
    if (r < 6) {
      const std::string v = value_of(rng, max_value);
      db.put(k, v);
      model[k] = v;
    } else if (r < 8) {
      db.del(k);
      model.erase(k);
    } else {
      const auto got = db.get(k);
      const auto it = model.find(k);
      ASSERT_EQ(got.has_value(), it != model.end()) << k;
      if (got) {
        ASSERT_EQ(*got, it->second) << k;
      }
    }
  }
}

void expect_matches(const FlexDB& db, const KvModel& model, uint64_t key_space) {
  ASSERT_EQ(scan_all(db), model);
  for (uint64_t i = 0; i < key_space; ++i) {
    const auto it = model.find(key_of(i));
    const auto got = db.get(key_of(i));
    ASSERT_EQ(got.has_value(), it != model.end()) << i;
    if (got) {
      ASSERT_EQ(*got, it->second);
    }
  }
}

TEST(FlexDBOracle, RandomOpsMatchOrderedMap) {
  MemEnv env;
  auto db = FlexDB::open(env, small_db_config());
  KvModel model;
  std::mt19937_64 rng(7);
  for (int round = 0; round < 10; ++round) {
    run_model_ops(*db, model, rng, 2000, 3000, 120);
    if (round % 3 == 0) db->flush();
  }
  expect_matches(*db, model, 3000);
  db->flush();
  db->check_invariants();
  expect_matches(*db, model, 3000);
  const auto st = db->stats();
  EXPECT_GT(st.interval_splits, 0u);
  EXPECT_GT(st.interval_merges, 0u);
  for (const auto& iv : db->intervals()) {
    EXPECT_LE(iv.count, 16u);
    EXPECT_LE(iv.size, 16u << 10);
  }
}

TEST(FlexDBOracle, RandomScansMatchModelSlices) {
  MemEnv env;
  auto db = FlexDB::open(env, small_db_config());
  KvModel model;
  std::mt19937_64 rng(8);
  run_model_ops(*db, model, rng, 6000, 2000, 60);
  db->flush();
  run_model_ops(*db, model, rng, 600, 2000, 60);  // leave some in the MemTable
  for (int s = 0; s < 2000; ++s) {
    const std::string start = key_of(rng() % 2100);
    const size_t len = rng() % 101;
    auto it = db->seek(start);
    auto mit = model.lower_bound(start);
    for (size_t n = 0; n < len; ++n, ++mit, it.next()) {
      if (mit == model.end()) {
        ASSERT_FALSE(it.valid());
        break;
      }
      ASSERT_TRUE(it.valid());
      ASSERT_EQ(it.key(), mit->first);
      ASSERT_EQ(it.value(), mit->second);
    }
  }
}

TEST(FlexDBOracle, SmallCacheStaysWriteThrough) {
  MemEnv env;
  DbConfig cfg = small_db_config();
  cfg.cache_intervals = 2;
  auto db = FlexDB::open(env, cfg);
  KvModel model;
  std::mt19937_64 rng(9);
  run_model_ops(*db, model, rng, 5000, 1500, 80);
  db->flush();
  expect_matches(*db, model, 1500);
  EXPECT_GT(db->stats().cache_evictions, 0u);
  EXPECT_LE(db->stats().cache_resident, 2u);
}

TEST(FlexDBRecovery, CleanReopenKeepsEverything) {
  MemEnv env;
  KvModel model;
  std::mt19937_64 rng(10);
  {
    auto db = FlexDB::open(env, small_db_config());
    run_model_ops(*db, model, rng, 6000, 2000, 100);
    db->close();
  }
  auto db = FlexDB::open(env, small_db_config());
  expect_matches(*db, model, 2000);
  db->check_invariants();
  run_model_ops(*db, model, rng, 3000, 2000, 100);
  db->flush();
  expect_matches(*db, model, 2000);
}

TEST(FlexDBRecovery, CrashAfterWalSyncReplaysOnce) {
  MemEnv env;
  KvModel model;
  std::mt19937_64 rng(11);
  DbConfig cfg = small_db_config();
  cfg.memtable_bytes = 1 << 20;  // nothing commits on its own
  {
    auto db = FlexDB::open(env, cfg);
    run_model_ops(*db, model, rng, 300, 400, 50);
    db->flush();
    run_model_ops(*db, model, rng, 300, 400, 50);
    db->sync();
    db->abandon();
  }
  env.restart(CrashMode::kDropAll);
  auto db = FlexDB::open(env, cfg);
  EXPECT_GT(db->stats().wal_records_replayed, 0u);
  expect_matches(*db, model, 400);
  db->check_invariants();
  // A second crash right away replays nothing new and loses nothing.
  db->abandon();
  env.restart(CrashMode::kDropAll);
  db = FlexDB::open(env, cfg);
  EXPECT_EQ(db->stats().wal_records_replayed, 0u);
  expect_matches(*db, model, 400);
}

TEST(FlexDBRecovery, UnsyncedUpdatesAreLostAsAPrefix) {
  MemEnv env;
  DbConfig cfg = small_db_config();
  cfg.memtable_bytes = 1 << 20;
  cfg.wal_buffer_bytes = 64;  // most appends reach the file unsynced
  std::vector<std::string> keys;
  {
    auto db = FlexDB::open(env, cfg);
    db->put("base", "1");
    db->sync();
    for (int i = 0; i < 200; ++i) {
      keys.push_back(key_of(i));
      db->put(keys.back(), "v");
    }
    db->abandon();
  }
  env.restart(CrashMode::kRandomSubset, 5);
  auto db = FlexDB::open(env, cfg);
  EXPECT_EQ(db->get("base"), "1");
  // Survivors form a prefix of the issued puts.
  size_t n = 0;
  while (n < keys.size() && db->get(keys[n])) ++n;
  for (size_t i = n; i < keys.size(); ++i) EXPECT_FALSE(db->get(keys[i])) << i;
}

TEST(FlexDBRecovery, StrideRebuildLandsOnRecordBoundaries) {
  MemEnv env;
  DbConfig cfg = small_db_config();
  cfg.check_after_commit = false;
  cfg.memtable_bytes = 256 << 10;
  KvModel model;
  std::mt19937_64 rng(12);
  {
    auto db = FlexDB::open(env, cfg);
    for (int i = 0; i < 20000; ++i) {
      const std::string k = key_of(rng() % 1000000);
      const std::string v = value_of(rng, 200);
      db->put(k, v);
      model[k] = v;
    }
    db->close();
  }
  for (uint64_t stride : {uint64_t{4} << 10, uint64_t{16} << 10}) {
    cfg.rebuild_stride = stride;
    auto db = FlexDB::open(env, cfg);
    const auto st = db->stats();
    EXPECT_EQ(st.rebuild_read_extent_calls, (db->space().size() - 1) / stride);
    EXPECT_EQ(st.rebuild_hole_warnings, 0u);
    db->check_invariants();  // boundaries on records, keys = smallest keys
    expect_matches(*db, model, 0);
    db->close();
  }
}

TEST(FlexDBRecovery, PosixStoreRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "flexdb_posix_test";
  std::filesystem::remove_all(dir);
  KvModel model;
  std::mt19937_64 rng(13);
  {
    auto db = FlexDB::open(dir, small_db_config());
    run_model_ops(*db, model, rng, 3000, 1000, 40);
  }
  {
    auto db = FlexDB::open(dir, small_db_config());
    expect_matches(*db, model, 1000);
  }
  std::filesystem::remove_all(dir);
}

TEST(FlexDBConcurrency, ReadersSeeWholeUpdatesDuringBackgroundCommits) {
  MemEnv env;
  DbConfig cfg = small_db_config();
  cfg.background_commit = true;
  cfg.check_after_commit = false;
  cfg.commit_yield_pairs = 50;
  auto db = FlexDB::open(env, cfg);
  constexpr int kKeys = 500;
  // Value of key i at version n is "<i>:<n>" padded; versions only grow.
  auto value = [](int i, int n) { return std::to_string(i) + ":" + std::to_string(n) + std::string(n % 7, '.'); };
  for (int i = 0; i < kKeys; ++i) db->put(key_of(i), value(i, 0));
  std::atomic<bool> done{false};
  std::atomic<int> bad{0};
  std::vector<std::thread> readers;
  for (int t = 0; t < 3; ++t) {
    readers.emplace_back([&, t] {
      std::mt19937_64 rng(100 + t);
      std::vector<int> seen(kKeys, 0);
      while (!done.load()) {
        const int i = static_cast<int>(rng() % kKeys);
        const auto v = db->get(key_of(i));
        if (!v) {
          ++bad;
          continue;
        }
        const auto colon = v->find(':');
        const int n = std::stoi(v->substr(colon + 1));
        if (v->substr(0, colon) != std::to_string(i) || *v != value(i, n) || n < seen[i]) ++bad;
        seen[i] = n;
      }
    });
  }
  std::mt19937_64 rng(99);
  std::vector<int> version(kKeys, 0);
  for (int op = 0; op < 20000; ++op) {
    const int i = static_cast<int>(rng() % kKeys);
    db->put(key_of(i), value(i, ++version[i]));
  }
  db->flush();
  done = true;
  for (auto& r : readers) r.join();
  EXPECT_EQ(bad.load(), 0);
  EXPECT_GT(db->stats().commits, 1u);
  for (int i = 0; i < kKeys; ++i) ASSERT_EQ(db->get(key_of(i)), value(i, version[i]));
  db->check_invariants();
}

}  // namespace
}  // namespace flex
