// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/flexdb.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

#include "flex/kv_format.hpp"
#include "flex/status.hpp"

namespace flex {

using dblog::WalOp;

// ---- open / close --------------------------------------------------------

FlexDB::FlexDB(StorageEnv& env, std::unique_ptr<StorageEnv> owned, const DbConfig& config)
    : env_(env),
      owned_env_(std::move(owned)),
      config_(config),
      index_(config.index_capacity),
      cache_(config.cache_intervals) {}

std::unique_ptr<FlexDB> FlexDB::open(StorageEnv& env, const DbConfig& config) {
  if (config.interval_max_items < 2 || config.interval_max_bytes == 0 || config.rebuild_stride == 0 ||
      config.commit_yield_pairs == 0 || config.memtable_bytes == 0) {
    throw Error(Errc::kInvalidArgument, "invalid store configuration");
  }
  std::unique_ptr<FlexDB> db(new FlexDB(env, nullptr, config));
  db->start_or_abandon();
  return db;
}

std::unique_ptr<FlexDB> FlexDB::open(const std::filesystem::path& dir, const DbConfig& config) {
  std::filesystem::create_directories(dir);
  auto env = std::make_unique<PosixEnv>(dir);
  StorageEnv& ref = *env;
  std::unique_ptr<FlexDB> db(new FlexDB(ref, std::move(env), config));
  db->start_or_abandon();
  return db;
}

void FlexDB::start_or_abandon() {
  try {
    start();
  } catch (...) {
    abandon();
    throw;
  }
}

void FlexDB::start() {
  manifest_file_ = env_.open(kManifestFile);
  wal_files_[0] = env_.open(kWalFiles[0]);
  wal_files_[1] = env_.open(kWalFiles[1]);
  const auto m = dblog::read_manifest(*manifest_file_);
  space_ = FlexSpace::open(env_, config_.space);
  if (m) {
    manifest_ = *m;
  } else {
    // A crash during creation can leave an empty space without a manifest.
    if (space_->size() != 0) throw Error(Errc::kCorruption, "store manifest missing");
    manifest_ = {1, 0};
    dblog::write_manifest(*manifest_file_, manifest_);
  }
  {
    std::unique_lock lock(db_mu_);
    rebuild_index();
  }

  // WAL generations newer than the committed one hold updates missing from the space.
  std::vector<dblog::WalContents> logs;
  for (auto& f : wal_files_) {
    auto w = dblog::read_wal(*f);
    if (w && w->gen > manifest_.committed_gen) logs.push_back(std::move(*w));
  }
  std::sort(logs.begin(), logs.end(), [](const auto& a, const auto& b) { return a.gen < b.gen; });
  gen_ = manifest_.committed_gen;
  auto replayed = std::make_shared<MemTable>();
  for (const auto& w : logs) {
    for (const auto& r : w.records) {
      if (r.op == WalOp::kPut) {
        replayed->put(r.key, r.value);
      } else {
        replayed->del(r.key);
      }
      ++replayed_;
    }
    gen_ = std::max(gen_, w.gen);
  }
  if (!logs.empty()) {
    replayed->freeze();
    immutable_ = replayed;
    immutable_gen_ = gen_;
    commit_immutable();
  }
  ++gen_;
  wal_ = std::make_unique<dblog::WalWriter>(*wal_files_[gen_ % 2], gen_, config_.wal_sync_each_op,
                                            config_.wal_buffer_bytes);
  mutable_ = std::make_shared<MemTable>();
  if (config_.background_commit) committer_ = std::thread([this] { committer_loop(); });
}

FlexDB::~FlexDB() {
  if (closed_) return;
  try {
    close();
  } catch (...) {
    abandon();
  }
}

void FlexDB::close() {
  if (closed_) return;
  flush();
  stop_committer();
  space_->close();
  closed_ = true;
}

void FlexDB::abandon() {
  stop_committer();
  if (space_) space_->abandon();
  wal_.reset();
  manifest_file_.reset();
  wal_files_[0].reset();
  wal_files_[1].reset();
  closed_ = true;
}

void FlexDB::stop_committer() {
  {
    std::lock_guard lock(mem_mu_);
    stop_ = true;
  }
  mem_cv_.notify_all();
  if (committer_.joinable()) committer_.join();
}

// Rebuilds the sparse index by probing extent starts at every stride.
void FlexDB::rebuild_index() {
  index_.clear();
  {
    std::lock_guard lock(cache_mu_);
    cache_.clear();
  }
  const uint64_t size = space_->size();
  if (size == 0) return;
  std::vector<std::pair<uint64_t, std::string>> starts;
  uint64_t last_start = 0;
  constexpr uint64_t kProbe = 64;
  for (uint64_t off = config_.rebuild_stride; off < size; off += config_.rebuild_stride) {
    const ExtentRead x = space_->read_extent(off, kProbe);
    ++rebuild_calls_;
    if (x.nread == 0) {
      ++rebuild_holes_;  // a KV space has no holes
      continue;
    }
    if (x.start <= last_start) continue;
    std::vector<uint8_t> head = x.bytes;
    size_t pos = 0;
    auto klen = kv::get_varint(head, pos);
    auto vlen = klen ? kv::get_varint(head, pos) : std::nullopt;
    if (!vlen) throw Error(Errc::kCorruption, "extent does not start with a KV record");
    if (pos + *klen > head.size()) head = space_->pread(x.start, std::min<uint64_t>(pos + *klen, size - x.start));
    if (*klen == 0 || head.size() < pos + *klen || pos + *klen + *vlen > size - x.start) {
      throw Error(Errc::kCorruption, "extent does not start with a KV record");
    }
    starts.emplace_back(x.start, std::string(reinterpret_cast<const char*>(head.data() + pos), *klen));
    last_start = x.start;
  }
  IntervalEntry* first = index_.first();
  first->count_known = false;
  index_.resize(first, static_cast<int64_t>(starts.empty() ? size : starts.front().first));
  for (size_t i = 0; i < starts.size(); ++i) {
    const uint64_t end = i + 1 < starts.size() ? starts[i + 1].first : size;
    index_.push_back(std::move(starts[i].second), end - starts[i].first, 0, false);
  }
}

// ---- writes ----------------------------------------------------------------

void FlexDB::check_usable() const {
  if (closed_) throw Error(Errc::kClosed, "store is closed");
  std::lock_guard lock(mem_mu_);
  if (bg_error_) std::rethrow_exception(bg_error_);
}

void FlexDB::put(std::string_view key, std::string_view value) { write(WalOp::kPut, key, value); }

void FlexDB::del(std::string_view key) { write(WalOp::kDelete, key, {}); }

void FlexDB::write(WalOp op, std::string_view key, std::string_view value) {
  if (key.empty()) throw Error(Errc::kInvalidArgument, "empty key");
  if (kv::record_size(key.size(), value.size()) > space_->config().max_extent) {
    throw Error(Errc::kInvalidArgument, "KV record larger than the maximum extent");
  }
  std::lock_guard lock(write_mu_);
  check_usable();
  wal_->append(op, key, value);
  if (op == WalOp::kPut) {
    mutable_->put(key, value);
  } else {
    mutable_->del(key);
  }
  if (mutable_->bytes() >= config_.memtable_bytes) rotate();
}

void FlexDB::wait_for_commit(std::unique_lock<std::mutex>& mem_lock) {
  mem_cv_.wait(mem_lock, [&] { return !immutable_ || bg_error_; });
  if (bg_error_) std::rethrow_exception(bg_error_);
}

// Caller holds write_mu_.
void FlexDB::rotate() {
  {
    std::unique_lock ml(mem_mu_);
    wait_for_commit(ml);
  }
  wal_->sync();
  mutable_->freeze();
  {
    std::lock_guard ml(mem_mu_);
    immutable_ = mutable_;
    immutable_gen_ = gen_;
    mutable_ = std::make_shared<MemTable>();
  }
  // The other WAL file belongs to a generation that is already committed.
  ++gen_;
  wal_ = std::make_unique<dblog::WalWriter>(*wal_files_[gen_ % 2], gen_, config_.wal_sync_each_op,
                                            config_.wal_buffer_bytes);
  if (config_.background_commit) {
    mem_cv_.notify_all();
    return;
  }
  try {
    commit_immutable();
  } catch (...) {
    std::lock_guard ml(mem_mu_);
    bg_error_ = std::current_exception();
    throw;
  }
}

void FlexDB::flush() {
  std::lock_guard lock(write_mu_);
  check_usable();
  if (!mutable_->empty()) rotate();
  std::unique_lock ml(mem_mu_);
  wait_for_commit(ml);
}

void FlexDB::sync() {
  std::lock_guard lock(write_mu_);
  check_usable();
  wal_->sync();
}

void FlexDB::committer_loop() {
  std::unique_lock ml(mem_mu_);
  for (;;) {
    mem_cv_.wait(ml, [&] { return stop_ || immutable_; });
    if (!immutable_) return;
    ml.unlock();
    try {
      commit_immutable();
    } catch (...) {
      ml.lock();
      bg_error_ = std::current_exception();
      mem_cv_.notify_all();
      return;
    }
    ml.lock();
  }
}

// Moves the immutable MemTable into the space, then records its generation
// as committed so its WAL file can be reused.
void FlexDB::commit_immutable() {
  std::shared_ptr<MemTable> imm;
  uint64_t gen = 0;
  {
    std::lock_guard ml(mem_mu_);
    imm = immutable_;
    gen = immutable_gen_;
  }
  const auto entries = imm->entries();
  {
    std::unique_lock wl(db_mu_);
    uint64_t n = 0;
    for (const auto& entry : entries) {
      apply(entry);
      if (++n % config_.commit_yield_pairs == 0) {
        wl.unlock();  // lets waiting readers in
        wl.lock();
      }
    }
    space_->barrier();
  }
  manifest_.seq++;
  manifest_.committed_gen = gen;
  dblog::write_manifest(*manifest_file_, manifest_);
  commits_.fetch_add(1);
  pairs_committed_.fetch_add(entries.size());
  if (config_.check_after_commit) check_invariants();
  {
    std::lock_guard ml(mem_mu_);
    immutable_.reset();
  }
  mem_cv_.notify_all();
}

// ---- interval maintenance (db_mu_ held exclusively) ------------------------

std::shared_ptr<CachedInterval> FlexDB::load(IntervalEntry* e) const {
  {
    std::lock_guard lock(cache_mu_);
    if (auto hit = cache_.get(e)) return hit;
  }
  const uint64_t off = index_.offset(e);
  std::vector<uint8_t> bytes(e->size);
  if (e->size) space_->pread_into(off, bytes);
  auto ci = CachedInterval::decode(bytes);
  const size_t runs = e->size ? space_->query_range(off, e->size).size() : 0;
  std::lock_guard lock(cache_mu_);
  if (auto resident = cache_.peek(e)) return resident;  // loaded by another reader meanwhile
  e->count = ci->items.size();
  e->count_known = true;
  e->fragmented = runs > ci->items.size() / 2;
  cache_.put(e, ci);
  return ci;
}

bool FlexDB::oversized(const IntervalEntry* e) const {
  return e->count >= 2 && (e->size > config_.interval_max_bytes || e->count > config_.interval_max_items);
}

// Cuts an oversized interval into pieces within both thresholds.
void FlexDB::split_interval(IntervalEntry* e, const CachedInterval& ci) {
  const size_t n = ci.items.size();
  const uint64_t total = ci.bytes();
  size_t k = std::max<size_t>((n + config_.interval_max_items - 1) / config_.interval_max_items,
                              (total + config_.interval_max_bytes - 1) / config_.interval_max_bytes);
  k = std::clamp<size_t>(k, 2, n);
  const size_t target = (n + k - 1) / k;
  std::vector<size_t> cuts{0};  // item index where each piece begins
  size_t count = 0;
  uint64_t bytes = 0;
  for (size_t i = 0; i < n; ++i) {
    const uint64_t sz = ci.items[i].encoded_size();
    if (count > 0 && (count == target || bytes + sz > config_.interval_max_bytes)) {
      cuts.push_back(i);
      count = 0;
      bytes = 0;
    }
    ++count;
    bytes += sz;
  }
  cuts.push_back(n);
  const bool fragmented = e->fragmented;
  std::vector<std::pair<IntervalEntry*, std::shared_ptr<CachedInterval>>> pieces;
  IntervalEntry* cur = e;
  for (size_t p = 0; p + 1 < cuts.size(); ++p) {
    auto part = std::make_shared<CachedInterval>();
    part->items.assign(ci.items.begin() + static_cast<ptrdiff_t>(cuts[p]),
                       ci.items.begin() + static_cast<ptrdiff_t>(cuts[p + 1]));
    if (p + 2 < cuts.size()) {
      IntervalEntry* right = index_.split(cur, part->bytes(), ci.items[cuts[p + 1]].key, n - cuts[p + 1]);
      right->fragmented = fragmented;
      pieces.emplace_back(cur, std::move(part));
      cur = right;
    } else {
      pieces.emplace_back(cur, std::move(part));
    }
  }
  splits_ += pieces.size() - 1;
  std::lock_guard lock(cache_mu_);
  for (auto& [entry, data] : pieces) cache_.put(entry, std::move(data));
}

// Folds the interval after a into a when the pair is under both thresholds.
bool FlexDB::try_merge(IntervalEntry* a) {
  IntervalEntry* b = index_.next(a);
  if (!b || !a->count_known || !b->count_known) return false;
  if (a->size + b->size >= config_.interval_max_bytes || a->count + b->count >= config_.interval_max_items) {
    return false;
  }
  {
    std::lock_guard lock(cache_mu_);
    auto ca = cache_.peek(a);
    auto cb = cache_.peek(b);
    if (ca && cb) {
      ca->items.insert(ca->items.end(), cb->items.begin(), cb->items.end());
    } else {
      cache_.erase(a);
    }
    cache_.erase(b);
  }
  a->fragmented = a->fragmented || b->fragmented;
  index_.merge_next(a);
  ++merges_;
  return true;
}

void FlexDB::merge_around(IntervalEntry* e) {
  if (try_merge(e)) return;
  if (IntervalEntry* p = index_.prev(e)) try_merge(p);
}

void FlexDB::apply(const MemTable::Entry& entry) {
  const std::string& key = entry.key;
  IntervalEntry* e = index_.find(key);
  auto ci = load(e);
  if (oversized(e)) {
    // Intervals from a recovery rebuild are split on first use.
    split_interval(e, *ci);
    e = index_.find(key);
    ci = load(e);
  }
  const uint64_t off = index_.offset(e);
  const size_t p = ci->lower_bound(key);
  const bool exists = p < ci->items.size() && ci->items[p].key == key;
  const uint64_t at = off + ci->byte_offset(p);

  if (entry.value) {
    const auto rec = kv::encode_record(key, *entry.value);
    if (exists) {
      const uint64_t old = ci->items[p].encoded_size();
      if (old == rec.size()) {
        space_->pwrite(at, rec);
      } else {
        space_->collapse_range(at, old);
        space_->insert_range(at, rec);
        index_.resize(e, static_cast<int64_t>(rec.size()) - static_cast<int64_t>(old));
      }
      ci->items[p].value = *entry.value;
    } else {
      space_->insert_range(at, rec);
      ci->items.insert(ci->items.begin() + static_cast<ptrdiff_t>(p), {kv::fingerprint(key), key, *entry.value});
      index_.resize(e, static_cast<int64_t>(rec.size()));
      ++e->count;
    }
    if (e->fragmented) {
      space_->defrag(off, e->size);
      e->fragmented = false;
      ++defrags_;
    }
    if (oversized(e)) split_interval(e, *ci);
    return;
  }

  if (!exists) return;  // deleting an absent key
  const uint64_t old = ci->items[p].encoded_size();
  space_->collapse_range(at, old);
  ci->items.erase(ci->items.begin() + static_cast<ptrdiff_t>(p));
  index_.resize(e, -static_cast<int64_t>(old));
  --e->count;
  const bool is_first = e == index_.first();
  if (ci->items.empty() && !is_first) {
    {
      std::lock_guard lock(cache_mu_);
      cache_.erase(e);
    }
    index_.remove(e);
    return;
  }
  if (p == 0 && !is_first) index_.set_key(e, ci->items.front().key);
  if (e->fragmented && e->size) {
    space_->defrag(off, e->size);
    e->fragmented = false;
    ++defrags_;
  }
  merge_around(e);
}

// ---- reads ----------------------------------------------------------------

std::optional<std::string> FlexDB::get(std::string_view key) const {
  if (closed_) throw Error(Errc::kClosed, "store is closed");
  std::shared_ptr<MemTable> mems[2];
  {
    std::lock_guard ml(mem_mu_);
    mems[0] = mutable_;
    mems[1] = immutable_;
  }
  std::string value;
  for (const auto& m : mems) {
    if (!m) continue;
    switch (m->get(key, &value)) {
      case MemTable::Lookup::kValue: return value;
      case MemTable::Lookup::kTombstone: return std::nullopt;
      case MemTable::Lookup::kAbsent: break;
    }
  }
  std::shared_lock rl(db_mu_);
  auto ci = load(index_.find(key));
  const auto i = ci->find(key);
  if (!i) return std::nullopt;
  return ci->items[*i].value;
}

DbIterator FlexDB::seek(std::string_view key) const {
  if (closed_) throw Error(Errc::kClosed, "store is closed");
  std::vector<std::shared_ptr<MemTable>> mems;
  {
    std::lock_guard ml(mem_mu_);
    mems.push_back(mutable_);
    if (immutable_) mems.push_back(immutable_);
  }
  return DbIterator(this, std::move(mems), key);
}

DbIterator::DbIterator(const FlexDB* db, std::vector<std::shared_ptr<MemTable>> mems, std::string_view start)
    : db_(db), mems_(std::move(mems)) {
  advance(std::string(start), true);
}

void DbIterator::next() {
  if (valid_) advance(key_, false);
}

// Loads the space records after `after` from the first interval that has any.
void DbIterator::refill_space(std::string_view after, bool inclusive) {
  space_buf_.clear();
  space_pos_ = 0;
  std::shared_lock rl(db_->db_mu_);
  for (IntervalEntry* e = db_->index_.find(after); e; e = db_->index_.next(e)) {
    const auto ci = db_->load(e);
    for (size_t i = ci->lower_bound(after); i < ci->items.size(); ++i) {
      const auto& it = ci->items[i];
      if (!inclusive && it.key == after) continue;
      space_buf_.emplace_back(it.key, it.value);
    }
    if (!space_buf_.empty()) return;
  }
  space_done_ = true;
}

void DbIterator::advance(std::string after, bool inclusive) {
  for (;;) {
    auto before_pos = [&](const std::string& k) { return inclusive ? k < after : k <= after; };
    while (space_pos_ < space_buf_.size() && before_pos(space_buf_[space_pos_].first)) ++space_pos_;
    if (space_pos_ == space_buf_.size() && !space_done_) refill_space(after, inclusive);

    const std::string* best = nullptr;
    std::optional<MemTable::Entry> mem_best;
    for (const auto& m : mems_) {
      auto cand = m->next(after, inclusive);
      if (cand && (!mem_best || cand->key < mem_best->key)) mem_best = std::move(cand);
    }
    if (mem_best) best = &mem_best->key;
    const bool space_has = space_pos_ < space_buf_.size();
    if (space_has && (!best || space_buf_[space_pos_].first < *best)) best = &space_buf_[space_pos_].first;
    if (!best) {
      valid_ = false;
      return;
    }
    std::string k = *best;
    // The newest MemTable holding k decides; otherwise the space does.
    std::optional<std::optional<std::string>> decided;
    for (const auto& m : mems_) {
      std::string v;
      const auto r = m->get(k, &v);
      if (r == MemTable::Lookup::kValue) {
        decided = std::optional<std::string>(std::move(v));
        break;
      }
      if (r == MemTable::Lookup::kTombstone) {
        decided = std::optional<std::string>();
        break;
      }
    }
    if (!decided) decided = std::optional<std::string>(space_buf_[space_pos_].second);
    if (*decided) {
      key_ = std::move(k);
      value_ = std::move(**decided);
      valid_ = true;
      return;
    }
    after = std::move(k);
    inclusive = false;
  }
}

// ---- introspection ----------------------------------------------------------

DbStats FlexDB::stats() const {
  DbStats s;
  {
    std::shared_lock rl(db_mu_);
    s.intervals = index_.size();
    s.index_height = index_.height();
    std::lock_guard lock(cache_mu_);
    s.cache_resident = cache_.size();
    s.cache_hits = cache_.hits();
    s.cache_misses = cache_.misses();
    s.cache_evictions = cache_.evictions();
    s.interval_splits = splits_;
    s.interval_merges = merges_;
    s.defrags = defrags_;
  }
  s.commits = commits_.load();
  s.pairs_committed = pairs_committed_.load();
  s.rebuild_read_extent_calls = rebuild_calls_;
  s.rebuild_hole_warnings = rebuild_holes_;
  s.wal_records_replayed = replayed_;
  s.wal_bytes_written = env_.counters(kWalFiles[0]).bytes_written + env_.counters(kWalFiles[1]).bytes_written;
  s.manifest_bytes_written = env_.counters(kManifestFile).bytes_written;
  s.space = space_->stats();
  s.total_bytes_written =
      s.wal_bytes_written + s.manifest_bytes_written + s.space.data_bytes_written + s.space.log_bytes_written +
      s.space.tree_bytes_written;
  return s;
}

std::vector<IntervalInfo> FlexDB::intervals() const {
  std::shared_lock rl(db_mu_);
  std::lock_guard lock(cache_mu_);
  return index_.intervals();
}

IntervalInfo FlexDB::interval_for(std::string_view key) const {
  std::shared_lock rl(db_mu_);
  std::lock_guard lock(cache_mu_);
  const IntervalEntry* e = index_.find(key);
  return {e->key, index_.offset(e), e->size, e->count, e->count_known, e->fragmented};
}

void FlexDB::check_invariants() const {
  std::unique_lock wl(db_mu_);
  auto fail = [](const std::string& what) { throw std::logic_error("flexdb: " + what); };
  index_.check_invariants();
  const uint64_t size = space_->size();
  if (index_.total_bytes() != size) fail("intervals do not cover the space");
  const auto bytes = space_->pread(0, size);
  std::set<uint64_t> bounds;
  std::string prev;
  for (size_t pos = 0; pos < bytes.size();) {
    const auto r = kv::decode_record(bytes, pos);
    if (!r) fail("undecodable record at " + std::to_string(pos));
    if (!prev.empty() && r->key <= prev) fail("keys out of order at " + std::to_string(pos));
    prev = std::string(r->key);
    bounds.insert(pos);
    pos += r->size;
  }
  bounds.insert(size);
  std::lock_guard lock(cache_mu_);
  for (const IntervalEntry* e = index_.first(); e; e = index_.next(e)) {
    const uint64_t off = index_.offset(e);
    if (!bounds.count(off) || !bounds.count(off + e->size)) fail("interval boundary inside a record");
    const auto part = std::span<const uint8_t>(bytes).subspan(off, e->size);
    const auto decoded = CachedInterval::decode(part);
    if (e->count_known && decoded->items.size() != e->count) fail("interval record count is stale");
    if (e != index_.first() && (decoded->items.empty() || decoded->items.front().key != e->key)) {
      fail("index key differs from the interval's smallest key");
    }
    if (const auto cached = cache_.peek(e)) {
      const auto enc = cached->encode();
      if (!std::equal(enc.begin(), enc.end(), part.begin(), part.end())) fail("cached interval differs from space");
    }
  }
}

}  // namespace flex
