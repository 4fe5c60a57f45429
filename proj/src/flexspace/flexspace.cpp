// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/flexspace.hpp"

#include <algorithm>
#include <cstring>
#include <mutex>
#include <unordered_map>

namespace flex {

using format::LogEntry;
using format::LogOp;

void SpaceConfig::validate() const {
  auto bad = [](const char* msg) { throw Error(Errc::kInvalidArgument, msg); };
  if (segment_size == 0 || max_extent == 0) bad("segment and extent sizes must be positive");
  if (segment_size % max_extent != 0) bad("segment size must be a multiple of max extent");
  if (segment_size >= kUnmapped) bad("segment size too large");
  const uint64_t k = segment_size / max_extent;
  if (k < 2) bad("max extent must be at most half a segment");
  if (utilization_den == 0 || utilization_num == 0) bad("utilization cap must be positive");
  // num/den <= (k-1)/k keeps GC able to free one extent from the emptiest segment.
  if (uint64_t{utilization_num} * k > uint64_t{utilization_den} * (k - 1)) bad("utilization cap above (K-1)/K");
  if (max_segments <= reserved_free_segments) bad("max segments must exceed the reserve");
  if (max_segments * segment_size >= kUnmapped) bad("data file capacity exceeds 48-bit addresses");
  if (gc_batch == 0) bad("gc batch must be positive");
  if (tree_capacity < 4 || tree_capacity > 4096) bad("tree capacity out of range");
  if (log_buffer_entries == 0) bad("log buffer must hold at least one entry");
}

uint64_t SpaceConfig::capacity_bytes() const {
  const unsigned __int128 raw = static_cast<unsigned __int128>(max_segments - reserved_free_segments) *
                                segment_size * utilization_num / utilization_den;
  return static_cast<uint64_t>(raw);
}

format::PersistedConfig SpaceConfig::to_persisted() const {
  return format::PersistedConfig{segment_size,           max_extent,   utilization_num,
                                 utilization_den,        reserved_free_segments, max_segments,
                                 log_size_threshold,     log_buffer_entries,     tree_capacity,
                                 gc_batch};
}

SpaceConfig SpaceConfig::from_persisted(const format::PersistedConfig& p) {
  SpaceConfig c;
  c.segment_size = p.segment_size;
  c.max_extent = p.max_extent;
  c.utilization_num = p.utilization_num;
  c.utilization_den = p.utilization_den;
  c.reserved_free_segments = p.reserved_free_segments;
  c.max_segments = p.max_segments;
  c.log_size_threshold = p.log_size_threshold;
  c.log_buffer_entries = p.log_buffer_entries;
  c.tree_capacity = p.tree_capacity;
  c.gc_batch = p.gc_batch;
  return c;
}

namespace {

// Writes dirty nodes into free slots of the tree file. Slots of the previous
// version are only marked free after the new header is durable.
class TreeFileSink final : public NodeSink {
 public:
  TreeFileSink(StorageFile& file, std::vector<bool>& used, size_t capacity)
      : file_(file), used_(used), capacity_(capacity), buf_(format::node_slot_size(capacity)) {}

  uint64_t write_leaf(std::span<const ExtentEntry> entries) override {
    format::encode_leaf(entries, buf_);
    return emit();
  }
  uint64_t write_internal(std::span<const int64_t> pivots, std::span<const int64_t> shifts,
                          std::span<const uint64_t> child_slots) override {
    format::encode_internal(pivots, shifts, child_slots, buf_);
    return emit();
  }
  void release(uint64_t slot) override { released.push_back(slot); }

  std::vector<uint64_t> released;

 private:
  uint64_t emit() {
    while (next_ < used_.size() && used_[next_]) ++next_;
    if (next_ == used_.size()) used_.push_back(false);
    const uint64_t slot = next_;
    used_[slot] = true;
    file_.write(format::slot_offset(slot, capacity_), buf_);
    return slot;
  }

  StorageFile& file_;
  std::vector<bool>& used_;
  size_t capacity_;
  std::vector<uint8_t> buf_;
  uint64_t next_ = 0;
};

TreeOptions tree_options(const SpaceConfig& c) { return TreeOptions{.capacity = c.tree_capacity}; }

}  // namespace

FlexSpace::FlexSpace(StorageEnv& env, std::unique_ptr<StorageEnv> owned)
    : env_(env), owned_env_(std::move(owned)) {}

std::unique_ptr<FlexSpace> FlexSpace::open(StorageEnv& env, const SpaceConfig& config) {
  std::unique_ptr<FlexSpace> space(new FlexSpace(env, nullptr));
  space->recover(config);
  return space;
}

std::unique_ptr<FlexSpace> FlexSpace::open(const std::filesystem::path& dir, const SpaceConfig& config) {
  auto env = std::make_unique<PosixEnv>(dir);
  StorageEnv& ref = *env;
  std::unique_ptr<FlexSpace> space(new FlexSpace(ref, std::move(env)));
  space->recover(config);
  return space;
}

FlexSpace::~FlexSpace() {
  if (closed_) return;
  try {
    close();
  } catch (...) {
    // Durable state is whatever the last barrier left behind.
  }
}

void FlexSpace::close() {
  std::unique_lock lock(mu_);
  if (closed_) return;
  closed_ = true;
  barrier_locked();
  if (tree_.has_dirty_nodes() || log_end_ > format::kLogHeaderSize) checkpoint_locked();
  data_.reset();
  tree_file_.reset();
  log_file_.reset();
}

void FlexSpace::abandon() {
  std::unique_lock lock(mu_);
  closed_ = true;
  data_.reset();
  tree_file_.reset();
  log_file_.reset();
}

void FlexSpace::check_open() const {
  if (closed_) throw Error(Errc::kClosed, "space is closed");
}

// ---- open / recovery ---------------------------------------------------

void FlexSpace::recover(const SpaceConfig& requested) {
  data_ = env_.open(kDataFile);
  tree_file_ = env_.open(kTreeFile);
  log_file_ = env_.open(kLogFile);

  if (tree_file_->size() == 0) {
    create(requested);
    return;
  }
  std::vector<uint8_t> slot(format::kHeaderSlotSize);
  std::optional<format::TreeHeader> best;
  for (unsigned i = 0; i < 2; ++i) {
    tree_file_->read(i * format::kHeaderSlotSize, slot);
    auto h = format::decode_tree_header(slot);
    if (h && (!best || h->version > best->version)) {
      best = h;
      active_header_ = i;
    }
  }
  if (!best) throw Error(Errc::kCorruption, "no valid tree file header");
  config_ = SpaceConfig::from_persisted(best->config);
  config_.validate();
  load_tree(*best);
  version_ = best->version;

  std::vector<uint8_t> lh(format::kLogHeaderSize);
  log_file_->read(0, lh);
  const auto base = log_file_->size() >= format::kLogHeaderSize ? format::decode_log_header(lh) : std::nullopt;
  if (!base || *base < version_) {
    // No log, or one already folded into the tree by a completed checkpoint.
    reinit_log(version_);
  } else if (*base > version_) {
    throw Error(Errc::kCorruption, "log is newer than the tree file");
  } else {
    base_version_ = *base;
    replay_log();
  }
  rebuild_segments();
}

void FlexSpace::create(const SpaceConfig& requested) {
  requested.validate();
  config_ = requested;
  tree_ = FlexTree(tree_options(config_));
  version_ = 1;
  active_header_ = 0;
  format::TreeHeader header{.version = 1, .root_slot = kNoSlot, .root_shift = 0, .config = config_.to_persisted()};
  tree_file_->write(0, format::encode_tree_header(header));
  tree_file_->sync();
  reinit_log(1);
  data_->truncate(0);
  data_->sync();
  // The in-memory empty root has no slot yet; the header records an empty tree.
  rebuild_segments();
}

void FlexSpace::load_tree(const format::TreeHeader& header) {
  slot_used_.clear();
  if (header.root_slot == kNoSlot) {
    tree_ = FlexTree(tree_options(config_));
    return;
  }
  const size_t cap = config_.tree_capacity;
  std::vector<uint8_t> buf(format::node_slot_size(cap));
  const uint64_t file_size = tree_file_->size();
  std::function<NodeLayout(uint64_t, int)> load = [&](uint64_t slot, int depth) {
    if (depth > 64) throw Error(Errc::kCorruption, "tree file cycle or excessive depth");
    if (format::slot_offset(slot, cap) + buf.size() > file_size) {
      throw Error(Errc::kCorruption, "tree node slot beyond end of file");
    }
    tree_file_->read(format::slot_offset(slot, cap), buf);
    format::DecodedNode node = format::decode_node(buf, cap);
    if (slot >= slot_used_.size()) slot_used_.resize(slot + 1, false);
    if (slot_used_[slot]) throw Error(Errc::kCorruption, "tree node referenced twice");
    slot_used_[slot] = true;
    NodeLayout out;
    out.slot = slot;
    if (node.leaf) {
      out.extents = std::move(node.extents);
    } else {
      out.pivots = std::move(node.pivots);
      out.shifts = std::move(node.shifts);
      for (uint64_t child : node.child_slots) out.children.push_back(load(child, depth + 1));
      if (out.children.empty()) throw Error(Errc::kCorruption, "internal tree node without children");
    }
    return out;
  };
  NodeLayout root = load(header.root_slot, 0);
  try {
    tree_ = FlexTree::from_layout(root, tree_options(config_), header.root_shift);
  } catch (const std::logic_error& e) {
    throw Error(Errc::kCorruption, std::string("persisted tree is malformed: ") + e.what());
  }
}

void FlexSpace::reinit_log(uint64_t base_version) {
  const auto header = format::encode_log_header(base_version);
  log_file_->write(0, header);
  log_file_->truncate(format::kLogHeaderSize);
  log_file_->sync();
  base_version_ = base_version;
  log_end_ = format::kLogHeaderSize;
  log_seq_ = 0;
}

void FlexSpace::replay_log() {
  const uint64_t file_size = log_file_->size();
  uint64_t pos = format::kLogHeaderSize;
  uint64_t seq = 0;
  std::vector<uint8_t> head(format::kBatchHeaderSize);
  std::vector<uint8_t> body;
  std::vector<LogEntry> entries;
  while (pos + format::kBatchHeaderSize <= file_size) {
    log_file_->read(pos, head);
    const auto h = format::decode_batch_header(head.data());
    if (h.count == 0 || h.seq != seq || h.base_version != base_version_) break;
    const uint64_t bytes = uint64_t{h.count} * format::kLogEntrySize;
    if (pos + format::kBatchHeaderSize + bytes > file_size) break;
    body.resize(bytes);
    log_file_->read(pos + format::kBatchHeaderSize, body);
    if (!format::batch_crc_ok(h, body)) break;
    entries.clear();
    for (uint32_t i = 0; i < h.count; ++i) entries.push_back(format::decode_entry(body.data() + i * format::kLogEntrySize));
    // Consecutive relocations of one GC pass are applied with a single scan.
    size_t i = 0;
    while (i < entries.size()) {
      if (entries[i].op == LogOp::kRelocate) {
        size_t j = i;
        while (j < entries.size() && entries[j].op == LogOp::kRelocate) ++j;
        apply_relocations(std::span(entries).subspan(i, j - i));
        i = j;
      } else {
        apply_entry(entries[i++]);
      }
    }
    pos += format::kBatchHeaderSize + bytes;
    ++seq;
  }
  if (pos < file_size) {
    log_file_->truncate(pos);
    log_file_->sync();
  }
  log_end_ = pos;
  log_seq_ = seq;
}

void FlexSpace::apply_entry(const LogEntry& e) {
  const uint64_t limit = (e.flags & format::kLogFlagCoalesce) ? config_.max_extent : 0;
  try {
    switch (e.op) {
      case LogOp::kInsert:
        tree_.insert_range(e.offset, e.length, e.phys, limit);
        break;
      case LogOp::kWrite:
        tree_.write_range(e.offset, e.length, e.phys, limit);
        break;
      case LogOp::kRemove:
        tree_.collapse_range(e.offset, e.length);
        break;
      case LogOp::kRelocate:
        apply_relocations(std::span(&e, 1));
        break;
    }
  } catch (const Error& err) {
    throw Error(Errc::kCorruption, std::string("log entry does not apply: ") + err.what());
  }
}

void FlexSpace::apply_relocations(std::span<const LogEntry> group) {
  std::unordered_map<uint64_t, const LogEntry*> by_old;
  for (const auto& e : group) by_old.emplace(e.offset, &e);
  std::vector<std::pair<ExtentInfo, uint64_t>> hits;
  tree_.for_each_extent([&](const ExtentInfo& x) {
    if (!x.mapped()) return;
    auto it = by_old.find(x.phys);
    if (it != by_old.end() && it->second->length == x.length) hits.emplace_back(x, it->second->phys);
  });
  if (hits.size() != group.size()) throw Error(Errc::kCorruption, "relocation entry matches no extent");
  for (const auto& [x, new_phys] : hits) tree_.remap(x.start, x.length, new_phys);
}

void FlexSpace::rebuild_segments() {
  valid_.assign(config_.max_segments, 0);
  state_.assign(config_.max_segments, SegmentState::kFree);
  pending_free_.clear();
  valid_total_ = 0;
  tree_.for_each_extent([&](const ExtentInfo& x) {
    if (!x.mapped()) return;
    const uint64_t seg = x.phys / config_.segment_size;
    if (seg >= config_.max_segments || (x.phys + x.length - 1) / config_.segment_size != seg) {
      throw Error(Errc::kCorruption, "extent outside the data file segments");
    }
    valid_[seg] += x.length;
    valid_total_ += x.length;
  });
  free_count_ = 0;
  for (uint64_t s = 0; s < config_.max_segments; ++s) {
    if (valid_[s] > 0) {
      state_[s] = SegmentState::kSealed;
    } else {
      ++free_count_;
    }
  }
  open_seg_ = kNoSegment;
  open_used_ = open_flushed_ = 0;
  open_buf_.assign(config_.segment_size, 0);
}

// ---- segments ----------------------------------------------------------

void FlexSpace::open_segment() {
  for (uint64_t s = 0; s < config_.max_segments; ++s) {
    if (state_[s] == SegmentState::kFree) {
      state_[s] = SegmentState::kOpen;
      --free_count_;
      open_seg_ = s;
      open_used_ = open_flushed_ = 0;
      return;
    }
  }
  throw Error(Errc::kSpaceExhausted, "no free segment");
}

void FlexSpace::flush_open_segment() {
  if (open_seg_ == kNoSegment || open_flushed_ == open_used_) return;
  data_->write(open_seg_ * config_.segment_size + open_flushed_,
               std::span(open_buf_).subspan(open_flushed_, open_used_ - open_flushed_));
  open_flushed_ = open_used_;
  data_dirty_ = true;
}

void FlexSpace::seal_open_segment() {
  if (open_seg_ == kNoSegment) return;
  flush_open_segment();
  if (valid_[open_seg_] == 0) {
    state_[open_seg_] = SegmentState::kPendingFree;
    pending_free_.push_back(open_seg_);
  } else {
    state_[open_seg_] = SegmentState::kSealed;
  }
  open_seg_ = kNoSegment;
}

// Returns the physical address of `granted` bytes in the open segment. With
// `whole`, never grants less than `want`.
uint64_t FlexSpace::allocate(uint64_t want, bool whole, uint64_t& granted) {
  if (open_seg_ != kNoSegment) {
    const uint64_t room = config_.segment_size - open_used_;
    if (room == 0 || (whole && room < want)) seal_open_segment();
  }
  if (open_seg_ == kNoSegment) open_segment();
  granted = std::min(want, config_.segment_size - open_used_);
  const uint64_t phys = open_seg_ * config_.segment_size + open_used_;
  open_used_ += granted;
  return phys;
}

void FlexSpace::seal_if_full() {
  if (open_seg_ != kNoSegment && open_used_ == config_.segment_size) seal_open_segment();
}

void FlexSpace::read_phys(uint64_t phys, std::span<uint8_t> out) const {
  const uint64_t seg = phys / config_.segment_size;
  if (seg == open_seg_) {
    const uint64_t off = phys % config_.segment_size;
    std::memcpy(out.data(), open_buf_.data() + off, out.size());
  } else {
    data_->read(phys, out);
  }
}

void FlexSpace::add_valid(uint64_t phys, uint64_t length) {
  valid_[phys / config_.segment_size] += length;
  valid_total_ += length;
}

void FlexSpace::drop_runs(const std::vector<MappingRun>& runs) {
  for (const auto& r : runs) {
    if (!r.mapped()) continue;
    const uint64_t seg = r.phys / config_.segment_size;
    valid_[seg] -= r.length;
    valid_total_ -= r.length;
    if (valid_[seg] == 0 && state_[seg] == SegmentState::kSealed) {
      state_[seg] = SegmentState::kPendingFree;
      pending_free_.push_back(seg);
    }
  }
}

void FlexSpace::ensure_space(uint64_t net_growth, uint64_t raw_bytes) {
  if (valid_total_ + net_growth > config_.capacity_bytes()) {
    throw Error(Errc::kSpaceExhausted, "utilization cap reached");
  }
  const uint64_t needed = (raw_bytes + config_.segment_size - 1) / config_.segment_size + 1;
  if (free_count_ < config_.reserved_free_segments + needed) gc_locked(false);
  if (free_count_ < needed) throw Error(Errc::kSpaceExhausted, "not enough free segments");
}

// ---- logging and barriers ------------------------------------------------

void FlexSpace::log(const LogEntry& e) { log_buf_.push_back(e); }

void FlexSpace::finish_mutation() {
  if (log_buf_.size() >= config_.log_buffer_entries) barrier_locked();
}

void FlexSpace::commit_log() {
  flush_open_segment();
  if (data_dirty_) {
    data_->sync();
    data_dirty_ = false;
  }
  if (!log_buf_.empty()) {
    const auto batch = format::encode_batch(log_buf_, log_seq_, base_version_);
    log_file_->write(log_end_, batch);
    log_file_->sync();
    log_end_ += batch.size();
    ++log_seq_;
    ++log_commits_;
    log_buf_.clear();
  }
  // Segments emptied by now-durable operations may be reused.
  for (uint64_t s : pending_free_) {
    state_[s] = SegmentState::kFree;
    ++free_count_;
  }
  pending_free_.clear();
}

void FlexSpace::barrier_locked() {
  commit_log();
  if (commit_listener_) commit_listener_();
  if (log_end_ >= config_.log_size_threshold) checkpoint_locked();
}

uint64_t FlexSpace::checkpoint_locked() {
  commit_log();
  TreeFileSink sink(*tree_file_, slot_used_, config_.tree_capacity);
  const uint64_t root = tree_.persist(sink);
  tree_file_->sync();
  format::TreeHeader header{.version = version_ + 1,
                            .root_slot = root,
                            .root_shift = tree_.root_shift(),
                            .config = config_.to_persisted()};
  const unsigned target = active_header_ ^ 1u;
  tree_file_->write(target * format::kHeaderSlotSize, format::encode_tree_header(header));
  tree_file_->sync();
  version_ = header.version;
  active_header_ = target;
  for (uint64_t slot : sink.released) slot_used_[slot] = false;
  reinit_log(version_);
  ++checkpoints_;
  return version_;
}

// ---- garbage collection -------------------------------------------------

bool FlexSpace::gc_pass(GcReport& report) {
  const uint64_t seg_size = config_.segment_size;
  std::vector<uint64_t> candidates;
  for (uint64_t s = 0; s < config_.max_segments; ++s) {
    if (state_[s] == SegmentState::kSealed && valid_[s] < seg_size) candidates.push_back(s);
  }
  std::sort(candidates.begin(), candidates.end(), [&](uint64_t a, uint64_t b) {
    return valid_[a] != valid_[b] ? valid_[a] < valid_[b] : a < b;
  });
  if (candidates.size() > config_.gc_batch) candidates.resize(config_.gc_batch);
  // Relocated extents never straddle segments, so each destination segment
  // may waste up to one max extent at its tail.
  auto room_needed = [&](size_t n) {
    uint64_t bytes = 0;
    for (size_t i = 0; i < n; ++i) bytes += valid_[candidates[i]];
    const uint64_t per_seg = seg_size - config_.max_extent;
    return (bytes + per_seg - 1) / per_seg + 1;
  };
  while (!candidates.empty() && room_needed(candidates.size()) > free_count_) candidates.pop_back();
  if (candidates.empty()) return false;

  std::vector<bool> victim(config_.max_segments, false);
  for (uint64_t s : candidates) victim[s] = true;
  std::vector<ExtentInfo> moving;
  tree_.for_each_extent([&](const ExtentInfo& x) {
    if (x.mapped() && victim[x.phys / seg_size]) moving.push_back(x);
  });

  for (uint64_t s : candidates) report.victims.push_back(GcVictim{s, valid_[s]});
  std::vector<uint8_t> buf;
  uint64_t relocated = 0;
  for (const auto& x : moving) {
    buf.resize(x.length);
    read_phys(x.phys, buf);
    uint64_t granted = 0;
    const uint64_t dst = allocate(x.length, true, granted);
    std::memcpy(open_buf_.data() + dst % seg_size, buf.data(), x.length);
    tree_.remap(x.start, x.length, dst);
    log(LogEntry{.op = LogOp::kRelocate, .offset = x.phys, .phys = dst, .length = x.length});
    valid_[x.phys / seg_size] -= x.length;
    valid_[dst / seg_size] += x.length;
    relocated += x.length;
    seal_if_full();
  }
  for (uint64_t s : candidates) {
    if (valid_[s] != 0) throw std::logic_error("gc victim still holds valid bytes");
    state_[s] = SegmentState::kPendingFree;
    pending_free_.push_back(s);
    report.reclaimed_bytes += seg_size - valid_[s];
  }
  report.relocated_bytes += relocated;
  report.reclaimed_bytes -= relocated;
  ++report.passes;
  ++gc_passes_;
  gc_relocated_ += relocated;
  // Victims become reusable only once their relocations are durable.
  barrier_locked();
  return true;
}

GcReport FlexSpace::gc_locked(bool force) {
  GcReport report;
  if (!pending_free_.empty()) barrier_locked();
  const uint64_t target = config_.reserved_free_segments + config_.gc_batch;
  bool first = force;
  while (first || free_count_ < target) {
    first = false;
    const uint64_t before = free_count_;
    if (!gc_pass(report) || free_count_ <= before) break;
  }
  return report;
}

// ---- public operations --------------------------------------------------

uint64_t FlexSpace::size() const {
  std::shared_lock lock(mu_);
  return tree_.size();
}

uint64_t FlexSpace::version() const {
  std::shared_lock lock(mu_);
  return version_;
}

void FlexSpace::put_data(uint64_t offset, std::span<const uint8_t> data, bool insert) {
  // A write of at most max_extent bytes lands as one piece, so extent starts
  // only ever fall on caller write boundaries.
  const bool whole = data.size() <= config_.max_extent;
  uint64_t done = 0;
  while (done < data.size()) {
    uint64_t granted = 0;
    const uint64_t want = std::min<uint64_t>(data.size() - done, config_.max_extent);
    const uint64_t phys = allocate(want, whole, granted);
    std::memcpy(open_buf_.data() + phys % config_.segment_size, data.data() + done, granted);
    // Extents never span segments: coalescing is only allowed mid-segment.
    const bool coalesce = phys % config_.segment_size != 0;
    const uint64_t limit = coalesce ? config_.max_extent : 0;
    if (insert) {
      tree_.insert_range(offset + done, granted, phys, limit);
    } else {
      drop_runs(tree_.write_range(offset + done, granted, phys, limit));
    }
    add_valid(phys, granted);
    seal_if_full();
    log(LogEntry{.op = insert ? LogOp::kInsert : LogOp::kWrite,
                 .flags = static_cast<uint16_t>(coalesce ? format::kLogFlagCoalesce : 0),
                 .offset = offset + done,
                 .phys = phys,
                 .length = granted});
    done += granted;
  }
}

void FlexSpace::pwrite(uint64_t offset, std::span<const uint8_t> data) {
  std::unique_lock lock(mu_);
  check_open();
  if (data.empty()) throw Error(Errc::kInvalidArgument, "pwrite of zero bytes");
  if (offset > kUnmapped) throw Error(Errc::kOutOfRange, "pwrite offset too large");
  uint64_t replaced = 0;
  if (offset < tree_.size()) {
    for (const auto& r : tree_.query_range(offset, std::min<uint64_t>(data.size(), tree_.size() - offset))) {
      if (r.mapped()) replaced += r.length;
    }
  }
  ensure_space(data.size() > replaced ? data.size() - replaced : 0, data.size());
  put_data(offset, data, false);
  logical_bytes_ += data.size();
  finish_mutation();
}

void FlexSpace::insert_range(uint64_t offset, std::span<const uint8_t> data) {
  std::unique_lock lock(mu_);
  check_open();
  if (offset > tree_.size()) throw Error(Errc::kOutOfRange, "insert offset beyond end of space");
  if (data.empty()) throw Error(Errc::kInvalidArgument, "insert of zero bytes");
  ensure_space(data.size(), data.size());
  put_data(offset, data, true);
  logical_bytes_ += data.size();
  finish_mutation();
}

void FlexSpace::collapse_range(uint64_t offset, uint64_t length) {
  std::unique_lock lock(mu_);
  check_open();
  if (offset > tree_.size() || length > tree_.size() - offset) {
    throw Error(Errc::kOutOfRange, "collapse range beyond end of space");
  }
  if (length == 0) return;
  drop_runs(tree_.collapse_range(offset, length));
  log(LogEntry{.op = LogOp::kRemove, .offset = offset, .phys = kUnmapped, .length = length});
  finish_mutation();
}

std::vector<uint8_t> FlexSpace::pread(uint64_t offset, uint64_t length) const {
  std::vector<uint8_t> out(length);
  pread_into(offset, out);
  return out;
}

void FlexSpace::pread_into(uint64_t offset, std::span<uint8_t> out) const {
  std::shared_lock lock(mu_);
  check_open();
  if (offset > tree_.size() || out.size() > tree_.size() - offset) {
    throw Error(Errc::kOutOfRange, "read beyond end of space");
  }
  if (out.empty()) return;
  size_t pos = 0;
  for (const auto& r : tree_.query_range(offset, out.size())) {
    auto dst = out.subspan(pos, r.length);
    if (r.mapped()) {
      read_phys(r.phys, dst);
    } else {
      std::fill(dst.begin(), dst.end(), 0);
    }
    pos += r.length;
  }
}

ExtentRead FlexSpace::read_extent(uint64_t offset, uint64_t maxlen) const {
  std::shared_lock lock(mu_);
  check_open();
  if (offset >= tree_.size()) throw Error(Errc::kOutOfRange, "read_extent beyond end of space");
  const ExtentInfo x = tree_.find_extent(offset);
  ExtentRead out;
  out.start = x.start;
  out.length = x.length;
  if (!x.mapped()) return out;
  out.nread = std::min<uint64_t>(x.length, maxlen);
  out.bytes.resize(out.nread);
  read_phys(x.phys, out.bytes);
  return out;
}

std::vector<MappingRun> FlexSpace::query_range(uint64_t offset, uint64_t length) const {
  std::shared_lock lock(mu_);
  check_open();
  return tree_.query_range(offset, length);
}

void FlexSpace::defrag(uint64_t offset, uint64_t length) {
  std::unique_lock lock(mu_);
  check_open();
  if (offset > tree_.size() || length > tree_.size() - offset) {
    throw Error(Errc::kOutOfRange, "defrag range beyond end of space");
  }
  if (length == 0) return;
  const auto runs = tree_.query_range(offset, length);
  uint64_t mapped = 0;
  for (const auto& r : runs) mapped += r.mapped() ? r.length : 0;
  // Each run is placed whole, so a segment tail may be left unused.
  ensure_space(0, mapped + mapped / (config_.segment_size / config_.max_extent));
  // Mapped runs are rewritten back to back so they coalesce; holes stay holes.
  uint64_t pos = offset;
  std::vector<uint8_t> buf;
  for (const auto& r : runs) {
    if (r.mapped()) {
      buf.resize(r.length);
      read_phys(r.phys, buf);
      put_data(pos, buf, false);
    }
    pos += r.length;
  }
  finish_mutation();
}

GcReport FlexSpace::gc() {
  std::unique_lock lock(mu_);
  check_open();
  return gc_locked(true);
}

void FlexSpace::barrier() {
  std::unique_lock lock(mu_);
  check_open();
  barrier_locked();
}

uint64_t FlexSpace::checkpoint() {
  std::unique_lock lock(mu_);
  check_open();
  commit_log();
  if (commit_listener_) commit_listener_();
  return checkpoint_locked();
}

void FlexSpace::set_commit_listener(std::function<void()> fn) {
  std::unique_lock lock(mu_);
  commit_listener_ = std::move(fn);
}

SpaceStats FlexSpace::stats() const {
  std::shared_lock lock(mu_);
  SpaceStats s;
  s.version = version_;
  s.size = tree_.size();
  s.extent_count = tree_.extent_count();
  s.tree_height = tree_.height();
  s.segments_total = config_.max_segments;
  s.segments_free = free_count_;
  for (auto st : state_) {
    if (st == SegmentState::kSealed) ++s.segments_sealed;
    if (st == SegmentState::kPendingFree) ++s.segments_pending_free;
  }
  s.valid_bytes = valid_total_;
  s.utilization = static_cast<double>(valid_total_) / static_cast<double>(config_.capacity_bytes());
  s.logical_bytes_admitted = logical_bytes_;
  s.data_bytes_written = env_.counters(kDataFile).bytes_written;
  s.log_bytes_written = env_.counters(kLogFile).bytes_written;
  s.tree_bytes_written = env_.counters(kTreeFile).bytes_written;
  s.gc_passes = gc_passes_;
  s.gc_relocated_bytes = gc_relocated_;
  s.checkpoints = checkpoints_;
  s.log_commits = log_commits_;
  s.log_size = log_end_;
  return s;
}

std::vector<uint64_t> FlexSpace::segment_valid_bytes() const {
  std::shared_lock lock(mu_);
  return valid_;
}

SegmentState FlexSpace::segment_state(uint64_t segment) const {
  std::shared_lock lock(mu_);
  return state_.at(segment);
}

NodeLayout FlexSpace::tree_layout() const {
  std::shared_lock lock(mu_);
  return tree_.layout();
}

void FlexSpace::check_accounting() const {
  std::shared_lock lock(mu_);
  std::vector<uint64_t> expect(config_.max_segments, 0);
  uint64_t total = 0;
  tree_.for_each_extent([&](const ExtentInfo& x) {
    if (!x.mapped()) return;
    expect[x.phys / config_.segment_size] += x.length;
    total += x.length;
  });
  if (total != valid_total_) throw std::logic_error("valid byte total disagrees with the index");
  for (uint64_t s = 0; s < config_.max_segments; ++s) {
    if (expect[s] != valid_[s]) {
      throw std::logic_error("segment " + std::to_string(s) + " valid bytes " + std::to_string(valid_[s]) +
                             " but index maps " + std::to_string(expect[s]));
    }
    if (valid_[s] > config_.segment_size) throw std::logic_error("segment over-full");
    if (valid_[s] > 0 && (state_[s] == SegmentState::kFree || state_[s] == SegmentState::kPendingFree)) {
      throw std::logic_error("segment with valid data marked free");
    }
  }
}

}  // namespace flex
