// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "flex/bench/bench.hpp"
#include "flex/status.hpp"

namespace flex::bench {

namespace {

using Clock = std::chrono::steady_clock;

uint64_t elapsed_ns(Clock::time_point a, Clock::time_point b) {
  return static_cast<uint64_t>(std::chrono::duration_cast<std::chrono::nanoseconds>(b - a).count());
}

// State shared by the client threads of one bench run.
struct Shared {
  Shared(const WorkloadSpec& s, const KeySpace& k, FlexDB& d) : spec(s), keys(k), db(d) {}

  const WorkloadSpec& spec;
  const KeySpace& keys;
  FlexDB& db;
  std::atomic<bool> stop{false};
  std::mutex failure_mu;
  std::string failure;

  void fail(std::string what) {
    std::lock_guard lock(failure_mu);
    if (failure.empty()) failure = std::move(what);
    stop = true;
  }
};

// Per-thread model of the keys the thread owns (key -> version) and the
// counters of its ops. Only the owner writes a key, so its reads of own keys
// are exact even with several clients.
struct Client {
  unsigned id = 0;
  std::map<std::string, uint64_t, std::less<>> model;
  std::vector<uint64_t> own_ids;  // in insertion order, for the latest distribution
  std::vector<uint64_t> latency_ns;
  uint64_t logical_bytes = 0;
  uint64_t reads = 0;
  uint64_t updates = 0;
  uint64_t inserts = 0;
  uint64_t scans = 0;
  uint64_t scanned_pairs = 0;
  uint64_t rmws = 0;
  uint64_t insert_cursor = 0;
  std::vector<uint64_t> prefix_cursor;  // composite inserts
};

unsigned owner_of(uint64_t id, unsigned threads) {
  return threads == 1 ? 0 : static_cast<unsigned>(mix64(id) % threads);
}

uint64_t id_of_key(const KeySpace& ks, std::string_view key) {
  if (!ks.composite()) return std::stoull(std::string(key));
  const uint64_t prefix = std::stoull(std::string(key.substr(0, 3)));
  const uint64_t suffix = std::stoull(std::string(key.substr(3)));
  return suffix * 1000 + prefix;
}

class KeyChooser {
 public:
  KeyChooser(const WorkloadSpec& spec, const KeySpace& ks) : spec_(spec), ks_(ks) {
    switch (spec.distribution) {
      case Distribution::kZipfian: zipf_ = std::make_unique<ZipfGenerator>(ks.loaded()); break;
      case Distribution::kZipfianComposite: zipf_ = std::make_unique<ZipfGenerator>(1000); break;
      case Distribution::kLatest:
        zipf_ = std::make_unique<ZipfGenerator>(ks.loaded() + spec.op_count + 1);
        break;
      default: break;
    }
    scatter_ = 2654435761ull;
    while (std::gcd(scatter_, ks.loaded()) != 1) scatter_ += 2;
  }

  // An existing key id owned by c.
  uint64_t existing(Client& c, std::mt19937_64& rng, uint64_t& seq_cursor) const {
    const unsigned t = spec_.threads;
    switch (spec_.distribution) {
      case Distribution::kSequential: return c.own_ids[seq_cursor++ % c.own_ids.size()];
      case Distribution::kLatest: {
        const uint64_t n = c.own_ids.size();
        for (;;) {
          const uint64_t back = (*zipf_)(rng);
          if (back < n) return c.own_ids[n - 1 - back];
        }
      }
      default: break;
    }
    for (int attempt = 0; attempt < 256; ++attempt) {
      uint64_t id;
      if (spec_.distribution == Distribution::kUniform) {
        id = ks_.load_id(rng() % ks_.loaded());
      } else if (spec_.distribution == Distribution::kZipfian) {
        id = ks_.load_id(static_cast<uint64_t>((static_cast<unsigned __int128>((*zipf_)(rng)) * scatter_ + 7) % ks_.loaded()));
      } else {
        id = (rng() % ks_.suffixes_per_prefix()) * 1000 + (*zipf_)(rng);
      }
      if (owner_of(id, t) == c.id) return id;
    }
    return c.own_ids[rng() % c.own_ids.size()];
  }

  // A fresh key id owned by c.
  uint64_t fresh(Client& c, std::mt19937_64& rng) const {
    const unsigned t = spec_.threads;
    if (!ks_.composite()) {
      for (;;) {
        const uint64_t id = ks_.loaded() + c.insert_cursor++;
        if (owner_of(id, t) == c.id) return id;
      }
    }
    if (c.prefix_cursor.empty()) c.prefix_cursor.assign(1000, ks_.suffixes_per_prefix());
    const uint64_t prefix = zipf_ ? (*zipf_)(rng) % 1000 : rng() % 1000;
    for (;;) {
      const uint64_t id = c.prefix_cursor[prefix]++ * 1000 + prefix;
      if (owner_of(id, t) == c.id) return id;
    }
  }

 private:
  const WorkloadSpec& spec_;
  const KeySpace& ks_;
  std::unique_ptr<ZipfGenerator> zipf_;
  uint64_t scatter_;
};

// Checks one scan against the client's model. Foreign keys only need a
// well-formed value; own keys must match exactly and none may be skipped.
bool check_scan(Shared& sh, Client& c, const std::string& start,
                const std::vector<std::pair<std::string, std::string>>& got, std::string& why) {
  const unsigned t = sh.spec.threads;
  for (size_t i = 0; i < got.size(); ++i) {
    const auto& [k, v] = got[i];
    if (i > 0 && got[i - 1].first >= k) {
      why = "scan keys out of order at " + k;
      return false;
    }
    if (k < start) {
      why = "scan returned " + k + " before its start";
      return false;
    }
    const uint64_t id = id_of_key(sh.keys, k);
    if (owner_of(id, t) == c.id) {
      auto it = c.model.find(k);
      if (it == c.model.end() || v != make_value(k, it->second, sh.spec.value_size)) {
        why = "scan value mismatch at own key " + k;
        return false;
      }
    } else if (!parse_value(k, v)) {
      why = "scan returned a malformed value at " + k;
      return false;
    }
  }
  // Own keys inside the covered range must all be present.
  auto it = c.model.lower_bound(start);
  const bool reached_end = got.size() < sh.spec.scan_length;
  size_t gi = 0;
  for (; it != c.model.end(); ++it) {
    if (!reached_end && (got.empty() || it->first > got.back().first)) break;
    while (gi < got.size() && got[gi].first < it->first) ++gi;
    if (gi == got.size() || got[gi].first != it->first) {
      why = "scan from " + start + " skipped own key " + it->first;
      return false;
    }
  }
  return true;
}

void run_client(Shared& sh, Client& c, const KeyChooser& chooser, uint64_t ops, uint64_t seed) {
  const WorkloadSpec& s = sh.spec;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  uint64_t seq_cursor = rng() % std::max<size_t>(c.own_ids.size(), 1);
  c.latency_ns.reserve(ops);
  std::vector<std::pair<std::string, std::string>> got;
  auto check_read = [&](const std::string& key, const std::optional<std::string>& v) {
    auto it = c.model.find(key);
    if (!v || it == c.model.end() || *v != make_value(key, it->second, s.value_size)) {
      sh.fail("client " + std::to_string(c.id) + " read " + key + ": " + (v ? "wrong value" : "missing"));
      return false;
    }
    return true;
  };
  enum class Op { kRead, kUpdate, kInsert, kScan, kRmw };
  auto pick = [&] {
    if (c.own_ids.empty()) return Op::kInsert;
    double x = coin(rng);
    if ((x -= s.mix.insert) < 0) return Op::kInsert;
    if ((x -= s.mix.update) < 0) return Op::kUpdate;
    if ((x -= s.mix.read_modify_write) < 0) return Op::kRmw;
    if ((x -= s.mix.scan) < 0) return Op::kScan;
    return Op::kRead;
  };
  for (uint64_t i = 0; i < ops && !sh.stop.load(std::memory_order_relaxed); ++i) {
    const Op op = pick();
    const auto t0 = Clock::now();
    if (op == Op::kInsert) {
      const uint64_t id = chooser.fresh(c, rng);
      const std::string key = sh.keys.key(id);
      const std::string value = make_value(key, 0, s.value_size);
      sh.db.put(key, value);
      c.model[key] = 0;
      c.own_ids.push_back(id);
      c.logical_bytes += key.size() + value.size();
      ++c.inserts;
    } else if (op == Op::kRead) {
      const std::string key = sh.keys.key(chooser.existing(c, rng, seq_cursor));
      if (!check_read(key, sh.db.get(key))) return;
      ++c.reads;
    } else if (op == Op::kUpdate || op == Op::kRmw) {
      const std::string key = sh.keys.key(chooser.existing(c, rng, seq_cursor));
      if (op == Op::kRmw) {
        if (!check_read(key, sh.db.get(key))) return;
        ++c.rmws;
      } else {
        ++c.updates;
      }
      const uint64_t ver = ++c.model[key];
      const std::string value = make_value(key, ver, s.value_size);
      sh.db.put(key, value);
      c.logical_bytes += key.size() + value.size();
    } else {
      const std::string start = sh.keys.key(chooser.existing(c, rng, seq_cursor));
      got.clear();
      for (auto it = sh.db.seek(start); it.valid() && got.size() < s.scan_length; it.next()) {
        got.emplace_back(it.key(), it.value());
      }
      std::string why;
      if (!check_scan(sh, c, start, got, why)) {
        sh.fail("client " + std::to_string(c.id) + ": " + why);
        return;
      }
      ++c.scans;
      c.scanned_pairs += got.size();
    }
    c.latency_ns.push_back(elapsed_ns(t0, Clock::now()));
  }
}

PhaseReport make_phase(std::string name, std::vector<Client>& clients, double seconds, uint64_t bytes_written,
                       uint64_t bytes_read) {
  PhaseReport p;
  p.name = std::move(name);
  std::vector<uint64_t> lat;
  for (auto& c : clients) {
    lat.insert(lat.end(), c.latency_ns.begin(), c.latency_ns.end());
    p.logical_bytes += c.logical_bytes;
    c.latency_ns.clear();
    c.logical_bytes = 0;
  }
  p.ops = lat.size();
  p.seconds = seconds;
  p.ops_per_sec = seconds > 0 ? static_cast<double>(p.ops) / seconds : 0;
  p.latency = summarize_latency(lat);
  p.bytes_written = bytes_written;
  p.bytes_read = bytes_read;
  return p;
}

}  // namespace

BenchReport run_kv_bench(const KvBenchOptions& o) {
  const WorkloadSpec& s = o.spec;
  s.validate();
  const KeySpace keys(s);
  BenchReport r;
  r.bench = "kv-bench";
  r.param("workload", s.name);
  r.param("distribution", std::string(to_string(s.distribution)));
  r.param("mix", "read=" + std::to_string(s.mix.read) + " update=" + std::to_string(s.mix.update) +
                     " insert=" + std::to_string(s.mix.insert) + " scan=" + std::to_string(s.mix.scan) +
                     " rmw=" + std::to_string(s.mix.read_modify_write));
  r.param("key_count", std::to_string(keys.loaded()));
  r.param("key_size", std::to_string(s.key_size));
  r.param("value_size", std::to_string(s.value_size));
  r.param("op_count", std::to_string(s.op_count));
  r.param("scan_length", std::to_string(s.scan_length));
  r.param("threads", std::to_string(s.threads));
  r.param("seed", std::to_string(s.seed));
  r.param("storage", o.dir.empty() ? "memory" : o.dir.string());

  std::unique_ptr<StorageEnv> env;
  if (o.dir.empty()) {
    env = std::make_unique<MemEnv>();
  } else {
    std::filesystem::create_directories(o.dir);
    env = std::make_unique<PosixEnv>(o.dir);
  }
  auto db = FlexDB::open(*env, o.db);
  Shared sh(s, keys, *db);
  const unsigned T = s.threads;
  std::vector<Client> clients(T);
  for (unsigned t = 0; t < T; ++t) clients[t].id = t;

  auto written = [&] { return env->total_counters().bytes_written; };
  auto read = [&] { return env->total_counters().bytes_read; };

  // Load: thread t inserts load indices [t*L/T, (t+1)*L/T) in key order.
  {
    const uint64_t w0 = written();
    const uint64_t r0 = read();
    const auto t0 = Clock::now();
    std::vector<std::thread> threads;
    const uint64_t L = keys.loaded();
    for (unsigned t = 0; t < T; ++t) {
      threads.emplace_back([&, t] {
        Client& c = clients[t];
        c.latency_ns.reserve(L / T + 1);
        for (uint64_t i = L * t / T; i < L * (t + 1) / T; ++i) {
          const std::string key = keys.key(keys.load_id(i));
          const std::string value = make_value(key, 0, s.value_size);
          const auto a = Clock::now();
          db->put(key, value);
          c.latency_ns.push_back(elapsed_ns(a, Clock::now()));
          c.logical_bytes += key.size() + value.size();
        }
      });
    }
    for (auto& th : threads) th.join();
    db->flush();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    r.phases.push_back(make_phase("load", clients, secs, written() - w0, read() - r0));
    // Hand every loaded key to its run-phase owner.
    for (uint64_t i = 0; i < L; ++i) {
      const uint64_t id = keys.load_id(i);
      Client& c = clients[owner_of(id, T)];
      c.model.emplace(keys.key(id), 0);
      c.own_ids.push_back(id);
    }
  }

  // Run.
  {
    const KeyChooser chooser(s, keys);
    const uint64_t w0 = written();
    const uint64_t r0 = read();
    const auto t0 = Clock::now();
    std::vector<std::thread> threads;
    for (unsigned t = 0; t < T; ++t) {
      const uint64_t ops = s.op_count / T + (t < s.op_count % T ? 1 : 0);
      threads.emplace_back([&, t, ops] { run_client(sh, clients[t], chooser, ops, mix64(s.seed * 131 + t)); });
    }
    for (auto& th : threads) th.join();
    if (!sh.failure.empty()) throw BenchFailure("kv-bench: " + sh.failure);
    db->flush();
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    r.phases.push_back(make_phase("run", clients, secs, written() - w0, read() - r0));
  }

  // Final check: every model key reads back and a full scan sees exactly the model.
  uint64_t verified = 0;
  uint64_t model_size = 0;
  {
    std::map<std::string, uint64_t> all;
    for (const auto& c : clients) {
      model_size += c.model.size();
      all.insert(c.model.begin(), c.model.end());
    }
    auto mit = all.begin();
    for (auto it = db->seek(""); it.valid(); it.next(), ++mit) {
      if (mit == all.end() || it.key() != mit->first || it.value() != make_value(mit->first, mit->second, s.value_size)) {
        throw BenchFailure("kv-bench: final scan disagrees with the model at " + it.key());
      }
      ++verified;
    }
    if (mit != all.end()) throw BenchFailure("kv-bench: final scan missed " + mit->first);
  }

  uint64_t reads = 0, updates = 0, inserts = 0, scans = 0, pairs = 0, rmws = 0;
  for (const auto& c : clients) {
    reads += c.reads;
    updates += c.updates;
    inserts += c.inserts;
    scans += c.scans;
    pairs += c.scanned_pairs;
    rmws += c.rmws;
  }
  const DbStats st = db->stats();
  r.counter("reads", reads);
  r.counter("updates", updates);
  r.counter("inserts", inserts);
  r.counter("scans", scans);
  r.counter("scanned_pairs", pairs);
  r.counter("read_modify_writes", rmws);
  r.counter("mismatches", 0);
  r.counter("final_keys", model_size);
  r.counter("final_keys_verified", verified);
  r.counter("intervals", st.intervals);
  r.counter("index_height", st.index_height);
  r.counter("commits", st.commits);
  r.counter("pairs_committed", st.pairs_committed);
  r.counter("interval_splits", st.interval_splits);
  r.counter("interval_merges", st.interval_merges);
  r.counter("defrags", st.defrags);
  r.counter("cache_hits", st.cache_hits);
  r.counter("cache_misses", st.cache_misses);
  r.counter("cache_evictions", st.cache_evictions);
  r.counter("wal_bytes_written", st.wal_bytes_written);
  r.counter("space_data_bytes_written", st.space.data_bytes_written);
  r.counter("space_log_bytes_written", st.space.log_bytes_written);
  r.counter("space_tree_bytes_written", st.space.tree_bytes_written);
  r.counter("space_gc_relocated_bytes", st.space.gc_relocated_bytes);
  db->close();
  return r;
}

}  // namespace flex::bench
