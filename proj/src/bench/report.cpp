// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/bench/report.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <numeric>

namespace flex::bench {

LatencySummary summarize_latency(std::vector<uint64_t>& ns) {
  LatencySummary s;
  if (ns.empty()) return s;
  const double sum = std::accumulate(ns.begin(), ns.end(), 0.0);
  s.avg_us = sum / static_cast<double>(ns.size()) / 1000.0;
  auto pct = [&](double p) {
    const size_t k = std::min(ns.size() - 1, static_cast<size_t>(std::ceil(p * static_cast<double>(ns.size()))) - 1);
    std::nth_element(ns.begin(), ns.begin() + static_cast<ptrdiff_t>(k), ns.end());
    return static_cast<double>(ns[k]) / 1000.0;
  };
  s.p95_us = pct(0.95);
  s.p99_us = pct(0.99);
  return s;
}

std::optional<double> PhaseReport::write_amplification() const {
  if (logical_bytes == 0) return std::nullopt;
  return static_cast<double>(bytes_written) / static_cast<double>(logical_bytes);
}

const PhaseReport& BenchReport::phase(std::string_view name) const {
  for (const auto& p : phases) {
    if (p.name == name) return p;
  }
  throw std::out_of_range("no phase " + std::string(name));
}

uint64_t BenchReport::counter(std::string_view key) const {
  for (const auto& [k, v] : counters) {
    if (k == key) return v;
  }
  throw std::out_of_range("no counter " + std::string(key));
}

std::string BenchReport::to_text() const {
  using nlohmann::ordered_json;
  ordered_json j;
  j["bench"] = bench;
  j["passed"] = passed();
  ordered_json p = ordered_json::object();
  for (const auto& [k, v] : params) p[k] = v;
  j["params"] = p;
  ordered_json ph = ordered_json::array();
  for (const auto& x : phases) {
    ordered_json o;
    o["name"] = x.name;
    o["ops"] = x.ops;
    o["seconds"] = x.seconds;
    o["ops_per_sec"] = x.ops_per_sec;
    if (x.latency) {
      o["latency_us"] = {{"avg", x.latency->avg_us}, {"p95", x.latency->p95_us}, {"p99", x.latency->p99_us}};
    }
    if (x.nodes_modified_per_op) o["nodes_modified_per_op"] = *x.nodes_modified_per_op;
    if (x.entries_shifted_per_op) o["entries_shifted_per_op"] = *x.entries_shifted_per_op;
    o["bytes_written"] = x.bytes_written;
    o["bytes_read"] = x.bytes_read;
    o["logical_bytes"] = x.logical_bytes;
    if (auto wa = x.write_amplification()) {
      o["write_amplification"] = *wa;
    } else {
      o["write_amplification"] = nullptr;
    }
    ph.push_back(std::move(o));
  }
  j["phases"] = ph;
  ordered_json c = ordered_json::object();
  for (const auto& [k, v] : counters) c[k] = v;
  j["counters"] = c;
  j["failures"] = failures;
  return j.dump(2) + "\n";
}

}  // namespace flex::bench
