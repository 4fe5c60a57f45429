// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flex {

// Thrown by a fault-injecting environment once its armed crash point is hit.
// Deliberately not a flex::Error so engine code never swallows it.
class SimulatedCrash : public std::runtime_error {
 public:
  SimulatedCrash() : std::runtime_error("simulated crash") {}
};

struct IoCounters {
  uint64_t bytes_written = 0;
  uint64_t writes = 0;
  uint64_t syncs = 0;
  uint64_t truncates = 0;
  uint64_t bytes_read = 0;
};

class StorageFile {
 public:
  virtual ~StorageFile() = default;
  // Reads exactly out.size() bytes; bytes past the end of file read as zero.
  virtual void read(uint64_t offset, std::span<uint8_t> out) = 0;
  virtual void write(uint64_t offset, std::span<const uint8_t> data) = 0;
  // Flush barrier: every completed write becomes durable.
  virtual void sync() = 0;
  virtual void truncate(uint64_t size) = 0;
  virtual uint64_t size() = 0;
};

class StorageEnv {
 public:
  virtual ~StorageEnv() = default;
  virtual std::unique_ptr<StorageFile> open(const std::string& name) = 0;  // creates if missing
  virtual bool exists(const std::string& name) = 0;
  virtual void remove(const std::string& name) = 0;

  virtual IoCounters counters(const std::string& name) const;
  virtual IoCounters total_counters() const;
  virtual void reset_counters();
  // Sum over files whose names start with prefix.
  IoCounters prefix_counters(const std::string& prefix) const;

 protected:
  void count(const std::string& name, const IoCounters& delta);

 private:
  mutable std::mutex counters_mu_;
  std::map<std::string, IoCounters> counters_;
};

// Files in a directory accessed with pread/pwrite/fdatasync.
class PosixEnv final : public StorageEnv {
 public:
  explicit PosixEnv(std::filesystem::path dir);
  std::unique_ptr<StorageFile> open(const std::string& name) override;
  bool exists(const std::string& name) override;
  void remove(const std::string& name) override;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  friend class PosixFile;
  std::filesystem::path dir_;
};

// Exposes the files of base whose names start with prefix, so several
// stores can share one environment (and one crash schedule). Resetting
// counters resets the base.
class PrefixEnv final : public StorageEnv {
 public:
  PrefixEnv(StorageEnv& base, std::string prefix);
  std::unique_ptr<StorageFile> open(const std::string& name) override;
  bool exists(const std::string& name) override;
  void remove(const std::string& name) override;
  IoCounters counters(const std::string& name) const override;
  IoCounters total_counters() const override;
  void reset_counters() override;

 private:
  StorageEnv& base_;
  std::string prefix_;
};

enum class CrashMode {
  kDropAll,       // every write not covered by a completed sync is lost
  kRandomSubset,  // an arbitrary subset of unsynced writes survives
};

// In-memory files with crash injection. Each file keeps its current image
// plus the unsynced operations since its last sync. Arming a crash makes the
// N-th subsequent mutating call (write, sync, truncate) throw SimulatedCrash
// without taking effect; afterwards every call on every handle throws until
// restart() resolves unsynced state and bumps the handle generation.
class MemEnv final : public StorageEnv {
 public:
  MemEnv() = default;
  std::unique_ptr<StorageFile> open(const std::string& name) override;
  bool exists(const std::string& name) override;
  void remove(const std::string& name) override;

  void arm_crash(uint64_t after_ops);
  void disarm();
  bool crashed() const;
  uint64_t mutating_ops() const;
  void restart(CrashMode mode, uint64_t seed = 0);

  // Deep copy of the current images (durable or not), for side-by-side opens.
  std::unique_ptr<MemEnv> clone() const;

 private:
  friend class MemFile;
  struct Pending {
    bool truncate = false;
    uint64_t offset = 0;
    std::vector<uint8_t> old_bytes;  // image bytes replaced by the op
    std::vector<uint8_t> new_bytes;
    uint64_t old_size = 0;
    uint64_t new_size = 0;
  };
  struct Image {
    std::vector<uint8_t> bytes;
    std::vector<Pending> pending;
  };
  void before_mutation();  // caller holds mu_
  void check_handle(uint64_t generation) const;

  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Image>> files_;
  uint64_t generation_ = 0;
  uint64_t ops_ = 0;
  uint64_t crash_at_ = 0;  // 0 = disarmed
  bool crashed_ = false;
};

}  // namespace flex
