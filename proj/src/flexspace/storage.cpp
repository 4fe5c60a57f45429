// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#include "flex/storage.hpp"

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <random>

#include "flex/status.hpp"

namespace flex {

IoCounters StorageEnv::counters(const std::string& name) const {
  std::lock_guard lock(counters_mu_);
  auto it = counters_.find(name);
  return it == counters_.end() ? IoCounters{} : it->second;
}

IoCounters StorageEnv::total_counters() const { return prefix_counters(""); }

IoCounters StorageEnv::prefix_counters(const std::string& prefix) const {
  std::lock_guard lock(counters_mu_);
  IoCounters total;
  for (const auto& [name, c] : counters_) {
    if (!name.starts_with(prefix)) continue;
    total.bytes_written += c.bytes_written;
    total.writes += c.writes;
    total.syncs += c.syncs;
    total.truncates += c.truncates;
    total.bytes_read += c.bytes_read;
  }
  return total;
}

void StorageEnv::reset_counters() {
  std::lock_guard lock(counters_mu_);
  counters_.clear();
}

PrefixEnv::PrefixEnv(StorageEnv& base, std::string prefix) : base_(base), prefix_(std::move(prefix)) {}

std::unique_ptr<StorageFile> PrefixEnv::open(const std::string& name) { return base_.open(prefix_ + name); }
bool PrefixEnv::exists(const std::string& name) { return base_.exists(prefix_ + name); }
void PrefixEnv::remove(const std::string& name) { base_.remove(prefix_ + name); }
IoCounters PrefixEnv::counters(const std::string& name) const { return base_.counters(prefix_ + name); }
IoCounters PrefixEnv::total_counters() const { return base_.prefix_counters(prefix_); }
void PrefixEnv::reset_counters() { base_.reset_counters(); }

void StorageEnv::count(const std::string& name, const IoCounters& delta) {
  std::lock_guard lock(counters_mu_);
  auto& c = counters_[name];
  c.bytes_written += delta.bytes_written;
  c.writes += delta.writes;
  c.syncs += delta.syncs;
  c.truncates += delta.truncates;
  c.bytes_read += delta.bytes_read;
}

namespace {

[[noreturn]] void throw_errno(const std::string& what) {
  throw Error(Errc::kIoError, what + ": " + std::strerror(errno));
}

}  // namespace

class PosixFile final : public StorageFile {
 public:
  PosixFile(PosixEnv* env, std::string name, int fd) : env_(env), name_(std::move(name)), fd_(fd) {}
  ~PosixFile() override { ::close(fd_); }

  void read(uint64_t offset, std::span<uint8_t> out) override {
    size_t done = 0;
    while (done < out.size()) {
      const ssize_t n = ::pread(fd_, out.data() + done, out.size() - done, static_cast<off_t>(offset + done));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw_errno("pread " + name_);
      }
      if (n == 0) break;
      done += static_cast<size_t>(n);
    }
    std::fill(out.begin() + static_cast<ptrdiff_t>(done), out.end(), 0);
    env_->count(name_, IoCounters{.bytes_read = out.size()});
  }

  void write(uint64_t offset, std::span<const uint8_t> data) override {
    size_t done = 0;
    while (done < data.size()) {
      const ssize_t n = ::pwrite(fd_, data.data() + done, data.size() - done, static_cast<off_t>(offset + done));
      if (n < 0) {
        if (errno == EINTR) continue;
        throw_errno("pwrite " + name_);
      }
      done += static_cast<size_t>(n);
    }
    env_->count(name_, IoCounters{.bytes_written = data.size(), .writes = 1});
  }

  void sync() override {
    if (::fdatasync(fd_) != 0) throw_errno("fdatasync " + name_);
    env_->count(name_, IoCounters{.syncs = 1});
  }

  void truncate(uint64_t size) override {
    if (::ftruncate(fd_, static_cast<off_t>(size)) != 0) throw_errno("ftruncate " + name_);
    env_->count(name_, IoCounters{.truncates = 1});
  }

  uint64_t size() override {
    struct stat st {};
    if (::fstat(fd_, &st) != 0) throw_errno("fstat " + name_);
    return static_cast<uint64_t>(st.st_size);
  }

 private:
  PosixEnv* env_;
  std::string name_;
  int fd_;
};

PosixEnv::PosixEnv(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw Error(Errc::kIoError, "cannot create " + dir_.string() + ": " + ec.message());
}

std::unique_ptr<StorageFile> PosixEnv::open(const std::string& name) {
  const auto path = dir_ / name;
  const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd < 0) throw_errno("open " + path.string());
  return std::make_unique<PosixFile>(this, name, fd);
}

bool PosixEnv::exists(const std::string& name) { return std::filesystem::exists(dir_ / name); }

void PosixEnv::remove(const std::string& name) { std::filesystem::remove(dir_ / name); }

class MemFile final : public StorageFile {
 public:
  MemFile(MemEnv* env, std::string name, std::shared_ptr<MemEnv::Image> image, uint64_t generation)
      : env_(env), name_(std::move(name)), image_(std::move(image)), generation_(generation) {}

  void read(uint64_t offset, std::span<uint8_t> out) override {
    {
      std::lock_guard lock(env_->mu_);
      env_->check_handle(generation_);
      const auto& bytes = image_->bytes;
      const uint64_t avail = offset < bytes.size() ? std::min<uint64_t>(out.size(), bytes.size() - offset) : 0;
      std::copy_n(bytes.begin() + static_cast<ptrdiff_t>(offset), avail, out.begin());
      std::fill(out.begin() + static_cast<ptrdiff_t>(avail), out.end(), 0);
    }
    env_->count(name_, IoCounters{.bytes_read = out.size()});
  }

  void write(uint64_t offset, std::span<const uint8_t> data) override {
    {
      std::lock_guard lock(env_->mu_);
      env_->check_handle(generation_);
      env_->before_mutation();
      auto& bytes = image_->bytes;
      MemEnv::Pending p;
      p.offset = offset;
      p.old_size = bytes.size();
      p.new_size = std::max<uint64_t>(bytes.size(), offset + data.size());
      if (offset < bytes.size()) {
        const uint64_t n = std::min<uint64_t>(data.size(), bytes.size() - offset);
        p.old_bytes.assign(bytes.begin() + static_cast<ptrdiff_t>(offset),
                           bytes.begin() + static_cast<ptrdiff_t>(offset + n));
      }
      p.new_bytes.assign(data.begin(), data.end());
      if (bytes.size() < p.new_size) bytes.resize(p.new_size);
      std::copy(data.begin(), data.end(), bytes.begin() + static_cast<ptrdiff_t>(offset));
      image_->pending.push_back(std::move(p));
    }
    env_->count(name_, IoCounters{.bytes_written = data.size(), .writes = 1});
  }

  void sync() override {
    {
      std::lock_guard lock(env_->mu_);
      env_->check_handle(generation_);
      env_->before_mutation();
      image_->pending.clear();
    }
    env_->count(name_, IoCounters{.syncs = 1});
  }

  void truncate(uint64_t size) override {
    {
      std::lock_guard lock(env_->mu_);
      env_->check_handle(generation_);
      env_->before_mutation();
      auto& bytes = image_->bytes;
      MemEnv::Pending p;
      p.truncate = true;
      p.offset = size;
      p.old_size = bytes.size();
      p.new_size = size;
      if (size < bytes.size()) {
        p.old_bytes.assign(bytes.begin() + static_cast<ptrdiff_t>(size), bytes.end());
      }
      bytes.resize(size);
      image_->pending.push_back(std::move(p));
    }
    env_->count(name_, IoCounters{.truncates = 1});
  }

  uint64_t size() override {
    std::lock_guard lock(env_->mu_);
    env_->check_handle(generation_);
    return image_->bytes.size();
  }

 private:
  MemEnv* env_;
  std::string name_;
  std::shared_ptr<MemEnv::Image> image_;
  uint64_t generation_;
};

std::unique_ptr<StorageFile> MemEnv::open(const std::string& name) {
  std::lock_guard lock(mu_);
  if (crashed_) throw SimulatedCrash();
  auto& image = files_[name];
  if (!image) image = std::make_shared<Image>();
  return std::make_unique<MemFile>(this, name, image, generation_);
}

bool MemEnv::exists(const std::string& name) {
  std::lock_guard lock(mu_);
  return files_.contains(name);
}

void MemEnv::remove(const std::string& name) {
  std::lock_guard lock(mu_);
  files_.erase(name);
}

void MemEnv::arm_crash(uint64_t after_ops) {
  std::lock_guard lock(mu_);
  crash_at_ = ops_ + std::max<uint64_t>(after_ops, 1);
}

void MemEnv::disarm() {
  std::lock_guard lock(mu_);
  crash_at_ = 0;
}

bool MemEnv::crashed() const {
  std::lock_guard lock(mu_);
  return crashed_;
}

uint64_t MemEnv::mutating_ops() const {
  std::lock_guard lock(mu_);
  return ops_;
}

void MemEnv::before_mutation() {
  if (crashed_) throw SimulatedCrash();
  ++ops_;
  if (crash_at_ != 0 && ops_ >= crash_at_) {
    crashed_ = true;
    throw SimulatedCrash();
  }
}

void MemEnv::check_handle(uint64_t generation) const {
  if (crashed_ || generation != generation_) throw SimulatedCrash();
}

void MemEnv::restart(CrashMode mode, uint64_t seed) {
  std::lock_guard lock(mu_);
  std::mt19937_64 rng(seed);
  for (auto& [name, image] : files_) {
    auto& bytes = image->bytes;
    // Roll back to the last durable image.
    for (auto it = image->pending.rbegin(); it != image->pending.rend(); ++it) {
      bytes.resize(it->old_size);
      std::copy(it->old_bytes.begin(), it->old_bytes.end(), bytes.begin() + static_cast<ptrdiff_t>(it->offset));
    }
    if (mode == CrashMode::kRandomSubset) {
      for (const auto& p : image->pending) {
        if (rng() % 2 == 0) continue;
        if (p.truncate) {
          bytes.resize(p.new_size);
        } else {
          if (bytes.size() < p.offset + p.new_bytes.size()) bytes.resize(p.offset + p.new_bytes.size());
          std::copy(p.new_bytes.begin(), p.new_bytes.end(), bytes.begin() + static_cast<ptrdiff_t>(p.offset));
        }
      }
    }
    image->pending.clear();
  }
  crashed_ = false;
  crash_at_ = 0;
  ++generation_;
}

std::unique_ptr<MemEnv> MemEnv::clone() const {
  std::lock_guard lock(mu_);
  auto copy = std::make_unique<MemEnv>();
  for (const auto& [name, image] : files_) {
    auto img = std::make_shared<Image>();
    img->bytes = image->bytes;
    copy->files_[name] = img;
  }
  return copy;
}

}  // namespace flex
