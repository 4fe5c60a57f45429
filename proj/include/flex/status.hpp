// Copyright 2026 The Flex Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace flex {

enum class Errc {
  kOutOfRange,
  kInvalidArgument,
  kSpaceExhausted,
  kCorruption,
  kIoError,
  kClosed,
  kOverflow,
};

const char* errc_name(Errc code);

// All recoverable failures in the library surface as this exception type.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline const char* errc_name(Errc code) {
  switch (code) {
    case Errc::kOutOfRange: return "out of range";
    case Errc::kInvalidArgument: return "invalid argument";
    case Errc::kSpaceExhausted: return "space exhausted";
    case Errc::kCorruption: return "corruption";
    case Errc::kIoError: return "io error";
    case Errc::kClosed: return "closed";
    case Errc::kOverflow: return "overflow";
  }
  return "unknown";
}

}  // namespace flex
