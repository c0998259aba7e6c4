// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace perfvec {

// Error classes double as CLI exit codes (see tools/perfvec.cpp).
enum class ErrorKind : int {
  kInvalidArgument = 2,  // bad flags, bad parameters
  kNotFound = 3,         // missing input file
  kFormat = 4,           // bad magic, version mismatch, truncated file
  kParameter = 5,        // workload / config parameter out of range
  kData = 6,             // dataset integrity, missing targets
  kDivergence = 7,       // NaN loss during training
  kPrecondition = 8,     // violated operation precondition
  kShape = 9,            // dimension mismatch
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace perfvec
