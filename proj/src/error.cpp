// Copyright 2026 The perfvec Authors
// SPDX-License-Identifier: Apache-2.0

#include "perfvec/error.hpp"

namespace perfvec {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid-argument";
    case ErrorKind::kNotFound: return "not-found";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kData: return "data";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kShape: return "shape";
  }
  return "unknown";
}

}  // namespace perfvec
