// Copyright 2026 The WAP Authors.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wap {

enum class ErrorCode {
  kParse,
  kVersionMismatch,
  kInvalidGraph,
  kShapeMismatch,
  kCycle,
  kNonDifferentiable,
  kUnreachableVariable,
  kUnshapedGraph,
  kUnsupportedKind,
  kNondivisibleBatch,
  kAlreadyParallelized,
  kMalformedPair,
  kMissingAggregation,
  kMissingInput,
  kOutputMismatch,
  kUnassignedDevice,
  kPrecondition,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library. The message names the offending
/// node or field.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wap
