// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bilcnet {

enum class ErrorCode {
  MalformedLine,
  RangeViolation,
  UnknownChannel,
  MissingHeader,
  SchemaMismatch,
  InvariantViolation,
  NegativeInput,
  EmptyInput,
  ShapeMismatch,
  BatchTooSmall,
  InvalidProbability,
  EvenKernel,
  BadMagic,
  VersionMismatch,
  ChecksumMismatch,
  LabelOutOfRange,
  EmptySplit,
  SessionTooShort,
  MissingGain,
  LengthMismatch,
  EmptyMatrix,
  WrongFoldCount,
  IoFailure,
  InvalidConfig,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace bilcnet
