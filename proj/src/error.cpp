// SPDX-License-Identifier: Apache-2.0

#include "bilcnet/error.hpp"

namespace bilcnet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::RangeViolation: return "RangeViolation";
    case ErrorCode::UnknownChannel: return "UnknownChannel";
    case ErrorCode::MissingHeader: return "MissingHeader";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
    case ErrorCode::NegativeInput: return "NegativeInput";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::BatchTooSmall: return "BatchTooSmall";
    case ErrorCode::InvalidProbability: return "InvalidProbability";
    case ErrorCode::EvenKernel: return "EvenKernel";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::EmptySplit: return "EmptySplit";
    case ErrorCode::SessionTooShort: return "SessionTooShort";
    case ErrorCode::MissingGain: return "MissingGain";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyMatrix: return "EmptyMatrix";
    case ErrorCode::WrongFoldCount: return "WrongFoldCount";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

}  // namespace bilcnet
