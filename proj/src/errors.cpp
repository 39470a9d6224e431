#include "deputy/errors.hpp"

namespace deputy {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kZeroVector: return "ZeroVector";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyRow: return "EmptyRow";
    case ErrorCode::kKOutOfRange: return "KOutOfRange";
    case ErrorCode::kEmptyNegatives: return "EmptyNegatives";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kStaleCache: return "StaleCache";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kBatchTooSmall: return "BatchTooSmall";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kRowCountMismatch: return "RowCountMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kNoBatches: return "NoBatches";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

bool is_input_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kStaleCache:
    case ErrorCode::kIoError:
    case ErrorCode::kDegenerateInput:
      return false;
    default:
      return true;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

}  // namespace deputy
