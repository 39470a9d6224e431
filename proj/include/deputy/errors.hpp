#ifndef DEPUTY_ERRORS_HPP_
#define DEPUTY_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace deputy {

enum class ErrorCode {
  kZeroVector,
  kDimensionMismatch,
  kEmptyRow,
  kKOutOfRange,
  kEmptyNegatives,
  kOutOfRange,
  kStaleCache,
  kInvalidSpec,
  kBatchTooSmall,
  kParseError,
  kRowCountMismatch,
  kNonFiniteValue,
  kSingleClass,
  kEmptyClass,
  kNoBatches,
  kDegenerateInput,
  kEmptySplit,
  kInvalidConfig,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

// True for errors caused by bad user input (CLI exit code 1); everything
// else is a runtime failure (exit code 2).
bool is_input_error(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace deputy

#endif  // DEPUTY_ERRORS_HPP_
