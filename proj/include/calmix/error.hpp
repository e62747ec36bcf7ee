#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace calmix {

enum class ErrorCode {
  kInvalidArgument,
  kOffsetMismatch,
  kUnresolvedArgument,
  kShapeMismatch,
  kDimensionMismatch,
  kNonFiniteLoss,
  kMissingGold,
  kEmptyInput,
  kParse,
  kIo,
};

std::string_view to_string(ErrorCode code);

// Every library failure is reported through this type; `code()` lets callers
// branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 protected:
  struct Verbatim {};
  Error(ErrorCode code, const std::string& what, Verbatim) : std::runtime_error(what), code_(code) {}

 private:
  ErrorCode code_;
};

}  // namespace calmix
