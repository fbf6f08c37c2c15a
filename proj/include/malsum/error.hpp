#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace malsum {

// Numeric values are mirrored by malsum_status in malsum.h.
enum class ErrorCode : int {
  InvalidArgument = 2,
  Config = 3,
  Io = 4,
  MalformedReport = 5,
  BudgetTooSmall = 6,
  EndpointUnreachable = 7,
  AuthFailed = 8,
  ContextOverflow = 9,
  RetriesExhausted = 10,
  BadResponse = 11,
  RequestRejected = 12,
  EmptyCompletion = 13,
  EmptyInput = 14,
  DuplicateSample = 15,
  MalformedLine = 16,
  NoRecords = 17,
  Internal = 18,
};

std::string_view error_code_name(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace malsum
