#include "malsum/error.hpp"

namespace malsum {

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Config: return "ConfigError";
    case ErrorCode::Io: return "IoError";
    case ErrorCode::MalformedReport: return "MalformedReport";
    case ErrorCode::BudgetTooSmall: return "BudgetTooSmall";
    case ErrorCode::EndpointUnreachable: return "EndpointUnreachable";
    case ErrorCode::AuthFailed: return "AuthFailed";
    case ErrorCode::ContextOverflow: return "ContextOverflow";
    case ErrorCode::RetriesExhausted: return "RetriesExhausted";
    case ErrorCode::BadResponse: return "BadResponse";
    case ErrorCode::RequestRejected: return "RequestRejected";
    case ErrorCode::EmptyCompletion: return "EmptyCompletion";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateSample: return "DuplicateSample";
    case ErrorCode::MalformedLine: return "MalformedLine";
    case ErrorCode::NoRecords: return "NoRecords";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

}  // namespace malsum
