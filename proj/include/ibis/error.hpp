#pragma once

#include <stdexcept>
#include <string>

namespace ibis {

enum class ErrorCode {
  EmptyInput,
  UnknownToken,
  EmptyCorpus,
  ScorerUnavailable,
  ProtocolError,
  DegenerateInput,
  MoveInvalid,
  InvalidConfig,
  TooLarge,
  InvalidInput,
  BagMismatch,
  InvalidConstraints,
  Io,
};

const char* to_string(ErrorCode code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ScorerUnavailable: return "ScorerUnavailable";
    case ErrorCode::ProtocolError: return "ProtocolError";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::MoveInvalid: return "MoveInvalid";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::BagMismatch: return "BagMismatch";
    case ErrorCode::InvalidConstraints: return "InvalidConstraints";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace ibis
