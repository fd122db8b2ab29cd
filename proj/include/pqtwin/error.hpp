#pragma once

#include <stdexcept>
#include <string>

namespace pqtwin {

enum class ErrorCode {
  InvalidSpec,        // parameter outside its domain
  Aliasing,           // content at or above Nyquist
  NonlinearElement,   // linear-only operation given a nonlinear element
  UnknownName,        // tap, conductor, preset or field not recognised
  Validation,         // cross-field consistency failure
  Parse,              // malformed structured text
  Ingest,             // malformed CSV input
  Configuration,      // singular or otherwise unsolvable network setup
  Convergence,        // switch/diode state iteration did not settle
  Io,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidSpec: return "invalid-spec";
    case ErrorCode::Aliasing: return "aliasing";
    case ErrorCode::NonlinearElement: return "nonlinear-element";
    case ErrorCode::UnknownName: return "unknown-name";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Ingest: return "ingest";
    case ErrorCode::Configuration: return "configuration";
    case ErrorCode::Convergence: return "convergence";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// CLI exit status: 2 for bad input, 3 for failures while running.
  int exit_code() const noexcept {
    switch (code_) {
      case ErrorCode::Convergence:
      case ErrorCode::Io:
        return 3;
      default:
        return 2;
    }
  }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace pqtwin
