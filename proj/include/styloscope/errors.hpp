#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace styloscope {

enum class ErrorCode {
  MalformedDocument,
  InvalidBlockSize,
  InvalidArgument,
  Transport,        // retryable
  Request,          // permanent backend rejection
  ProtocolViolation,
  DataQuality,
  Format,
  Corruption,
  DegenerateSplit,
  InvalidK,
  DegenerateData,
  IncompatibleEnsembles,
  InsufficientData,
  IntraUndefined,
  DegenerateGeometry,
  InvalidRange,
  InvalidMatrix,
  Dependency,
  Config,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  bool retryable() const noexcept { return code_ == ErrorCode::Transport; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace styloscope
