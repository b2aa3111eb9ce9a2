#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace asynclc {

enum class ErrorCode {
  InvalidBandwidth,
  InvalidSampleSize,
  InvalidParameter,
  InvalidData,
  NoLocalData,
  SingularLocalFit,
  SingularFit,
  DegenerateScale,
  EstimationFailed,
  FoldDegenerate,
  SelectionFailed,
  CovarianceNotPD,
  ParseError,
  OrphanSubject,
  EmptyInput,
  IoError,
};

// Stable upper-case identifier, e.g. "SINGULAR_LOCAL_FIT".
const char* error_code_name(ErrorCode code);

// Coarse category used for CLI exit codes: 1 usage, 2 data, 3 numerical.
int error_exit_code(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& message)
      : Error(ErrorCode::ParseError,
              "line " + std::to_string(line) + ": " + message),
        line_(line) {}

  // 1-based line number in the offending file.
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace asynclc
