#pragma once

#include <stdexcept>
#include <string>

namespace crosstraj {

enum class ErrorKind {
  Format,        // malformed input file or payload
  Precondition,  // caller violated an operation's precondition
  Validation,    // input rejected by a domain rule
  NotFound,
  Conflict,      // pipeline stage ordering violated
  Numeric,       // non-finite values, degenerate geometry
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace crosstraj
