#pragma once

#include <stdexcept>
#include <string>

namespace dicl {

// Maps one-to-one onto the C status codes and the CLI exit codes.
enum class ErrorKind {
  InvalidArgument,
  Config,
  Schema,
  Parse,
  Io,
  Backend,
  ContextOverflow,
  Numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised by the llm_http backend. `status` is the HTTP status, or 0 when the
// transport itself failed.
class BackendError : public Error {
 public:
  BackendError(const std::string& what, int status, bool retryable)
      : Error(status == 413 ? ErrorKind::ContextOverflow : ErrorKind::Backend, what),
        status_(status),
        retryable_(retryable) {}
  int status() const noexcept { return status_; }
  bool retryable() const noexcept { return retryable_; }

 private:
  int status_;
  bool retryable_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) throw Error(kind, what);
}

}  // namespace dicl
