#pragma once

#include <stdexcept>
#include <string>

namespace volseg {

// Error classes map one-to-one onto the C API status codes.
enum class ErrorKind {
  InvalidArgument,
  Io,
  Format,
  Shape,
  Backend,
  Protocol,
  Timeout,
  NotFound,
  Config,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind k) noexcept {
  switch (k) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::Io: return "io";
    case ErrorKind::Format: return "format";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Backend: return "backend";
    case ErrorKind::Protocol: return "protocol";
    case ErrorKind::Timeout: return "timeout";
    case ErrorKind::NotFound: return "not_found";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace volseg
