#pragma once

#include <stdexcept>
#include <string>

namespace mitoseg {

/// Error categories raised by the library. The CLI maps every kind to exit
/// code 2 (usage/validation); anything that is not an `Error` maps to 1.
enum class ErrorKind {
  Format,
  SizeMismatch,
  UnsupportedDtype,
  InvalidArgument,
  Domain,
  UnsupportedThreshold,
  DegenerateTarget,
  MissingNeighbor,
  Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::SizeMismatch: return "size mismatch";
    case ErrorKind::UnsupportedDtype: return "unsupported dtype";
    case ErrorKind::InvalidArgument: return "invalid argument";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::UnsupportedThreshold: return "unsupported threshold";
    case ErrorKind::DegenerateTarget: return "degenerate target";
    case ErrorKind::MissingNeighbor: return "missing neighbor";
    case ErrorKind::Io: return "i/o error";
  }
  return "error";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

}  // namespace mitoseg
