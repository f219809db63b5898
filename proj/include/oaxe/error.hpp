#pragma once

#include <stdexcept>
#include <string>

namespace oaxe {

enum class ErrorKind {
  InvalidInput,   // malformed numeric input (non-finite, empty)
  SizeLimit,
  Shape,
  Vocabulary,
  Parameter,
  Length,
  Config,
  Usage,
  Compatibility,
  Divergence,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid input";
    case ErrorKind::SizeLimit: return "size limit";
    case ErrorKind::Shape: return "shape";
    case ErrorKind::Vocabulary: return "vocabulary";
    case ErrorKind::Parameter: return "parameter";
    case ErrorKind::Length: return "length";
    case ErrorKind::Config: return "config";
    case ErrorKind::Usage: return "usage";
    case ErrorKind::Compatibility: return "compatibility";
    case ErrorKind::Divergence: return "divergence";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Exit code contract of the command line tool: configuration and validation
// problems are 2, everything else that fails at runtime is 1.
inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Usage:
    case ErrorKind::Parameter:
    case ErrorKind::Compatibility:
      return 2;
    default:
      return 1;
  }
}

}  // namespace oaxe
