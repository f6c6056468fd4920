#pragma once

#include <stdexcept>
#include <string>

namespace probescreen {

enum class ErrorKind {
  validation,
  transport,
  contract,
  io,
  cache_miss,
  degenerate_vector,
  mutation_failed,
  internal,
};

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

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::transport: return "transport";
    case ErrorKind::contract: return "contract";
    case ErrorKind::io: return "io";
    case ErrorKind::cache_miss: return "cache_miss";
    case ErrorKind::degenerate_vector: return "degenerate_vector";
    case ErrorKind::mutation_failed: return "mutation_failed";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

}  // namespace probescreen
