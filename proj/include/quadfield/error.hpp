#pragma once

#include <stdexcept>
#include <string>

namespace quadfield {

/// Pipeline stage that raised an error. Drives the CLI exit code.
enum class ErrorKind {
  Config = 2,
  Solver = 3,
  Topology = 4,
  Tracing = 5,
  Decomposition = 6,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Solver: return "solver";
    case ErrorKind::Topology: return "topology";
    case ErrorKind::Tracing: return "tracing";
    case ErrorKind::Decomposition: return "decomposition";
  }
  return "unknown";
}

}  // namespace quadfield
