#pragma once

#include <stdexcept>
#include <string>

namespace cfsf {

enum class ErrorKind {
  InvalidInput,
  RankDeficient,
  Separation,
  NoConvergence,
  EmptyAfterTrim,
  DesignInvalid,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::EmptyAfterTrim: return "EmptyAfterTrim";
    case ErrorKind::DesignInvalid: return "DesignInvalid";
  }
  return "Unknown";
}

// All library failures surface as this exception; `kind()` lets callers
// branch on the failure class (e.g. drop a separated threshold).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace cfsf
