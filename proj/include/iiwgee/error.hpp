#pragma once

#include <stdexcept>
#include <string>

namespace iiwgee {

enum class ErrorKind {
  invalid_argument,
  no_history,
  non_identifiable,
  rank_deficient,
  separation,
  positivity,
  grid_too_coarse,
  calibration,
  validation,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::no_history: return "no history available";
    case ErrorKind::non_identifiable: return "non-identifiable";
    case ErrorKind::rank_deficient: return "rank deficient";
    case ErrorKind::separation: return "separation";
    case ErrorKind::positivity: return "positivity violation";
    case ErrorKind::grid_too_coarse: return "grid too coarse";
    case ErrorKind::calibration: return "calibration failed";
    case ErrorKind::validation: return "validation failed";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

// Every failure raised by the library carries a kind so callers (the study
// harness, the CLI) can decide between dropping an iteration and aborting.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

}  // namespace iiwgee
