#pragma once

#include <stdexcept>
#include <string>

namespace bilevel {

enum class ErrorKind {
  config,                     // bad config file / flag / argument
  dim_mismatch,
  non_finite,
  not_spd,
  dense_cap_exceeded,
  unsupported_stencil,
  insufficient_points,
  non_positive_value,
  diverged,
  negative_beta_not_enabled,
  phase_diverged,
  indefinite_detected,
  non_positive_beta,
  condition_violated,
  region_too_small,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(to_string(kind)) + ": " + msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

// Process exit code for the CLI: 2 = caller mistake, 3 = numerical failure.
int exit_code_for(ErrorKind kind);

}  // namespace bilevel
