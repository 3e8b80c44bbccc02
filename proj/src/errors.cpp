#include "bilevel/errors.hpp"

namespace bilevel {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "ConfigError";
    case ErrorKind::dim_mismatch: return "DimMismatch";
    case ErrorKind::non_finite: return "NonFinite";
    case ErrorKind::not_spd: return "NotSPD";
    case ErrorKind::dense_cap_exceeded: return "DenseCapExceeded";
    case ErrorKind::unsupported_stencil: return "UnsupportedStencil";
    case ErrorKind::insufficient_points: return "InsufficientPoints";
    case ErrorKind::non_positive_value: return "NonPositiveValue";
    case ErrorKind::diverged: return "Diverged";
    case ErrorKind::negative_beta_not_enabled: return "NegativeBetaNotEnabled";
    case ErrorKind::phase_diverged: return "PhaseDiverged";
    case ErrorKind::indefinite_detected: return "IndefiniteDetected";
    case ErrorKind::non_positive_beta: return "NonPositiveBeta";
    case ErrorKind::condition_violated: return "ConditionViolated";
    case ErrorKind::region_too_small: return "RegionTooSmall";
  }
  return "Error";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::dim_mismatch:
    case ErrorKind::dense_cap_exceeded:
    case ErrorKind::unsupported_stencil:
    case ErrorKind::insufficient_points:
    case ErrorKind::non_positive_value:
    case ErrorKind::non_positive_beta:
    case ErrorKind::negative_beta_not_enabled:
    case ErrorKind::region_too_small:
      return 2;
    case ErrorKind::non_finite:
    case ErrorKind::not_spd:
    case ErrorKind::diverged:
    case ErrorKind::phase_diverged:
    case ErrorKind::indefinite_detected:
    case ErrorKind::condition_violated:
      return 3;
  }
  return 3;
}

}  // namespace bilevel
