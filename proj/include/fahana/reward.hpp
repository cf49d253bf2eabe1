#pragma once

#include <string>

#include "fahana/errors.hpp"

namespace fahana {

// Deployment target: timing budget in ms, minimum acceptable accuracy,
// and the device whose latency numbers apply.
struct Specification {
  double timing_constraint_ms = 0.0;
  double accuracy_constraint = 0.0;
  std::string device_id;
};

struct RewardParams {
  double alpha = 1.0;
  double beta = 1.0;
};

inline constexpr double kInfeasibleReward = -1.0;

inline bool meets_timing(double latency_ms, const Specification& spec) {
  return latency_ms <= spec.timing_constraint_ms;
}

inline bool meets_accuracy(double accuracy, const Specification& spec) {
  return accuracy >= spec.accuracy_constraint;
}

// alpha * accuracy - beta * unfairness when both constraints hold
// (boundaries count as holding), otherwise exactly -1.
inline double reward(double accuracy, double unfairness_score, double latency_ms,
                     const Specification& spec, const RewardParams& params) {
  if (params.alpha < 0.0 || params.beta < 0.0)
    throw ValidationError("reward weights must be non-negative");
  if (!(latency_ms > 0.0)) throw ValidationError("latency must be positive");
  if (!meets_timing(latency_ms, spec) || !meets_accuracy(accuracy, spec))
    return kInfeasibleReward;
  return params.alpha * accuracy - params.beta * unfairness_score;
}

}  // namespace fahana
