#pragma once

#include "sympde/common.hpp"

namespace sympde {

/// Linear decay from `initial` to `final` over `budget` steps, constant after.
struct LrSchedule {
  double initial = 1e-3;
  double final = 1e-5;
  long budget = 1000;

  double at(long step) const {
    if (budget <= 0) return final;
    const double f = std::min(1.0, double(step) / double(budget));
    return initial + (final - initial) * f;
  }
};

struct AdamState {
  Vec m, u;
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  LrSchedule lr;

  explicit AdamState(Eigen::Index n, LrSchedule schedule = {})
      : m(Vec::Zero(n)), u(Vec::Zero(n)), lr(schedule) {}
};

/// Bias-corrected ADAM update, in place. Refuses non-finite gradients.
void adam_step(Vec& params, const Vec& grads, AdamState& state);

}  // namespace sympde
