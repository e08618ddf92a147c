#include "sympde/adam.hpp"

#include <cmath>

namespace sympde {

void adam_step(Vec& params, const Vec& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state lengths differ");
  if (!grads.allFinite())
    throw NumericError("adam_step: non-finite gradient, update refused");

  const double rate = state.lr.at(state.step);
  state.step += 1;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
  state.u = state.beta2 * state.u + (1.0 - state.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(state.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, double(state.step));
  const Vec mhat = state.m / bc1;
  const Vec denom = (state.u / bc2).cwiseSqrt() + Vec::Constant(params.size(), state.eps);
  params -= rate * mhat.cwiseQuotient(denom);
}

}  // namespace sympde
