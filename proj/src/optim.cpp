#include "iprompt/optim.hpp"

#include <cmath>

#include "iprompt/errors.hpp"

namespace iprompt {

AdamState::AdamState(std::vector<Tensor> params_in, double base_lr_in)
    : params(std::move(params_in)), base_lr(base_lr_in) {
  if (base_lr <= 0.0) throw UsageError("AdamState: base_lr must be positive");
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (const auto& p : params) {
    if (!p.requires_grad()) {
      throw UsageError("AdamState: parameter does not require gradients");
    }
    first_moment.emplace_back(p.size(), 0.0);
    second_moment.emplace_back(p.size(), 0.0);
  }
}

void adam_step(AdamState& state, double lr_t) {
  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (std::size_t pi = 0; pi < state.params.size(); ++pi) {
    Tensor& p = state.params[pi];
    if (!p.requires_grad()) throw UsageError("adam_step: parameter lost its gradient buffer");
    auto& g = p.grad();
    auto& m = state.first_moment[pi];
    auto& v = state.second_moment[pi];
    auto& x = p.data();
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      x[i] -= lr_t * mhat / (std::sqrt(vhat) + state.eps);
    }
    p.zero_grad();
  }
}

double cosine_lr(long step, long total_steps, double base_lr) {
  if (total_steps <= 0) throw UsageError("cosine_lr: total_steps must be positive");
  if (step < 0 || step > total_steps) throw UsageError("cosine_lr: step out of range");
  const double pi = 3.14159265358979323846;
  return base_lr * (1.0 + std::cos(pi * static_cast<double>(step) / static_cast<double>(total_steps))) / 2.0;
}

}  // namespace iprompt
