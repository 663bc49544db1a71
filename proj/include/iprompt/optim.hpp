#pragma once

#include <vector>

#include "iprompt/tensor.hpp"

namespace iprompt {

// Adam with bias correction at the conventional (0.9, 0.999, 1e-8).
struct AdamState {
  explicit AdamState(std::vector<Tensor> params, double base_lr = 1e-3);

  std::vector<Tensor> params;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  long step_count = 0;
  double base_lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One update at learning rate lr_t; gradients are consumed and zeroed.
void adam_step(AdamState& state, double lr_t);

// base_lr * (1 + cos(pi * step / total_steps)) / 2
double cosine_lr(long step, long total_steps, double base_lr);

}  // namespace iprompt
