#pragma once

#include <functional>

#include "iprompt/tensor.hpp"

namespace iprompt {

// Compares the reverse-mode gradient of f at x against central finite
// differences, element by element, and returns the maximum relative error.
// f is re-evaluated with x's data perturbed in place, so closures over the
// same leaf work as expected. x must require gradients.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double h = 1e-5);

}  // namespace iprompt
