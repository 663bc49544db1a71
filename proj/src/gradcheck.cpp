#include "iprompt/gradcheck.hpp"

#include <cmath>

#include "iprompt/errors.hpp"

namespace iprompt {

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double h) {
  if (!x.requires_grad()) throw UsageError("grad_check: x must require gradients");
  if (h <= 0.0) throw UsageError("grad_check: step must be positive");

  x.zero_grad();
  Tensor y = f(x);
  if (y.size() != 1) throw UsageError("grad_check: f must return a scalar");
  if (!std::isfinite(y.value())) throw NumericError("grad_check: f is not finite at x");
  y.backward();
  std::vector<double> analytic = x.grad();
  x.zero_grad();

  double max_rel = 0.0;
  auto eval = [&](std::size_t i, double v) {
    double saved = x.data()[i];
    x.data()[i] = v;
    double out;
    {
      NoGradGuard ng;
      out = f(x).value();
    }
    x.data()[i] = saved;
    if (!std::isfinite(out)) throw NumericError("grad_check: f is not finite near x");
    return out;
  };
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x.data()[i];
    double numeric = (eval(i, v + h) - eval(i, v - h)) / (2.0 * h);
    double denom = std::max(std::abs(analytic[i]), std::abs(numeric));
    if (denom < 1e-12) continue;  // both effectively zero
    max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace iprompt
