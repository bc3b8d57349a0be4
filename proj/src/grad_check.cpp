#include "estformer/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace estformer {

GradCheckResult grad_check(const std::function<Tensor()>& fn, std::vector<Tensor> leaves, double h,
                           std::size_t stride) {
  if (!(h >= 1e-6 && h <= 1e-3)) throw std::invalid_argument("grad_check: step must lie in [1e-6, 1e-3]");
  if (stride == 0) stride = 1;

  std::vector<bool> had_grad;
  for (auto& leaf : leaves) {
    had_grad.push_back(leaf.requires_grad());
    leaf.set_requires_grad(true);
  }
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(fn());
  }
  std::vector<std::vector<double>> analytic;
  double scale = 0.0;
  for (auto& leaf : leaves) {
    analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
    for (double g : leaf.grad()) scale = std::max(scale, std::abs(g));
  }
  const double floor = std::max(1e-5 * scale, 1e-300);

  GradCheckResult result;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    auto values = leaves[l].mutable_values();
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + h;
      const double fp = fn().item();
      values[i] = saved - h;
      const double fm = fn().item();
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[l][i];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++result.components;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    if (had_grad[l]) {
      leaves[l].zero_grad();
    } else {
      leaves[l].set_requires_grad(false);
    }
  }
  return result;
}

GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x, double h) {
  Tensor leaf = x.clone();
  return grad_check([&] { return fn(leaf); }, {leaf}, h);
}

}  // namespace estformer
