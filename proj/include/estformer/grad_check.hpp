#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "estformer/tensor.hpp"

namespace estformer {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t components = 0;  // how many scalar inputs were perturbed
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Compares tape gradients of a scalar function against central differences.
//
// `leaves` are perturbed in place (their values are restored afterwards) and
// `fn` is re-evaluated without a tape for each perturbation. The per-component
// error is |a - n| / max(|a|, |n|, floor) where floor = 1e-5 * max_i |a_i|,
// so components that are negligible relative to the whole gradient are
// judged on an absolute scale instead of blowing up the ratio.
//
// `stride` > 1 checks every stride-th component of each leaf.
GradCheckResult grad_check(const std::function<Tensor()>& fn, std::vector<Tensor> leaves, double h = 1e-4,
                           std::size_t stride = 1);

// Single-input convenience form.
GradCheckResult grad_check(const std::function<Tensor(const Tensor&)>& fn, const Tensor& x, double h = 1e-4);

}  // namespace estformer
