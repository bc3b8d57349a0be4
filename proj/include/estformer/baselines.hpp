#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "estformer/model.hpp"
#include "estformer/tensor.hpp"

namespace estformer {

struct SplineConfig {
  int m = 4;            // smoothness order
  int n_terms = 7;      // Legendre series length
  double lambda = 0.0;  // ridge added to the kernel diagonal
  void validate() const;
};

class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(const std::string& what, double rcond) : std::runtime_error(what), rcond_(rcond) {}
  double rcond() const { return rcond_; }

 private:
  double rcond_;
};

// P_n(x) by the three-term recurrence.
double legendre_eval(int n, double x);
// g(x) = 1/(4 pi) * sum_{n=1}^{n_terms} (2n+1) / (n^m (n+1)^m) * P_n(x)
double spline_kernel(double cos_theta, const SplineConfig& cfg);

// Linear map from visible-channel values to the values at `targets`, fitted
// once per montage/visible set. Row r of the weight matrix gives target r.
class SphericalSpline {
 public:
  SphericalSpline(const ElectrodeMontage& montage, std::vector<std::size_t> visible,
                  std::vector<std::size_t> targets, const SplineConfig& cfg = {});

  const Tensor& weights() const { return weights_; }  // [targets x visible]
  double rcond() const { return rcond_; }
  // x_visible is [visible x T]; returns [targets x T].
  Tensor apply(const Tensor& x_visible) const;

 private:
  Tensor weights_;
  double rcond_ = 0.0;
};

// Spherical-spline reconstruction of the masked rows.
Tensor si_interpolate(const Tensor& x_lr, const MaskSpec& spec, const SplineConfig& cfg = {});

// Indices (into spec.visible) of the k nearest visible electrodes of each
// masked electrode; ties go to the lower canonical index.
std::vector<std::vector<std::size_t>> an_neighbors(const MaskSpec& spec, std::size_t k);
// Each masked row is the mean of its k nearest visible rows.
Tensor an_interpolate(const Tensor& x_lr, const MaskSpec& spec, std::size_t k = 4);

}  // namespace estformer
