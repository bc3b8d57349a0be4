#include "estformer/baselines.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace estformer {

void SplineConfig::validate() const {
  if (m < 2) throw std::invalid_argument("spline order m must be >= 2");
  if (n_terms < 1) throw std::invalid_argument("spline n_terms must be >= 1");
  if (lambda < 0.0) throw std::invalid_argument("spline lambda must be >= 0");
}

double legendre_eval(int n, double x) {
  if (std::abs(x) > 1.0) throw std::domain_error("legendre_eval: |x| > 1");
  if (n < 0) throw std::domain_error("legendre_eval: negative degree");
  if (n == 0) return 1.0;
  double p0 = 1.0, p1 = x;
  for (int k = 1; k < n; ++k) {
    const double p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
    p0 = p1;
    p1 = p2;
  }
  return p1;
}

double spline_kernel(double cos_theta, const SplineConfig& cfg) {
  cfg.validate();
  if (std::abs(cos_theta) > 1.0) throw std::domain_error("spline_kernel: |cos theta| > 1");
  double p0 = 1.0, p1 = cos_theta, g = 0.0;
  for (int n = 1; n <= cfg.n_terms; ++n) {
    if (n > 1) {
      const double p2 = ((2.0 * (n - 1) + 1.0) * cos_theta * p1 - (n - 1) * p0) / n;
      p0 = p1;
      p1 = p2;
    }
    g += (2.0 * n + 1.0) / (std::pow(n, cfg.m) * std::pow(n + 1.0, cfg.m)) * p1;
  }
  return g / (4.0 * std::numbers::pi);
}

namespace {
double cos_between(const Electrode& a, const Electrode& b) {
  return std::clamp(a.x * b.x + a.y * b.y + a.z * b.z, -1.0, 1.0);
}
}  // namespace

SphericalSpline::SphericalSpline(const ElectrodeMontage& montage, std::vector<std::size_t> visible,
                                 std::vector<std::size_t> targets, const SplineConfig& cfg) {
  cfg.validate();
  const auto nv = static_cast<Eigen::Index>(visible.size());
  const auto nt = static_cast<Eigen::Index>(targets.size());
  if (nv < 1 || nt < 1) throw std::invalid_argument("spherical spline needs visible and target electrodes");

  // [G + lambda I, 1; 1^T, 0] [c; c0] = [v; 0]
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(nv + 1, nv + 1);
  for (Eigen::Index i = 0; i < nv; ++i) {
    for (Eigen::Index j = 0; j < nv; ++j) {
      a(i, j) = spline_kernel(cos_between(montage[visible[i]], montage[visible[j]]), cfg);
    }
    a(i, i) += cfg.lambda;
    a(i, nv) = 1.0;
    a(nv, i) = 1.0;
  }
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  rcond_ = lu.rcond();
  if (!(rcond_ > 1e-14)) {
    throw SingularSystemError("spherical spline system is singular (rcond estimate " + std::to_string(rcond_) + ")",
                              rcond_);
  }
  // Evaluation row e_r = [g(target, visible_j)..., 1]; value = e_r A^{-1} [v; 0],
  // so the weights are the first nv columns of E A^{-1}.
  Eigen::MatrixXd e(nt, nv + 1);
  for (Eigen::Index r = 0; r < nt; ++r) {
    for (Eigen::Index j = 0; j < nv; ++j) e(r, j) = spline_kernel(cos_between(montage[targets[r]], montage[visible[j]]), cfg);
    e(r, nv) = 1.0;
  }
  // A is symmetric, so E A^{-1} = (A^{-1} E^T)^T.
  const Eigen::MatrixXd w = lu.solve(e.transpose()).transpose();
  weights_ = Tensor({static_cast<std::size_t>(nt), static_cast<std::size_t>(nv)});
  for (Eigen::Index r = 0; r < nt; ++r) {
    for (Eigen::Index j = 0; j < nv; ++j) weights_.mutable_data()[r * nv + j] = w(r, j);
  }
}

Tensor SphericalSpline::apply(const Tensor& x_visible) const {
  const std::size_t nv = weights_.cols(), nt = weights_.rows();
  if (x_visible.rank() != 2 || x_visible.rows() != nv) {
    throw ShapeError("spherical spline input " + shape_str(x_visible.shape()) + " needs " + std::to_string(nv) +
                     " rows");
  }
  const std::size_t t = x_visible.cols();
  Tensor out({nt, t});
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMat>(out.mutable_data(), static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(t)).noalias() =
      Eigen::Map<const RowMat>(weights_.data(), static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(nv)) *
      Eigen::Map<const RowMat>(x_visible.data(), static_cast<Eigen::Index>(nv), static_cast<Eigen::Index>(t));
  return out;
}

Tensor si_interpolate(const Tensor& x_lr, const MaskSpec& spec, const SplineConfig& cfg) {
  spec.validate();
  return SphericalSpline(spec.montage, spec.visible, spec.masked, cfg).apply(x_lr);
}

std::vector<std::vector<std::size_t>> an_neighbors(const MaskSpec& spec, std::size_t k) {
  if (k == 0 || k > spec.c_lr()) {
    throw std::invalid_argument("AN neighbour count must be in 1.." + std::to_string(spec.c_lr()));
  }
  std::vector<std::vector<std::size_t>> out;
  for (auto target : spec.masked) {
    std::vector<std::size_t> order(spec.c_lr());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return spec.montage.angular_distance(target, spec.visible[a]) <
             spec.montage.angular_distance(target, spec.visible[b]);
    });
    order.resize(k);
    out.push_back(std::move(order));
  }
  return out;
}

Tensor an_interpolate(const Tensor& x_lr, const MaskSpec& spec, std::size_t k) {
  spec.validate();
  if (x_lr.rank() != 2 || x_lr.rows() != spec.c_lr()) {
    throw ShapeError("an_interpolate: input " + shape_str(x_lr.shape()) + " needs " + std::to_string(spec.c_lr()) +
                     " rows");
  }
  const auto neighbors = an_neighbors(spec, k);
  const std::size_t t = x_lr.cols();
  Tensor out({spec.c_mask(), t});
  for (std::size_t r = 0; r < neighbors.size(); ++r) {
    double* dst = out.mutable_data() + r * t;
    for (auto j : neighbors[r]) {
      for (std::size_t s = 0; s < t; ++s) dst[s] += x_lr[j * t + s];
    }
    for (std::size_t s = 0; s < t; ++s) dst[s] /= static_cast<double>(k);
  }
  return out;
}

}  // namespace estformer
