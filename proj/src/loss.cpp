#include "estformer/loss.hpp"

#include <cmath>
#include <limits>

#include "estformer/ops.hpp"

namespace estformer {

namespace {
void require_pair(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}
}  // namespace

Tensor fmse(const Tensor& x_gt, const Tensor& x_sr) {
  require_pair(x_gt, x_sr, "fmse");
  // The DFT is linear, so F(gt) - F(sr) = F(gt - sr).
  const Tensor diff = ops::sub(x_gt, x_sr);
  const auto spec = ops::rdft(diff);
  const auto w = ops::rdft_weights(diff.shape().back());
  return ops::add(ops::col_weighted_sum_sq(spec.re, w), ops::col_weighted_sum_sq(spec.im, w));
}

Tensor mae_loss(const Tensor& x_gt, const Tensor& x_sr) {
  require_pair(x_gt, x_sr, "mae_loss");
  return ops::sum_abs(ops::sub(x_gt, x_sr));
}

WeightedLoss auto_weighted_loss(const Tensor& fmse_value, const Tensor& mae_value, const Tensor& s1,
                                const Tensor& s2) {
  const Tensor w1 = ops::exp(ops::scale(s1, -1.0));
  const Tensor w2 = ops::exp(ops::scale(s2, -1.0));
  const Tensor total =
      ops::add(ops::add(ops::scale(ops::mul(fmse_value, w1), 0.5), ops::scale(ops::mul(mae_value, w2), 0.5)),
               ops::scale(ops::add(s1, s2), 0.5));
  LossBreakdown b;
  b.fmse = fmse_value.item();
  b.mae = mae_value.item();
  b.total = total.item();
  b.sigma1_sq = std::exp(s1.item());
  b.sigma2_sq = std::exp(s2.item());
  return {total, b};
}

double nmse(const Tensor& x_gt, const Tensor& x_sr) {
  require_pair(x_gt, x_sr, "nmse");
  double err = 0.0, energy = 0.0;
  for (std::size_t i = 0; i < x_gt.size(); ++i) {
    const double d = x_gt[i] - x_sr[i];
    err += d * d;
    energy += x_gt[i] * x_gt[i];
  }
  if (energy == 0.0) throw MetricError("nmse undefined: ground truth has zero energy");
  return err / energy;
}

double snr_from_nmse(double nmse_value) {
  if (!(nmse_value > 0.0)) throw MetricError("snr undefined: reconstruction error is zero");
  return -10.0 * std::log10(nmse_value);
}

double snr_db(const Tensor& x_gt, const Tensor& x_sr) { return snr_from_nmse(nmse(x_gt, x_sr)); }

double pcc(const Tensor& x_gt, const Tensor& x_sr) {
  require_pair(x_gt, x_sr, "pcc");
  if (x_gt.rank() > 2) throw ShapeError("pcc: expected rows x time");
  const std::size_t n = x_gt.shape().back(), rows = x_gt.size() / n;
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double ma = 0.0, mb = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      ma += x_gt[r * n + j];
      mb += x_sr[r * n + j];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = x_gt[r * n + j] - ma, b = x_sr[r * n + j] - mb;
      sab += a * b;
      saa += a * a;
      sbb += b * b;
    }
    if (saa == 0.0 || sbb == 0.0) throw MetricError("pcc undefined: constant row " + std::to_string(r));
    total += sab / std::sqrt(saa * sbb);
  }
  return total / static_cast<double>(rows);
}

}  // namespace estformer
