#pragma once

#include <stdexcept>
#include <vector>

#include "estformer/tensor.hpp"

namespace estformer {

// Squared spectral distance summed over rows: sum_m sum_k |F(gt_m)_k - F(sr_m)_k|^2
// over the full DFT spectrum. By Parseval this equals T * sum((gt - sr)^2).
Tensor fmse(const Tensor& x_gt, const Tensor& x_sr);
// Sum of absolute differences.
Tensor mae_loss(const Tensor& x_gt, const Tensor& x_sr);

struct LossBreakdown {
  double fmse = 0.0;
  double mae = 0.0;
  double total = 0.0;
  double sigma1_sq = 1.0;
  double sigma2_sq = 1.0;
};

struct WeightedLoss {
  Tensor total;  // differentiable scalar
  LossBreakdown breakdown;
};

// total = fmse / (2 exp(s1)) + mae / (2 exp(s2)) + (s1 + s2) / 2, i.e. the
// uncertainty-weighted sum with sigma_i^2 = exp(s_i) and log(sigma1 sigma2).
WeightedLoss auto_weighted_loss(const Tensor& fmse_value, const Tensor& mae_value, const Tensor& s1,
                                const Tensor& s2);

class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// sum((gt - sr)^2) / sum(gt^2)
double nmse(const Tensor& x_gt, const Tensor& x_sr);
// -10 log10(nmse); throws MetricError for a perfect reconstruction.
double snr_db(const Tensor& x_gt, const Tensor& x_sr);
double snr_from_nmse(double nmse_value);
// Mean over rows of the per-row Pearson correlation.
double pcc(const Tensor& x_gt, const Tensor& x_sr);

}  // namespace estformer
