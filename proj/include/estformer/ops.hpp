#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "estformer/rng.hpp"
#include "estformer/tensor.hpp"

// Differentiable primitives. Every op records a backward rule on the active
// tape when any input requires grad; without an active tape they are plain
// numeric functions.
namespace estformer::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
// x[m x k] * w[k x n] + b[n] broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor exp(const Tensor& a);

Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
// Row gather on a matrix; indices may repeat (gradient is scatter-added).
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index);

Tensor softmax_rows(const Tensor& a);
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor gelu(const Tensor& a);
Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_abs(const Tensor& a);
Tensor sum_sq(const Tensor& a);
// sum_{r,c} w[c] * a[r,c]^2
Tensor col_weighted_sum_sq(const Tensor& a, std::span<const double> weights);

struct Spectrum {
  Tensor re;
  Tensor im;
};
// Unnormalized forward DFT of each row of a real [M x T] matrix (or of a
// length-T vector), keeping bins 0..T/2. Implemented as a product with fixed
// cosine/sine matrices, so its backward rule is the adjoint.
Spectrum rdft(const Tensor& x);
// Bin multiplicities that make the half spectrum's energy equal the full one:
// 1 for DC (and Nyquist when T is even), 2 otherwise.
std::vector<double> rdft_weights(std::size_t n);

// Mean softmax cross-entropy of logits[N x K] against integer labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace estformer::ops
