#pragma once

// Straight-line reference implementations used as oracles. None of these go
// through estformer::ops; they work on nested vectors with explicit loops.

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "estformer/attention.hpp"
#include "estformer/blocks.hpp"
#include "estformer/rng.hpp"
#include "estformer/tensor.hpp"

namespace oracle {

using Mat = std::vector<std::vector<double>>;

inline Mat to_mat(const estformer::Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

inline estformer::Tensor to_tensor(const Mat& m) {
  estformer::Tensor t({m.size(), m[0].size()});
  for (std::size_t r = 0; r < m.size(); ++r)
    for (std::size_t c = 0; c < m[0].size(); ++c) t.mutable_data()[r * m[0].size() + c] = m[r][c];
  return t;
}

inline std::vector<double> to_vec(const estformer::Tensor& t) { return {t.values().begin(), t.values().end()}; }

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t k = 0; k < b.size(); ++k) out[i][j] += a[i][k] * b[k][j];
  return out;
}

inline Mat transpose(const Mat& a) {
  Mat out(a[0].size(), std::vector<double>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) out[j][i] = a[i][j];
  return out;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[0].size(); ++j) out[i][j] += b[i][j];
  return out;
}

inline Mat add_bias(const Mat& a, const std::vector<double>& b) {
  Mat out = a;
  for (auto& row : out)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b[j];
  return out;
}

inline Mat affine(const Mat& x, const estformer::Tensor& w, const estformer::Tensor& b) {
  return add_bias(matmul(x, to_mat(w)), to_vec(b));
}

inline Mat layer_norm(const Mat& a, const std::vector<double>& g, const std::vector<double>& b, double eps) {
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double mean = 0.0, var = 0.0;
    for (double v : a[i]) mean += v;
    mean /= static_cast<double>(a[i].size());
    for (double v : a[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(a[i].size());
    for (std::size_t j = 0; j < a[i].size(); ++j) out[i][j] = (a[i][j] - mean) / std::sqrt(var + eps) * g[j] + b[j];
  }
  return out;
}

inline double gelu(double x) {
  const double c = std::sqrt(2.0 / std::numbers::pi);
  return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
}

inline Mat gelu(const Mat& a) {
  Mat out = a;
  for (auto& row : out)
    for (double& v : row) v = gelu(v);
  return out;
}

// Explicit-loop multi-head attention: every score, softmax and weighted sum
// is spelled out per head, token pair and feature.
inline Mat attention(const estformer::MSAParams& p, const Mat& z) {
  const std::size_t n = z.size(), d = z[0].size(), h = p.num_heads, hw = d / h;
  const Mat wq = to_mat(p.wq), wk = to_mat(p.wk), wv = to_mat(p.wv), wo = to_mat(p.wo);
  Mat q(n, std::vector<double>(d, 0.0)), k = q, v = q, cat = q;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      for (std::size_t l = 0; l < d; ++l) {
        q[i][j] += z[i][l] * wq[l][j];
        k[i][j] += z[i][l] * wk[l][j];
        v[i][j] += z[i][l] * wv[l][j];
      }
  for (std::size_t head = 0; head < h; ++head) {
    const std::size_t off = head * hw;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double mx = -1e300;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::size_t f = 0; f < hw; ++f) dot += q[i][off + f] * k[j][off + f];
        s[j] = dot / std::sqrt(static_cast<double>(hw));
        mx = std::max(mx, s[j]);
      }
      double den = 0.0;
      for (double& x : s) {
        x = std::exp(x - mx);
        den += x;
      }
      for (std::size_t f = 0; f < hw; ++f) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += s[j] / den * v[j][off + f];
        cat[i][off + f] = acc;
      }
    }
  }
  return matmul(cat, wo);
}

inline Mat mlp(const estformer::MLPParams& p, const Mat& z) {
  return affine(gelu(affine(z, p.fc1.w, p.fc1.b)), p.fc2.w, p.fc2.b);
}

// Pre-norm block on row tokens: h = attn(LN z) + z; out = mlp(LN h) + h.
inline Mat token_block(const estformer::TokenBlockParams& p, const Mat& z, double eps = 1e-5) {
  const Mat h = add(attention(p.msa, layer_norm(z, to_vec(p.ln1.gain), to_vec(p.ln1.bias), eps)), z);
  return add(mlp(p.mlp, layer_norm(h, to_vec(p.ln2.gain), to_vec(p.ln2.bias), eps)), h);
}

inline Mat cab(const estformer::CABParams& p, const Mat& z, bool outer = true) {
  const Mat t = transpose(token_block(p.tsab, transpose(z)));
  const Mat s = token_block(p.ssab, t);
  return outer ? add(s, z) : s;
}

// Full complex DFT by the O(T^2) definition.
inline std::vector<std::complex<double>> dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      const double a = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(a), std::sin(a));
    }
    out[k] = acc;
  }
  return out;
}

inline double max_abs_diff(const estformer::Tensor& a, const estformer::Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Mat& a, const estformer::Tensor& b) { return max_abs_diff(to_tensor(a), b); }

inline estformer::Tensor random_tensor(estformer::Shape shape, estformer::Rng& rng, double lo = -1.0,
                                       double hi = 1.0) {
  estformer::Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

inline void randomize(estformer::Tensor& t, estformer::Rng& rng, double scale) {
  for (double& v : t.mutable_values()) v = rng.normal(0.0, scale);
}

inline void fill(estformer::Tensor& t, double v) {
  for (double& x : t.mutable_values()) x = v;
}

}  // namespace oracle
