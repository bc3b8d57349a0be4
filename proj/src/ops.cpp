#include "estformer/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>

namespace estformer::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const RowMat>;
using MMap = Eigen::Map<RowMat>;

CMap cmap(const Tensor& t, std::size_t r, std::size_t c) {
  return CMap(t.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
MMap mmap(double* p, std::size_t r, std::size_t c) {
  return MMap(p, static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (active_tape() == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

void record(Tensor& out, Tape::BackwardFn fn) {
  out.mark_tracked();
  active_tape()->record(out, std::move(fn));
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, axis length, inner).
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

AxisView axis_view(const Shape& s, std::size_t axis) {
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= s[i];
  v.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) v.inner *= s[i];
  return v;
}

Tensor scalar_out(double v) { return Tensor::scalar(v); }

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  Tensor out({m, n});
  mmap(out.mutable_data(), m, n).noalias() = cmap(a, m, k) * cmap(b, k, n);
  if (tracking({&a, &b})) {
    record(out, [a, b, out, m, k, n]() mutable {
      const auto g = CMap(out.grad().data(), m, n);
      if (a.requires_grad()) mmap(a.mutable_grad().data(), m, k).noalias() += g * cmap(b, k, n).transpose();
      if (b.requires_grad()) mmap(b.mutable_grad().data(), k, n).noalias() += cmap(a, m, k).transpose() * g;
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  if (w.rows() != k || b.size() != n) {
    throw ShapeError("linear: shapes disagree, x " + shape_str(x.shape()) + " w " + shape_str(w.shape()) +
                     " b " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  auto y = mmap(out.mutable_data(), m, n);
  y.noalias() = cmap(x, m, k) * cmap(w, k, n);
  y.rowwise() += cmap(b, 1, n).row(0);
  if (tracking({&x, &w, &b})) {
    record(out, [x, w, b, out, m, k, n]() mutable {
      const auto g = CMap(out.grad().data(), m, n);
      if (x.requires_grad()) mmap(x.mutable_grad().data(), m, k).noalias() += g * cmap(w, k, n).transpose();
      if (w.requires_grad()) mmap(w.mutable_grad().data(), k, n).noalias() += cmap(x, m, k).transpose() * g;
      if (b.requires_grad()) mmap(b.mutable_grad().data(), 1, n) += g.colwise().sum();
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  Tensor out(a.shape());
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] + b[i];
  if (tracking({&a, &b})) {
    record(out, [a, b, out]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  Tensor out(a.shape());
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] - b[i];
  if (tracking({&a, &b})) {
    record(out, [a, b, out]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  Tensor out(a.shape());
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] * b[i];
  if (tracking({&a, &b})) {
    record(out, [a, b, out]() mutable {
      const auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] * c;
  if (tracking({&a})) {
    record(out, [a, out, c]() mutable {
      const auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out(a.shape());
  auto* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = std::exp(a[i]);
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      const auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * out[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  mmap(out.mutable_data(), c, r) = cmap(a, r, c).transpose();
  if (tracking({&a})) {
    record(out, [a, out, r, c]() mutable {
      mmap(a.mutable_grad().data(), r, c) += CMap(out.grad().data(), c, r).transpose();
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, Shape shape) {
  Tensor out(std::move(shape));
  if (out.size() != a.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(out.shape()));
  }
  std::copy(a.values().begin(), a.values().end(), out.mutable_data());
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      const auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, std::size_t axis) {
  if (a.rank() != b.rank() || axis >= a.rank()) {
    throw ShapeError("concat: bad axis " + std::to_string(axis) + " for " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != axis && a.dim(i) != b.dim(i)) {
      throw ShapeError("concat: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                       " differ off the concat axis");
    }
  }
  Shape s = a.shape();
  s[axis] += b.dim(axis);
  Tensor out(s);
  const AxisView va = axis_view(a.shape(), axis), vb = axis_view(b.shape(), axis);
  const std::size_t ca = va.len * va.inner, cb = vb.len * vb.inner;
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < va.outer; ++r) {
    std::copy_n(a.data() + r * ca, ca, o + r * (ca + cb));
    std::copy_n(b.data() + r * cb, cb, o + r * (ca + cb) + ca);
  }
  if (tracking({&a, &b})) {
    record(out, [a, b, out, va, ca, cb]() mutable {
      const double* g = out.grad().data();
      for (std::size_t r = 0; r < va.outer; ++r) {
        if (a.requires_grad()) {
          double* ga = a.mutable_grad().data() + r * ca;
          for (std::size_t i = 0; i < ca; ++i) ga[i] += g[r * (ca + cb) + i];
        }
        if (b.requires_grad()) {
          double* gb = b.mutable_grad().data() + r * cb;
          for (std::size_t i = 0; i < cb; ++i) gb[i] += g[r * (ca + cb) + ca + i];
        }
      }
    });
  }
  return out;
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= a.rank() || begin >= end || end > a.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) + ") on axis " +
                     std::to_string(axis) + " out of bounds for " + shape_str(a.shape()));
  }
  Shape s = a.shape();
  s[axis] = end - begin;
  Tensor out(s);
  const AxisView v = axis_view(a.shape(), axis);
  const std::size_t src_stride = v.len * v.inner, n = (end - begin) * v.inner, off = begin * v.inner;
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < v.outer; ++r) std::copy_n(a.data() + r * src_stride + off, n, o + r * n);
  if (tracking({&a})) {
    record(out, [a, out, v, src_stride, n, off]() mutable {
      const double* g = out.grad().data();
      double* ga = a.mutable_grad().data();
      for (std::size_t r = 0; r < v.outer; ++r) {
        for (std::size_t i = 0; i < n; ++i) ga[r * src_stride + off + i] += g[r * n + i];
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> index) {
  require_matrix(a, "gather_rows");
  const std::size_t c = a.cols();
  if (index.empty()) throw ShapeError("gather_rows: empty index");
  std::vector<std::size_t> idx(index.begin(), index.end());
  for (auto i : idx) {
    if (i >= a.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(i) + " out of range for " + shape_str(a.shape()));
    }
  }
  Tensor out({idx.size(), c});
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(a.data() + idx[r] * c, c, o + r * c);
  if (tracking({&a})) {
    record(out, [a, out, idx = std::move(idx), c]() mutable {
      const double* g = out.grad().data();
      double* ga = a.mutable_grad().data();
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t j = 0; j < c; ++j) ga[idx[r] * c + j] += g[r * c + j];
      }
    });
  }
  return out;
}

Tensor softmax_rows(const Tensor& a) {
  const std::size_t n = a.shape().back(), m = a.size() / n;
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = a.data() + r * n;
    double mx = x[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += (o[r * n + j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[r * n + j] /= z;
  }
  if (tracking({&a})) {
    record(out, [a, out, m, n]() mutable {
      const double* g = out.grad().data();
      double* ga = a.mutable_grad().data();
      for (std::size_t r = 0; r < m; ++r) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * out[r * n + j];
        for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += out[r * n + j] * (g[r * n + j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t n = a.shape().back(), m = a.size() / n;
  if (gain.size() != n || bias.size() != n) {
    throw ShapeError("layer_norm: gain/bias length must be " + std::to_string(n));
  }
  Tensor out(a.shape());
  std::vector<double> xhat(a.size()), inv_std(m);
  double* o = out.mutable_data();
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = a.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (x[j] - mu) * inv_std[r];
      o[r * n + j] = xhat[r * n + j] * gain[j] + bias[j];
    }
  }
  if (tracking({&a, &gain, &bias})) {
    record(out, [a, gain, bias, out, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)]() mutable {
      const double* g = out.grad().data();
      if (gain.requires_grad() || bias.requires_grad()) {
        for (std::size_t r = 0; r < m; ++r) {
          for (std::size_t j = 0; j < n; ++j) {
            if (gain.requires_grad()) gain.mutable_grad()[j] += g[r * n + j] * xhat[r * n + j];
            if (bias.requires_grad()) bias.mutable_grad()[j] += g[r * n + j];
          }
        }
      }
      if (a.requires_grad()) {
        double* ga = a.mutable_grad().data();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            const double gh = g[r * n + j] * gain[j];
            s1 += gh;
            s2 += gh * xhat[r * n + j];
          }
          for (std::size_t j = 0; j < n; ++j) {
            const double gh = g[r * n + j] * gain[j];
            ga[r * n + j] += inv_std[r] * (gh - s1 * inv_n - xhat[r * n + j] * s2 * inv_n);
          }
        }
      }
    });
  }
  return out;
}

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Tensor gelu(const Tensor& a) {
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i];
    o[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      const auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double x = a[i];
        const double u = kGeluC * (x + kGeluA * x * x * x);
        const double t = std::tanh(u);
        const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        ga[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
      }
    });
  }
  return out;
}

Tensor dropout(const Tensor& a, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(a.size());
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  Tensor out(a.shape());
  double* o = out.mutable_data();
  for (std::size_t i = 0; i < a.size(); ++i) o[i] = a[i] * mask[i];
  if (tracking({&a})) {
    record(out, [a, out, mask = std::move(mask)]() mutable {
      const auto g = out.grad();
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * mask[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out = scalar_out(s);
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (double& ga : a.mutable_grad()) ga += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_abs(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += std::abs(v);
  Tensor out = scalar_out(s);
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * static_cast<double>((a[i] > 0.0) - (a[i] < 0.0));
    });
  }
  return out;
}

Tensor sum_sq(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  Tensor out = scalar_out(s);
  if (tracking({&a})) {
    record(out, [a, out]() mutable {
      const double g = out.grad()[0];
      auto ga = a.mutable_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * g * a[i];
    });
  }
  return out;
}

Tensor col_weighted_sum_sq(const Tensor& a, std::span<const double> weights) {
  const std::size_t n = a.shape().back(), m = a.size() / n;
  if (weights.size() != n) throw ShapeError("col_weighted_sum_sq: weight count must be " + std::to_string(n));
  std::vector<double> w(weights.begin(), weights.end());
  double s = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t j = 0; j < n; ++j) s += w[j] * a[r * n + j] * a[r * n + j];
  }
  Tensor out = scalar_out(s);
  if (tracking({&a})) {
    record(out, [a, out, m, n, w = std::move(w)]() mutable {
      const double g = out.grad()[0];
      double* ga = a.mutable_grad().data();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += 2.0 * g * w[j] * a[r * n + j];
      }
    });
  }
  return out;
}

namespace {

struct DftBasis {
  Tensor cos_t;  // [T x K]
  Tensor sin_t;  // [T x K], holds -sin so that im = x * sin_t
};

const DftBasis& dft_basis(std::size_t n) {
  static std::mutex mu;
  static std::map<std::size_t, DftBasis> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  const std::size_t k = n / 2 + 1;
  Tensor c({n, k}), s({n, k});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t f = 0; f < k; ++f) {
      // Reduce k*t mod n first so the phase stays accurate for long inputs.
      const double phase = 2.0 * std::numbers::pi * static_cast<double>((f * t) % n) / static_cast<double>(n);
      c.mutable_data()[t * k + f] = std::cos(phase);
      s.mutable_data()[t * k + f] = -std::sin(phase);
    }
  }
  return cache.emplace(n, DftBasis{c, s}).first->second;
}

}  // namespace

Spectrum rdft(const Tensor& x) {
  if (x.rank() == 1) {
    const std::size_t n = x.size();
    Spectrum s = rdft(reshape(x, {1, n}));
    const std::size_t k = n / 2 + 1;
    return {reshape(s.re, {k}), reshape(s.im, {k})};
  }
  require_matrix(x, "rdft");
  const DftBasis& basis = dft_basis(x.cols());
  return {matmul(x, basis.cos_t), matmul(x, basis.sin_t)};
}

std::vector<double> rdft_weights(std::size_t n) {
  const std::size_t k = n / 2 + 1;
  std::vector<double> w(k, 2.0);
  w[0] = 1.0;
  if (n % 2 == 0) w[k - 1] = 1.0;
  return w;
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_matrix(logits, "softmax_cross_entropy");
  const std::size_t m = logits.rows(), k = logits.cols();
  if (labels.size() != m) throw ShapeError("softmax_cross_entropy: label count must equal row count");
  std::vector<int> y(labels.begin(), labels.end());
  std::vector<double> prob(m * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    if (y[r] < 0 || static_cast<std::size_t>(y[r]) >= k) {
      throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    const double* x = logits.data() + r * k;
    double mx = x[0];
    for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(x[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) prob[r * k + j] = std::exp(x[j] - log_z);
    loss += log_z - x[y[r]];
  }
  Tensor out = scalar_out(loss / static_cast<double>(m));
  if (tracking({&logits})) {
    record(out, [logits, out, m, k, y = std::move(y), prob = std::move(prob)]() mutable {
      const double g = out.grad()[0] / static_cast<double>(m);
      double* gl = logits.mutable_grad().data();
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < k; ++j) {
          gl[r * k + j] += g * (prob[r * k + j] - (static_cast<int>(j) == y[r] ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

}  // namespace estformer::ops
