#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "estformer/grad_check.hpp"
#include "estformer/ops.hpp"
#include "support.hpp"

namespace grad_cases {

using namespace estformer;

// sum(op(x) * w) with a fixed random w, so every output element matters
// with a distinct weight.
inline Tensor weighted(const Tensor& y, const Tensor& w) { return ops::sum(ops::mul(y, w)); }

inline Tensor away_from_zero(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.2, 1.0);
  return t;
}

inline double check(const std::function<Tensor()>& f, std::vector<Tensor> leaves) {
  for (auto& l : leaves) l.set_requires_grad(true);
  return grad_check(f, leaves, 1e-4).max_rel_error;
}

inline std::size_t dim(Rng& r, std::size_t lo, std::size_t hi) { return lo + r.uniform_index(hi - lo + 1); }

struct GradCase {
  const char* name;
  std::function<double(Rng&)> run;  // returns max relative error
};

// One randomized central-difference check per differentiable op.
inline std::vector<GradCase> op_grad_cases() {
  return {
      {"matmul",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 5), k = dim(r, 1, 5), n = dim(r, 1, 5);
         Tensor a = oracle::random_tensor({m, k}, r), b = oracle::random_tensor({k, n}, r);
         const Tensor w = oracle::random_tensor({m, n}, r);
         return check([&] { return weighted(ops::matmul(a, b), w); }, {a, b});
       }},
      {"linear",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 5), k = dim(r, 1, 5), n = dim(r, 1, 5);
         Tensor x = oracle::random_tensor({m, k}, r), wt = oracle::random_tensor({k, n}, r);
         Tensor b = oracle::random_tensor({n}, r);
         const Tensor w = oracle::random_tensor({m, n}, r);
         return check([&] { return weighted(ops::linear(x, wt, b), w); }, {x, wt, b});
       }},
      {"add/sub/mul/scale",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 4), n = dim(r, 1, 4);
         Tensor a = oracle::random_tensor({m, n}, r), b = oracle::random_tensor({m, n}, r);
         const Tensor w = oracle::random_tensor({m, n}, r);
         return check([&] { return weighted(ops::scale(ops::mul(ops::add(a, b), ops::sub(a, b)), 0.7), w); }, {a, b});
       }},
      {"exp",
       [](Rng& r) {
         Tensor a = oracle::random_tensor({dim(r, 1, 4), dim(r, 1, 4)}, r);
         const Tensor w = oracle::random_tensor(a.shape(), r);
         return check([&] { return weighted(ops::exp(a), w); }, {a});
       }},
      {"transpose/reshape",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 4), n = dim(r, 1, 4);
         Tensor a = oracle::random_tensor({m, n}, r);
         const Tensor w = oracle::random_tensor({m * n}, r);
         return check([&] { return weighted(ops::reshape(ops::transpose(a), {m * n}), w); }, {a});
       }},
      {"concat/slice",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 4), n = dim(r, 2, 5);
         const std::size_t axis = r.uniform_index(2);
         Tensor a = oracle::random_tensor({m, n}, r), b = oracle::random_tensor({m, n}, r);
         const Tensor c = ops::concat(a, b, axis);
         const std::size_t len = c.dim(axis), lo = r.uniform_index(len - 1), hi = lo + 1 + r.uniform_index(len - lo - 1);
         const Tensor w = oracle::random_tensor(ops::slice(c, axis, lo, hi).shape(), r);
         return check([&] { return weighted(ops::slice(ops::concat(a, b, axis), axis, lo, hi), w); }, {a, b});
       }},
      {"gather_rows",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 4), n = dim(r, 1, 4), k = dim(r, 1, 6);
         Tensor a = oracle::random_tensor({m, n}, r);
         std::vector<std::size_t> idx(k);
         for (auto& i : idx) i = r.uniform_index(m);
         const Tensor w = oracle::random_tensor({k, n}, r);
         return check([&] { return weighted(ops::gather_rows(a, idx), w); }, {a});
       }},
      {"softmax_rows",
       [](Rng& r) {
         Tensor a = oracle::random_tensor({dim(r, 1, 4), dim(r, 1, 6)}, r, -2, 2);
         const Tensor w = oracle::random_tensor(a.shape(), r);
         return check([&] { return weighted(ops::softmax_rows(a), w); }, {a});
       }},
      {"layer_norm",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 4), n = dim(r, 2, 6);
         Tensor a = oracle::random_tensor({m, n}, r), g = oracle::random_tensor({n}, r), b = oracle::random_tensor({n}, r);
         const Tensor w = oracle::random_tensor({m, n}, r);
         return check([&] { return weighted(ops::layer_norm(a, g, b), w); }, {a, g, b});
       }},
      {"gelu",
       [](Rng& r) {
         Tensor a = oracle::random_tensor({dim(r, 1, 4), dim(r, 1, 4)}, r, -3, 3);
         const Tensor w = oracle::random_tensor(a.shape(), r);
         return check([&] { return weighted(ops::gelu(a), w); }, {a});
       }},
      {"dropout",
       [](Rng& r) {
         Tensor a = oracle::random_tensor({dim(r, 1, 4), dim(r, 1, 6)}, r);
         const Tensor w = oracle::random_tensor(a.shape(), r);
         const std::uint64_t seed = r.next_u64();
         return check(
             [&] {
               Rng mask(seed);
               return weighted(ops::dropout(a, 0.4, mask, true), w);
             },
             {a});
       }},
      {"reductions",
       [](Rng& r) {
         Tensor a = away_from_zero({dim(r, 1, 4), dim(r, 1, 4)}, r);
         const std::vector<double> cw = [&] {
           std::vector<double> v(a.cols());
           for (auto& x : v) x = r.uniform(0.5, 2.0);
           return v;
         }();
         return check(
             [&] {
               return ops::add(ops::add(ops::sum_abs(a), ops::sum_sq(a)),
                               ops::add(ops::mean(a), ops::col_weighted_sum_sq(a, cw)));
             },
             {a});
       }},
      {"rdft",
       [](Rng& r) {
         const std::size_t m = dim(r, 1, 3), t = dim(r, 1, 12);
         Tensor a = oracle::random_tensor({m, t}, r);
         const Tensor wr = oracle::random_tensor({m, t / 2 + 1}, r), wi = oracle::random_tensor({m, t / 2 + 1}, r);
         return check(
             [&] {
               const auto s = ops::rdft(a);
               return ops::add(weighted(s.re, wr), weighted(s.im, wi));
             },
             {a});
       }},
      {"cross_entropy",
       [](Rng& r) {
         const std::size_t n = dim(r, 1, 4), k = dim(r, 2, 5);
         Tensor a = oracle::random_tensor({n, k}, r, -2, 2);
         std::vector<int> y(n);
         for (auto& v : y) v = static_cast<int>(r.uniform_index(k));
         return check([&] { return ops::softmax_cross_entropy(a, y); }, {a});
       }},
  };
}

}  // namespace grad_cases
