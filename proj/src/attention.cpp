#include "estformer/attention.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "estformer/ops.hpp"

namespace estformer {

void MSAParams::validate() const {
  const std::size_t d = wq.rows();
  if (num_heads == 0 || d % num_heads != 0) {
    throw ShapeError("MSA width " + std::to_string(d) + " is not divisible by " + std::to_string(num_heads) +
                     " heads");
  }
  for (const Tensor* w : {&wq, &wk, &wv, &wo}) {
    if (w->rank() != 2 || w->rows() != d || w->cols() != d) {
      throw ShapeError("MSA weights must all be " + std::to_string(d) + "x" + std::to_string(d));
    }
  }
}

MSAParams init_msa(std::size_t d_feature, std::size_t num_heads, Rng& rng, double init_std) {
  auto w = [&] {
    Tensor t({d_feature, d_feature});
    for (double& v : t.mutable_values()) v = rng.truncated_normal(init_std);
    return t;
  };
  MSAParams p{num_heads, w(), w(), w(), w()};
  p.validate();
  return p;
}

Tensor msa_forward(const MSAParams& p, const Tensor& z) {
  if (z.rank() != 2 || z.cols() != p.d_feature()) {
    throw ShapeError("msa_forward: input " + shape_str(z.shape()) + " does not match feature width " +
                     std::to_string(p.d_feature()));
  }
  const Tensor q = ops::matmul(z, p.wq);
  const Tensor k = ops::matmul(z, p.wk);
  const Tensor v = ops::matmul(z, p.wv);
  const std::size_t hw = p.head_width();
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hw));
  Tensor heads;
  for (std::size_t h = 0; h < p.num_heads; ++h) {
    Tensor qh = q, kh = k, vh = v;
    if (p.num_heads > 1) {
      qh = ops::slice(q, 1, h * hw, (h + 1) * hw);
      kh = ops::slice(k, 1, h * hw, (h + 1) * hw);
      vh = ops::slice(v, 1, h * hw, (h + 1) * hw);
    }
    const Tensor attn = ops::softmax_rows(ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_sqrt));
    const Tensor out = ops::matmul(attn, vh);
    heads = heads.defined() ? ops::concat(heads, out, 1) : out;
  }
  return ops::matmul(heads, p.wo);
}

Tensor ssa(const MSAParams& p, const Tensor& z) { return msa_forward(p, z); }

Tensor tsa(const MSAParams& p, const Tensor& z) { return ops::transpose(msa_forward(p, ops::transpose(z))); }

namespace {
void require_positive(std::initializer_list<std::int64_t> xs) {
  for (auto x : xs) {
    if (x <= 0) throw std::invalid_argument("FLOPs arguments must be positive integers");
  }
}
}  // namespace

std::uint64_t flops_ssa(std::int64_t d_s, std::int64_t d_t) {
  require_positive({d_s, d_t});
  const auto s = static_cast<std::uint64_t>(d_s), t = static_cast<std::uint64_t>(d_t);
  return 4 * s * t * t + 2 * s * s * t;
}

std::uint64_t flops_tsa(std::int64_t d_s, std::int64_t d_t) {
  require_positive({d_s, d_t});
  const auto s = static_cast<std::uint64_t>(d_s), t = static_cast<std::uint64_t>(d_t);
  return 4 * t * s * s + 2 * t * t * s;
}

std::uint64_t flops_conv2d(std::int64_t c_in, std::int64_t c_out, std::int64_t k_s, std::int64_t k_t,
                           std::int64_t d_s, std::int64_t d_t) {
  require_positive({c_in, c_out, k_s, k_t, d_s, d_t});
  return static_cast<std::uint64_t>(c_in) * static_cast<std::uint64_t>(c_out) * static_cast<std::uint64_t>(k_s) *
         static_cast<std::uint64_t>(k_t) * static_cast<std::uint64_t>(d_s) * static_cast<std::uint64_t>(d_t);
}

FlopsReport flops_report(FlopsKind kind, std::int64_t d_s, std::int64_t d_t, std::int64_t c_in,
                         std::int64_t c_out, std::int64_t k_s, std::int64_t k_t) {
  FlopsReport r{kind, d_s, d_t, 0, 0, 0, 0, 0};
  switch (kind) {
    case FlopsKind::SSA: r.flops = flops_ssa(d_s, d_t); break;
    case FlopsKind::TSA: r.flops = flops_tsa(d_s, d_t); break;
    case FlopsKind::Conv2D:
      r.k_s = k_s;
      r.k_t = k_t;
      r.c_in = c_in;
      r.c_out = c_out;
      r.flops = flops_conv2d(c_in, c_out, k_s, k_t, d_s, d_t);
      break;
  }
  return r;
}

std::string to_string(FlopsKind kind) {
  switch (kind) {
    case FlopsKind::SSA: return "SSA";
    case FlopsKind::TSA: return "TSA";
    case FlopsKind::Conv2D: return "Conv2D";
  }
  return "?";
}

std::string flops_csv_header() { return "op,d_s,d_t,c_in,c_out,k_s,k_t,flops,gflops"; }

std::string to_csv(const FlopsReport& r) {
  std::ostringstream os;
  os << to_string(r.kind) << ',' << r.d_s << ',' << r.d_t << ',' << r.c_in << ',' << r.c_out << ',' << r.k_s
     << ',' << r.k_t << ',' << r.flops << ',';
  os.setf(std::ios::fixed);
  os.precision(2);
  os << static_cast<double>(r.flops) / 1e9;
  return os.str();
}

}  // namespace estformer
