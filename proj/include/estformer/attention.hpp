#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "estformer/rng.hpp"
#include "estformer/tensor.hpp"

namespace estformer {

// Multi-head self-attention weights. Tokens are rows; all projections are
// square of side d_feature and carry no bias.
struct MSAParams {
  std::size_t num_heads = 1;
  Tensor wq, wk, wv, wo;

  std::size_t d_feature() const { return wq.rows(); }
  std::size_t head_width() const { return d_feature() / num_heads; }
  void validate() const;
};

MSAParams init_msa(std::size_t d_feature, std::size_t num_heads, Rng& rng, double init_std = 0.02);

// softmax(Q_h K_h^T / sqrt(head width)) V_h per head, heads concatenated,
// then the output projection.
Tensor msa_forward(const MSAParams& p, const Tensor& z);

// Space-wise attention: channels are tokens, z is [d_s x d_t].
Tensor ssa(const MSAParams& p, const Tensor& z);
// Time-wise attention: time steps are tokens; runs msa on z^T and transposes back.
Tensor tsa(const MSAParams& p, const Tensor& z);

inline constexpr std::size_t kSsaHeads = 3;
inline constexpr std::size_t kTsaHeads = 1;

// Analytical operation counts for one attention/conv layer.
enum class FlopsKind { SSA, TSA, Conv2D };

struct FlopsReport {
  FlopsKind kind = FlopsKind::SSA;
  std::int64_t d_s = 0, d_t = 0;
  std::int64_t k_s = 0, k_t = 0, c_in = 0, c_out = 0;  // Conv2D only
  std::uint64_t flops = 0;
};

std::uint64_t flops_ssa(std::int64_t d_s, std::int64_t d_t);  // 4 d_s d_t^2 + 2 d_s^2 d_t
std::uint64_t flops_tsa(std::int64_t d_s, std::int64_t d_t);  // 4 d_t d_s^2 + 2 d_t^2 d_s
std::uint64_t flops_conv2d(std::int64_t c_in, std::int64_t c_out, std::int64_t k_s, std::int64_t k_t,
                           std::int64_t d_s, std::int64_t d_t);

FlopsReport flops_report(FlopsKind kind, std::int64_t d_s, std::int64_t d_t, std::int64_t c_in = 0,
                         std::int64_t c_out = 0, std::int64_t k_s = 0, std::int64_t k_t = 0);
std::string to_string(FlopsKind kind);
std::string flops_csv_header();
std::string to_csv(const FlopsReport& r);

}  // namespace estformer
