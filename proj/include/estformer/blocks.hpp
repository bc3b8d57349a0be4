#pragma once

#include <cstddef>

#include "estformer/attention.hpp"
#include "estformer/rng.hpp"
#include "estformer/tensor.hpp"

namespace estformer {

// Runtime switches shared by every block in one forward pass.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when training with dropout > 0
  double ln_eps = 1e-5;
};

struct LayerNormParams {
  Tensor gain, bias;
};

struct LinearParams {
  Tensor w;  // [in x out]
  Tensor b;  // [out]
  std::size_t in() const { return w.rows(); }
  std::size_t out() const { return w.cols(); }
};

struct MLPParams {
  LinearParams fc1;  // d -> r_mlp * d
  LinearParams fc2;  // r_mlp * d -> d
};

// Pre-norm attention + MLP block over row tokens:
//   h = attn(LN(z)) + z;  out = MLP(LN(h)) + h
struct TokenBlockParams {
  LayerNormParams ln1;
  MSAParams msa;
  LayerNormParams ln2;
  MLPParams mlp;
  std::size_t width() const { return msa.d_feature(); }
};

// Space-wise block: channels are tokens.
using SSABParams = TokenBlockParams;
// Time-wise block: the same block applied to the transposed input.
using TSABParams = TokenBlockParams;

struct CABParams {
  TSABParams tsab;  // feature width = token count seen by the SSAB
  SSABParams ssab;  // feature width = token count seen by the TSAB
};

LayerNormParams init_layer_norm(std::size_t width);
LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng, double init_std = 0.02);
MLPParams init_mlp(std::size_t width, std::size_t ratio, Rng& rng, double init_std = 0.02);
TokenBlockParams init_token_block(std::size_t width, std::size_t heads, std::size_t mlp_ratio, Rng& rng,
                                  double init_std = 0.02);
// `n_tokens` x `width` is the shape the CAB will see: the SSAB works on
// `width`-wide channel tokens and the TSAB on `n_tokens`-wide feature tokens.
CABParams init_cab(std::size_t n_tokens, std::size_t width, std::size_t mlp_ratio, Rng& rng,
                   double init_std = 0.02);

Tensor layer_norm(const LayerNormParams& p, const Tensor& z, double eps);
Tensor linear(const LinearParams& p, const Tensor& x);

// linear -> GELU -> dropout -> linear
Tensor mlp_forward(const MLPParams& p, const Tensor& z, const ForwardContext& ctx);
Tensor token_block_forward(const TokenBlockParams& p, const Tensor& z, const ForwardContext& ctx);
Tensor ssab_forward(const SSABParams& p, const Tensor& z, const ForwardContext& ctx);
Tensor tsab_forward(const TSABParams& p, const Tensor& z, const ForwardContext& ctx);
// TSAB then SSAB; with `outer_residual` the CAB input is added once more.
Tensor cab_forward(const CABParams& p, const Tensor& z, const ForwardContext& ctx, bool outer_residual = true);

}  // namespace estformer
