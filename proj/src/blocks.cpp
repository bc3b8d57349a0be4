#include "estformer/blocks.hpp"

#include <stdexcept>

#include "estformer/ops.hpp"

namespace estformer {

LayerNormParams init_layer_norm(std::size_t width) { return {Tensor({width}, 1.0), Tensor({width}, 0.0)}; }

LinearParams init_linear(std::size_t in, std::size_t out, Rng& rng, double init_std) {
  Tensor w({in, out});
  for (double& v : w.mutable_values()) v = rng.truncated_normal(init_std);
  return {w, Tensor({out}, 0.0)};
}

MLPParams init_mlp(std::size_t width, std::size_t ratio, Rng& rng, double init_std) {
  if (ratio == 0) throw std::invalid_argument("MLP expansion ratio must be positive");
  MLPParams p;
  p.fc1 = init_linear(width, ratio * width, rng, init_std);
  p.fc2 = init_linear(ratio * width, width, rng, init_std);
  return p;
}

TokenBlockParams init_token_block(std::size_t width, std::size_t heads, std::size_t mlp_ratio, Rng& rng,
                                  double init_std) {
  TokenBlockParams p;
  p.ln1 = init_layer_norm(width);
  p.msa = init_msa(width, heads, rng, init_std);
  p.ln2 = init_layer_norm(width);
  p.mlp = init_mlp(width, mlp_ratio, rng, init_std);
  return p;
}

CABParams init_cab(std::size_t n_tokens, std::size_t width, std::size_t mlp_ratio, Rng& rng, double init_std) {
  CABParams p;
  p.tsab = init_token_block(n_tokens, kTsaHeads, mlp_ratio, rng, init_std);
  p.ssab = init_token_block(width, kSsaHeads, mlp_ratio, rng, init_std);
  return p;
}

Tensor layer_norm(const LayerNormParams& p, const Tensor& z, double eps) {
  return ops::layer_norm(z, p.gain, p.bias, eps);
}

Tensor linear(const LinearParams& p, const Tensor& x) { return ops::linear(x, p.w, p.b); }

Tensor mlp_forward(const MLPParams& p, const Tensor& z, const ForwardContext& ctx) {
  if (z.rank() != 2 || z.cols() != p.fc1.in()) {
    throw ShapeError("mlp_forward: input " + shape_str(z.shape()) + " does not match width " +
                     std::to_string(p.fc1.in()));
  }
  Tensor h = ops::gelu(linear(p.fc1, z));
  if (ctx.training && ctx.dropout > 0.0) {
    if (ctx.rng == nullptr) throw std::invalid_argument("mlp_forward: dropout in training mode needs an rng");
    h = ops::dropout(h, ctx.dropout, *ctx.rng, true);
  }
  return linear(p.fc2, h);
}

Tensor token_block_forward(const TokenBlockParams& p, const Tensor& z, const ForwardContext& ctx) {
  if (z.rank() != 2 || z.cols() != p.width()) {
    throw ShapeError("block input " + shape_str(z.shape()) + " does not match feature width " +
                     std::to_string(p.width()));
  }
  const Tensor h = ops::add(msa_forward(p.msa, layer_norm(p.ln1, z, ctx.ln_eps)), z);
  return ops::add(mlp_forward(p.mlp, layer_norm(p.ln2, h, ctx.ln_eps), ctx), h);
}

Tensor ssab_forward(const SSABParams& p, const Tensor& z, const ForwardContext& ctx) {
  return token_block_forward(p, z, ctx);
}

Tensor tsab_forward(const TSABParams& p, const Tensor& z, const ForwardContext& ctx) {
  return ops::transpose(token_block_forward(p, ops::transpose(z), ctx));
}

Tensor cab_forward(const CABParams& p, const Tensor& z, const ForwardContext& ctx, bool outer_residual) {
  const Tensor out = ssab_forward(p.ssab, tsab_forward(p.tsab, z, ctx), ctx);
  return outer_residual ? ops::add(out, z) : out;
}

}  // namespace estformer
