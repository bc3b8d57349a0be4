#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "estformer/blocks.hpp"
#include "estformer/montage.hpp"
#include "estformer/positional_encoding.hpp"
#include "estformer/rng.hpp"
#include "estformer/tensor.hpp"

namespace estformer {

// Partition of a montage into visible (low-resolution input) and masked
// channels. Both index lists are ascending.
struct MaskSpec {
  ElectrodeMontage montage;
  std::vector<std::size_t> visible;
  std::vector<std::size_t> masked;
  int scale_factor = 1;
  int case_id = 0;  // 1..4 for catalog cases, 0 for custom

  std::size_t c_sr() const { return montage.size(); }
  std::size_t c_lr() const { return visible.size(); }
  std::size_t c_mask() const { return masked.size(); }
  void validate() const;

  // Builds a spec whose masked set is the complement of `visible`.
  static MaskSpec from_visible(ElectrodeMontage montage, std::vector<std::size_t> visible, int scale_factor,
                               int case_id = 0);
};

struct Hyperparams {
  double alpha_s = 0.60;  // SIM token width as a fraction of T
  double alpha_t = 0.75;  // TRM token width as a fraction of C_SR
  std::size_t r_mlp = 4;
  std::size_t l_s = 1;  // CABs per SIM stage (encoder and decoder each)
  std::size_t l_t = 1;  // TSABs per TRM stage
  double dropout = 0.5;
  double ln_eps = 1e-5;
  double position_scale = kDefaultPositionScale;
  double init_std = 0.02;
  bool cab_outer_residual = true;

  void validate() const;
};

// round(alpha_s * T) rounded up to a multiple of 6.
std::size_t sim_width(std::size_t t, double alpha_s);
// round(alpha_t * C) rounded up to an even number.
std::size_t trm_width(std::size_t c, double alpha_t);

struct SIMParams {
  LinearParams channel_embed;  // T -> D_SIM
  Tensor mask_token;           // [1 x D_SIM], shared by all masked positions
  std::vector<CABParams> encoder;
  std::vector<CABParams> decoder;
  LinearParams out_proj;  // D_SIM -> T
  PEMatrix pe3d;          // [C_SR x D_SIM], fixed
};

struct TRMParams {
  LinearParams time_embed;  // C_SR -> D_TRM
  std::vector<TSABParams> stage1;
  std::vector<TSABParams> stage2;
  LinearParams out_proj;  // D_TRM -> C_SR
  PEMatrix pe1d;          // [T x D_TRM], fixed
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
  bool weight_decay = true;
};

struct ESTformerParams {
  Hyperparams hp;
  std::size_t c_sr = 0, c_lr = 0, t = 0;
  std::size_t d_sim = 0, d_trm = 0;
  SIMParams sim;
  TRMParams trm;
  Tensor log_var_fmse;  // s1, sigma1^2 = exp(s1)
  Tensor log_var_mae;   // s2, sigma2^2 = exp(s2)

  // Every learnable tensor in declaration order.
  std::vector<NamedTensor> parameters() const;
  std::size_t parameter_count() const;
  void set_requires_grad(bool on);
  void zero_grad();
  ESTformerParams clone() const;
};

// Closed-form learnable scalar count for the given shape and hyperparameters.
std::size_t expected_parameter_count(std::size_t c_sr, std::size_t c_lr, std::size_t t, const Hyperparams& hp);

ESTformerParams init_params(const MaskSpec& spec, std::size_t t, const Hyperparams& hp, Rng& rng);

ForwardContext eval_context(const Hyperparams& hp);
ForwardContext train_context(const Hyperparams& hp, Rng& rng);

// x_lr rows follow spec.visible; returns the reconstruction of the masked rows.
Tensor sim_forward(const ESTformerParams& p, const Tensor& x_lr, const MaskSpec& spec, const ForwardContext& ctx);
Tensor trm_forward(const ESTformerParams& p, const Tensor& x_temp, const ForwardContext& ctx);
// Interleaves visible and masked rows into canonical channel order. An
// undefined `x_mask` is allowed when the spec has no masked channels.
Tensor merge_channels(const Tensor& x_lr, const Tensor& x_mask, const MaskSpec& spec);
Tensor estformer_forward(const ESTformerParams& p, const Tensor& x_lr, const MaskSpec& spec,
                         const ForwardContext& ctx);

// Checkpoint file: "ESTF", u32 version, hyperparameter block, tensor block.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::map<std::string, double> reals;
  std::map<std::string, std::uint32_t> counts;
};

void save_checkpoint(const std::filesystem::path& path, const ESTformerParams& p, const MaskSpec& spec);
std::string encode_checkpoint(const ESTformerParams& p, const MaskSpec& spec);

struct LoadedCheckpoint {
  CheckpointMeta meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
  Hyperparams hp() const;
  int scale_factor() const;
  int mask_case() const;
};

LoadedCheckpoint decode_checkpoint(const std::string& bytes);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);
// Rebuilds parameters for the spec's montage and copies the stored tensors in.
ESTformerParams restore_params(const LoadedCheckpoint& ckpt, const MaskSpec& spec);

}  // namespace estformer
