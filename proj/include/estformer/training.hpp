#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "estformer/baselines.hpp"
#include "estformer/data.hpp"
#include "estformer/loss.hpp"
#include "estformer/model.hpp"

namespace estformer {

struct TrainConfig {
  std::size_t batch_size = 36;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.5;
  double dropout = 0.5;
  double eps = 1e-8;
  std::size_t epochs = 1;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;     // 0 disables global-norm clipping
  bool log_wall_time = true;  // false writes 0 in the seconds column

  void validate() const;
};

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.5;
  double eps = 1e-8;

  static AdamWConfig from(const TrainConfig& c) { return {c.lr, c.beta1, c.beta2, c.weight_decay, c.eps}; }
};

struct AdamWState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;
};

// One AdamW update from the gradients stored on each tensor:
//   p <- p (1 - lr wd)            (skipped when weight_decay is false)
//   p <- p - lr m_hat / (sqrt(v_hat) + eps)
void adamw_step(std::vector<NamedTensor>& params, AdamWState& state, const AdamWConfig& cfg);

// Scales gradients so their global L2 norm is at most `max_norm`; returns the
// norm before scaling.
double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm);

// Maps the visible rows of a window to a reconstruction of the masked rows.
using Reconstructor = std::function<Tensor(const Tensor& x_lr)>;

Reconstructor model_reconstructor(const ESTformerParams& p, const MaskSpec& spec);
Reconstructor an_reconstructor(const MaskSpec& spec, std::size_t k = 4);
Reconstructor si_reconstructor(const MaskSpec& spec, const SplineConfig& cfg = {});

struct SampleMetrics {
  double nmse = 0.0;
  double snr_db = 0.0;
  double pcc = 0.0;  // NaN when a masked row is constant
};

struct EvalSummary {
  std::vector<SampleMetrics> samples;
  double nmse_mean = 0.0, nmse_std = 0.0;
  double snr_mean = 0.0, snr_std = 0.0;
  double pcc_mean = 0.0, pcc_std = 0.0;
  std::size_t pcc_defined = 0;
};

// Per-window metrics on the masked rows, then mean and population std. A
// perfect window has SNR +inf; PCC statistics use only windows where it is
// defined.
EvalSummary evaluate(const Reconstructor& recon, const EEGDataset& ds, const MaskSpec& spec);

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown train;  // means over the epoch's steps
  double test_nmse = 0.0, test_snr = 0.0, test_pcc = 0.0;
  double seconds = 0.0;
};

std::string train_log_csv_header();
std::string to_csv(const EpochLog& row);
void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path);

struct TrainResult {
  std::vector<EpochLog> log;
  ESTformerParams best;  // by test NMSE, or the final params without a test set
  std::size_t best_epoch = 0;
};

// Loss of one window: auto-weighted FMSE + MAE over the masked rows.
WeightedLoss window_loss(const ESTformerParams& p, const Tensor& window, const MaskSpec& spec,
                         const ForwardContext& ctx);

// Trains `params` in place with shuffled mini-batches. Each epoch is logged
// and evaluated on `test` when it is non-empty; `on_epoch` runs after each
// epoch (used for streaming logs).
TrainResult train(ESTformerParams& params, const MaskSpec& spec, const EEGDataset& train_set,
                  const std::optional<EEGDataset>& test_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Runs `steps` optimizer steps on one fixed batch (no shuffling) and returns
// the batch loss before every step plus the final loss.
std::vector<double> overfit_batch(ESTformerParams& params, const MaskSpec& spec, const EEGDataset& batch,
                                  const TrainConfig& cfg, std::size_t steps);

}  // namespace estformer
