#include "estformer/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "estformer/ops.hpp"

namespace estformer {

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw std::invalid_argument("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(weight_decay >= 0.0) || lr * weight_decay >= 1.0) {
    throw std::invalid_argument("weight_decay must be >= 0 with lr * weight_decay < 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (!(clip_norm >= 0.0)) throw std::invalid_argument("clip_norm must be >= 0");
}

void adamw_step(std::vector<NamedTensor>& params, AdamWState& state, const AdamWConfig& cfg) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adamw_step: optimizer state does not match parameters");
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& t = params[i].tensor;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != t.size()) throw ShapeError("adamw_step: moment buffer size mismatch for " + params[i].name);
    auto w = t.mutable_values();
    const std::span<const double> g = t.has_grad() ? t.grad() : std::span<const double>{};
    const double decay = params[i].weight_decay ? 1.0 - cfg.lr * cfg.weight_decay : 1.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j];
      w[j] *= decay;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      w[j] -= cfg.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.eps);
    }
  }
}

double clip_grad_norm(const std::vector<NamedTensor>& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      for (double& g : p.tensor.mutable_grad()) g *= s;
    }
  }
  return norm;
}

Reconstructor model_reconstructor(const ESTformerParams& p, const MaskSpec& spec) {
  return [&p, spec](const Tensor& x_lr) {
    const Tensor x_sr = estformer_forward(p, x_lr, spec, eval_context(p.hp));
    return ops::gather_rows(x_sr, spec.masked);
  };
}

Reconstructor an_reconstructor(const MaskSpec& spec, std::size_t k) {
  return [spec, k](const Tensor& x_lr) { return an_interpolate(x_lr, spec, k); };
}

Reconstructor si_reconstructor(const MaskSpec& spec, const SplineConfig& cfg) {
  auto spline = std::make_shared<SphericalSpline>(spec.montage, spec.visible, spec.masked, cfg);
  return [spline](const Tensor& x_lr) { return spline->apply(x_lr); };
}

namespace {

void mean_std(const std::vector<double>& xs, double& mean, double& sd) {
  if (xs.empty()) {
    mean = sd = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (std::isinf(mean)) {
    sd = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  sd = std::sqrt(acc / static_cast<double>(xs.size()));
}

}  // namespace

EvalSummary evaluate(const Reconstructor& recon, const EEGDataset& ds, const MaskSpec& spec) {
  if (ds.montage.size() != spec.c_sr()) throw ShapeError("evaluate: dataset montage does not match mask spec");
  EvalSummary out;
  std::vector<double> nmses, snrs, pccs;
  for (std::size_t i = 0; i < ds.n_windows(); ++i) {
    const Tensor gt = ds.window_rows(i, spec.masked);
    const Tensor sr = recon(ds.window_rows(i, spec.visible));
    SampleMetrics m;
    m.nmse = nmse(gt, sr);
    m.snr_db = m.nmse == 0.0 ? std::numeric_limits<double>::infinity() : snr_from_nmse(m.nmse);
    try {
      m.pcc = pcc(gt, sr);
      pccs.push_back(m.pcc);
    } catch (const MetricError&) {
      m.pcc = std::numeric_limits<double>::quiet_NaN();
    }
    nmses.push_back(m.nmse);
    snrs.push_back(m.snr_db);
    out.samples.push_back(m);
  }
  mean_std(nmses, out.nmse_mean, out.nmse_std);
  mean_std(snrs, out.snr_mean, out.snr_std);
  mean_std(pccs, out.pcc_mean, out.pcc_std);
  out.pcc_defined = pccs.size();
  return out;
}

std::string train_log_csv_header() {
  return "epoch,train_total,train_fmse,train_mae,sigma1_sq,sigma2_sq,test_nmse,test_snr,test_pcc,seconds";
}

std::string to_csv(const EpochLog& r) {
  std::ostringstream os;
  os.precision(17);
  os << r.epoch << ',' << r.train.total << ',' << r.train.fmse << ',' << r.train.mae << ',' << r.train.sigma1_sq
     << ',' << r.train.sigma2_sq << ',' << r.test_nmse << ',' << r.test_snr << ',' << r.test_pcc << ',' << r.seconds;
  return os.str();
}

void write_train_log(const std::vector<EpochLog>& log, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write training log " + path.string());
  f << train_log_csv_header() << '\n';
  for (const auto& r : log) f << to_csv(r) << '\n';
  if (!f) throw IoError("failed writing training log " + path.string());
}

WeightedLoss window_loss(const ESTformerParams& p, const Tensor& window, const MaskSpec& spec,
                         const ForwardContext& ctx) {
  const Tensor x_lr = ops::gather_rows(window, spec.visible);
  const Tensor gt = ops::gather_rows(window, spec.masked);
  const Tensor sr = ops::gather_rows(estformer_forward(p, x_lr, spec, ctx), spec.masked);
  return auto_weighted_loss(fmse(gt, sr), mae_loss(gt, sr), p.log_var_fmse, p.log_var_mae);
}

namespace {

void check_compatible(const ESTformerParams& p, const MaskSpec& spec, const EEGDataset& ds) {
  if (ds.n_windows() == 0) throw std::invalid_argument("training set is empty");
  if (ds.n_channels() != spec.c_sr() || ds.n_channels() != p.c_sr || ds.n_samples() != p.t ||
      spec.c_lr() != p.c_lr) {
    throw ShapeError("dataset [" + std::to_string(ds.n_channels()) + " x " + std::to_string(ds.n_samples()) +
                     "] does not match model [" + std::to_string(p.c_sr) + " x " + std::to_string(p.t) + "]");
  }
}

// Accumulates d(mean batch loss)/d(params) into the parameter grads.
LossBreakdown accumulate_batch(const ESTformerParams& p, const MaskSpec& spec, const EEGDataset& ds,
                               std::span<const std::size_t> batch, const ForwardContext& ctx) {
  LossBreakdown mean;
  const double inv = 1.0 / static_cast<double>(batch.size());
  mean.total = mean.fmse = mean.mae = 0.0;
  for (auto i : batch) {
    Tape tape;
    TapeScope scope(tape);
    const WeightedLoss wl = window_loss(p, ds.window(i), spec, ctx);
    tape.backward(wl.total, inv);
    mean.total += wl.breakdown.total * inv;
    mean.fmse += wl.breakdown.fmse * inv;
    mean.mae += wl.breakdown.mae * inv;
    mean.sigma1_sq = wl.breakdown.sigma1_sq;
    mean.sigma2_sq = wl.breakdown.sigma2_sq;
  }
  return mean;
}

void check_params_finite(const ESTformerParams& p) {
  for (const auto& nt : p.parameters()) check_finite(nt.tensor, nt.name);
}

}  // namespace

TrainResult train(ESTformerParams& params, const MaskSpec& spec, const EEGDataset& train_set,
                  const std::optional<EEGDataset>& test_set, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  spec.validate();
  check_compatible(params, spec, train_set);
  const bool have_test = test_set && test_set->n_windows() > 0;
  if (have_test) check_compatible(params, spec, *test_set);

  params.set_requires_grad(true);
  auto named = params.parameters();
  AdamWState state;
  const AdamWConfig opt = AdamWConfig::from(cfg);
  Rng order_rng(cfg.seed, "shuffle");
  Rng dropout_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL, "dropout");
  const ForwardContext ctx{true, cfg.dropout, &dropout_rng, params.hp.ln_eps};

  TrainResult result;
  double best_nmse = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.n_windows());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    order_rng.shuffle(std::span<std::size_t>(order));

    EpochLog row;
    row.epoch = epoch;
    row.train.total = row.train.fmse = row.train.mae = 0.0;
    std::size_t steps = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      params.zero_grad();
      const LossBreakdown b =
          accumulate_batch(params, spec, train_set, std::span<const std::size_t>(order).subspan(begin, end - begin), ctx);
      if (cfg.clip_norm > 0.0) clip_grad_norm(named, cfg.clip_norm);
      adamw_step(named, state, opt);
      row.train.total += b.total;
      row.train.fmse += b.fmse;
      row.train.mae += b.mae;
      ++steps;
    }
    row.train.total /= static_cast<double>(steps);
    row.train.fmse /= static_cast<double>(steps);
    row.train.mae /= static_cast<double>(steps);
    row.train.sigma1_sq = std::exp(params.log_var_fmse.item());
    row.train.sigma2_sq = std::exp(params.log_var_mae.item());
    check_params_finite(params);

    if (have_test) {
      const EvalSummary s = evaluate(model_reconstructor(params, spec), *test_set, spec);
      row.test_nmse = s.nmse_mean;
      row.test_snr = s.snr_mean;
      row.test_pcc = s.pcc_mean;
      if (s.nmse_mean < best_nmse) {
        best_nmse = s.nmse_mean;
        result.best = params.clone();
        result.best_epoch = epoch;
      }
    } else {
      row.test_nmse = row.test_snr = row.test_pcc = std::numeric_limits<double>::quiet_NaN();
    }
    row.seconds = cfg.log_wall_time
                      ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()
                      : 0.0;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  if (!have_test || result.best_epoch == 0) {
    result.best = params.clone();
    result.best_epoch = cfg.epochs;
  }
  params.zero_grad();
  return result;
}

std::vector<double> overfit_batch(ESTformerParams& params, const MaskSpec& spec, const EEGDataset& batch,
                                  const TrainConfig& cfg, std::size_t steps) {
  cfg.validate();
  check_compatible(params, spec, batch);
  params.set_requires_grad(true);
  auto named = params.parameters();
  AdamWState state;
  const AdamWConfig opt = AdamWConfig::from(cfg);
  Rng dropout_rng(cfg.seed ^ 0x9E3779B97F4A7C15ULL, "dropout");
  const ForwardContext ctx{cfg.dropout > 0.0, cfg.dropout, &dropout_rng, params.hp.ln_eps};
  std::vector<std::size_t> all(batch.n_windows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> losses;
  for (std::size_t s = 0; s < steps; ++s) {
    params.zero_grad();
    losses.push_back(accumulate_batch(params, spec, batch, all, ctx).total);
    if (cfg.clip_norm > 0.0) clip_grad_norm(named, cfg.clip_norm);
    adamw_step(named, state, opt);
  }
  params.zero_grad();
  const ForwardContext eval = eval_context(params.hp);
  double final_loss = 0.0;
  for (auto i : all) final_loss += window_loss(params, batch.window(i), spec, eval).breakdown.total;
  losses.push_back(final_loss / static_cast<double>(all.size()));
  return losses;
}

}  // namespace estformer
