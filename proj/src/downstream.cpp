#include "estformer/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "estformer/ops.hpp"
#include "estformer/training.hpp"

namespace estformer {

std::string to_string(FeatureKind k) { return k == FeatureKind::PSD ? "psd" : "de"; }

FeatureKind parse_feature_kind(const std::string& s) {
  if (s == "psd" || s == "PSD") return FeatureKind::PSD;
  if (s == "de" || s == "DE") return FeatureKind::DE;
  throw FeatureError("unknown feature kind '" + s + "' (expected psd or de)");
}

Tensor FeatureMatrix::sample(std::size_t i) const {
  const std::size_t c = channels(), b = bands();
  Tensor out({c, b});
  std::copy_n(values.data() + i * c * b, c * b, out.mutable_data());
  return out;
}

std::vector<double> periodogram(std::span<const double> x) {
  const std::size_t t = x.size();
  if (t == 0) throw FeatureError("periodogram of an empty signal");
  const auto spec = ops::rdft(Tensor({t}, std::vector<double>(x.begin(), x.end())));
  const auto w = ops::rdft_weights(t);
  std::vector<double> p(w.size());
  const double norm = static_cast<double>(t) * static_cast<double>(t);
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = w[k] * (spec.re[k] * spec.re[k] + spec.im[k] * spec.im[k]) / norm;
  }
  return p;
}

double bin_frequency(std::size_t k, std::size_t t, double sample_rate) {
  return static_cast<double>(k) * sample_rate / static_cast<double>(t);
}

namespace {

// Bin ranges [first, last) per band.
std::vector<std::pair<std::size_t, std::size_t>> band_bins(const std::vector<FrequencyBand>& bands, std::size_t t,
                                                           double fs) {
  if (bands.empty()) throw FeatureError("no frequency bands requested");
  const std::size_t n_bins = t / 2 + 1;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& b : bands) {
    if (!(b.lo_hz >= 0.0 && b.hi_hz > b.lo_hz)) throw FeatureError("band '" + b.name + "' has an empty range");
    if (b.hi_hz > fs / 2.0) {
      throw FeatureError("band '" + b.name + "' extends past the Nyquist frequency " + std::to_string(fs / 2.0));
    }
    std::size_t first = n_bins, last = 0;
    for (std::size_t k = 0; k < n_bins; ++k) {
      const double f = bin_frequency(k, t, fs);
      if (f >= b.lo_hz && f < b.hi_hz) {
        first = std::min(first, k);
        last = k + 1;
      }
    }
    if (last == 0) throw FeatureError("band '" + b.name + "' contains no frequency bins at this resolution");
    out.emplace_back(first, last);
  }
  return out;
}

template <typename F>
FeatureMatrix band_features(const EEGDataset& ds, const std::vector<FrequencyBand>& bands, FeatureKind kind,
                            F&& reduce) {
  const std::size_t n = ds.n_windows(), c = ds.n_channels(), t = ds.n_samples();
  const auto bins = band_bins(bands, t, ds.sample_rate);
  FeatureMatrix fm{Tensor({n, c, bands.size()}), {}, kind};
  for (const auto& b : bands) fm.band_names.push_back(b.name);
  const auto w = ops::rdft_weights(t);
  const double norm = static_cast<double>(t) * static_cast<double>(t);
  double* out = fm.values.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto spec = ops::rdft(ds.window(i));
    const std::size_t nb = w.size();
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t bi = 0; bi < bins.size(); ++bi) {
        double total = 0.0;
        for (std::size_t k = bins[bi].first; k < bins[bi].second; ++k) {
          const double re = spec.re[ch * nb + k], im = spec.im[ch * nb + k];
          total += w[k] * (re * re + im * im) / norm;
        }
        out[(i * c + ch) * bins.size() + bi] = reduce(total, bins[bi].second - bins[bi].first);
      }
    }
  }
  return fm;
}

}  // namespace

FeatureMatrix psd_features(const EEGDataset& ds, const std::vector<FrequencyBand>& bands) {
  return band_features(ds, bands, FeatureKind::PSD, [](double total, std::size_t count) {
    return std::log(total / static_cast<double>(count) + kFeatureEps);
  });
}

FeatureMatrix de_features(const EEGDataset& ds, const std::vector<FrequencyBand>& bands) {
  return band_features(ds, bands, FeatureKind::DE, [](double total, std::size_t) {
    return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * total + kFeatureEps);
  });
}

FeatureMatrix extract_features(FeatureKind kind, const EEGDataset& ds, const std::vector<FrequencyBand>& bands) {
  return kind == FeatureKind::PSD ? psd_features(ds, bands) : de_features(ds, bands);
}

FeatureMatrix select_band(const FeatureMatrix& f, std::size_t band) {
  if (band >= f.bands()) throw FeatureError("band index out of range");
  const std::size_t n = f.n(), c = f.channels(), b = f.bands();
  FeatureMatrix out{Tensor({n, c, 1}), {f.band_names[band]}, f.kind};
  for (std::size_t i = 0; i < n * c; ++i) out.values.mutable_data()[i] = f.values[i * b + band];
  return out;
}

void Mlp2Config::validate() const {
  if (hidden_band == 0 || hidden_channel == 0) throw std::invalid_argument("classifier widths must be positive");
  if (epochs == 0 || batch_size == 0) throw std::invalid_argument("classifier epochs and batch size must be positive");
  if (!(lr > 0.0)) throw std::invalid_argument("classifier lr must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("classifier weight decay must be >= 0");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw std::invalid_argument("classifier train_frac must be in (0, 1)");
}

namespace {

struct Mlp2 {
  Tensor w1, b1, w2, b2, w3, b3;

  std::vector<NamedTensor> params() const {
    return {{"w1", w1}, {"b1", b1, false}, {"w2", w2}, {"b2", b2, false}, {"w3", w3}, {"b3", b3, false}};
  }

  Tensor logits(const Tensor& x) const {
    const Tensor h1 = ops::gelu(ops::linear(x, w1, b1));                     // [C x H1]
    const Tensor h2 = ops::gelu(ops::linear(ops::transpose(h1), w2, b2));  // [H1 x H2]
    return ops::linear(ops::reshape(h2, {1, h2.size()}), w3, b3);            // [1 x K]
  }
};

Tensor glorot(std::size_t in, std::size_t out, Rng& rng) {
  Tensor w({in, out});
  const double sd = std::sqrt(2.0 / static_cast<double>(in + out));
  for (auto& v : w.mutable_values()) v = rng.normal(0.0, sd);
  return w;
}

struct ZScore {
  std::vector<double> mean, inv_sd;
};

ZScore fit_zscore(const FeatureMatrix& f) {
  const std::size_t n = f.n(), d = f.channels() * f.bands();
  ZScore z{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) z.mean[j] += f.values[i * d + j] / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double e = f.values[i * d + j] - z.mean[j];
      z.inv_sd[j] += e * e / static_cast<double>(n);
    }
  }
  for (auto& v : z.inv_sd) v = v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0;
  return z;
}

std::vector<Tensor> standardized(const FeatureMatrix& f, const ZScore& z) {
  std::vector<Tensor> out;
  const std::size_t d = f.channels() * f.bands();
  for (std::size_t i = 0; i < f.n(); ++i) {
    Tensor s = f.sample(i);
    for (std::size_t j = 0; j < d; ++j) s.mutable_data()[j] = (s[j] - z.mean[j]) * z.inv_sd[j];
    out.push_back(s);
  }
  return out;
}

std::size_t argmax(const Tensor& row) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k)
    if (row[k] > row[best]) best = k;
  return best;
}

}  // namespace

double mlp2_train_eval(const FeatureMatrix& train_x, const std::vector<int>& train_y, const FeatureMatrix& test_x,
                       const std::vector<int>& test_y, const Mlp2Config& cfg) {
  cfg.validate();
  if (train_y.size() != train_x.n() || test_y.size() != test_x.n()) {
    throw FeatureError("label count does not match feature count");
  }
  if (train_x.channels() != test_x.channels() || train_x.bands() != test_x.bands()) {
    throw ShapeError("train and test features differ in shape");
  }
  if (test_y.empty()) throw FeatureError("classifier needs a non-empty test set");
  int max_label = 0;
  for (int y : train_y) {
    if (y < 0) throw FeatureError("labels must be non-negative");
    max_label = std::max(max_label, y);
  }
  for (int y : test_y) {
    if (y < 0) throw FeatureError("labels must be non-negative");
    max_label = std::max(max_label, y);
  }
  if (std::all_of(train_y.begin(), train_y.end(), [&](int y) { return y == train_y.front(); })) {
    throw FeatureError("classifier needs at least two classes in the training labels");
  }
  const auto k = static_cast<std::size_t>(max_label) + 1;
  const std::size_t c = train_x.channels(), b = train_x.bands();

  const ZScore z = fit_zscore(train_x);
  const auto xs = standardized(train_x, z);
  const auto xt = standardized(test_x, z);

  Rng rng(cfg.seed, "mlp2");
  Mlp2 net{glorot(b, cfg.hidden_band, rng),
           Tensor({cfg.hidden_band}),
           glorot(c, cfg.hidden_channel, rng),
           Tensor({cfg.hidden_channel}),
           glorot(cfg.hidden_band * cfg.hidden_channel, k, rng),
           Tensor({k})};
  auto named = net.params();
  for (auto& p : named) p.tensor.set_requires_grad(true);
  AdamWState state;
  const AdamWConfig opt{cfg.lr, 0.9, 0.999, cfg.weight_decay, 1e-8};

  std::vector<std::size_t> order(xs.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      for (auto& p : named) p.tensor.zero_grad();
      for (std::size_t j = begin; j < end; ++j) {
        Tape tape;
        TapeScope scope(tape);
        const int label = train_y[order[j]];
        const Tensor loss = ops::softmax_cross_entropy(net.logits(xs[order[j]]), std::span<const int>(&label, 1));
        tape.backward(loss, 1.0 / static_cast<double>(end - begin));
      }
      adamw_step(named, state, opt);
    }
  }

  std::size_t correct = 0;
  for (std::size_t i = 0; i < xt.size(); ++i) {
    if (static_cast<int>(argmax(net.logits(xt[i]))) == test_y[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xt.size());
}

namespace {

FeatureMatrix take(const FeatureMatrix& f, const std::vector<std::size_t>& idx) {
  const std::size_t d = f.channels() * f.bands();
  FeatureMatrix out{Tensor({idx.size(), f.channels(), f.bands()}), f.band_names, f.kind};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    std::copy_n(f.values.data() + idx[r] * d, d, out.values.mutable_data() + r * d);
  }
  return out;
}

std::vector<int> take(const std::vector<int>& y, const std::vector<std::size_t>& idx) {
  std::vector<int> out;
  for (auto i : idx) out.push_back(y.at(i));
  return out;
}

}  // namespace

double mlp2_train_eval(const FeatureMatrix& features, const std::vector<int>& labels, const Mlp2Config& cfg) {
  if (labels.size() != features.n()) throw FeatureError("label count does not match feature count");
  const auto [tr, te] = split_indices(features.n(), cfg.train_frac, cfg.seed);
  return mlp2_train_eval(take(features, tr), take(labels, tr), take(features, te), take(labels, te), cfg);
}

EEGDataset lr_dataset(const EEGDataset& gt, const MaskSpec& spec) {
  if (gt.n_channels() != spec.c_sr()) throw ShapeError("dataset montage does not match mask spec");
  std::vector<Electrode> es;
  for (auto i : spec.visible) es.push_back(spec.montage[i]);
  std::vector<Tensor> windows;
  for (std::size_t i = 0; i < gt.n_windows(); ++i) windows.push_back(gt.window_rows(i, spec.visible));
  return make_dataset(ElectrodeMontage(std::move(es)), gt.sample_rate, windows, gt.labels);
}

EEGDataset sr_dataset(const EEGDataset& gt, const MaskSpec& spec,
                      const std::function<Tensor(const Tensor& x_lr)>& recon) {
  if (gt.n_channels() != spec.c_sr()) throw ShapeError("dataset montage does not match mask spec");
  std::vector<Tensor> windows;
  for (std::size_t i = 0; i < gt.n_windows(); ++i) {
    const Tensor x_lr = gt.window_rows(i, spec.visible);
    windows.push_back(merge_channels(x_lr, recon(x_lr), spec));
  }
  return make_dataset(gt.montage, gt.sample_rate, windows, gt.labels);
}

std::string ArmsTable::to_csv() const {
  std::ostringstream os;
  os << "arm";
  for (const auto& c : columns) os << ',' << c;
  os << '\n';
  os.precision(6);
  for (const auto& r : rows) {
    os << r.arm;
    for (double a : r.accuracy) os << ',' << a;
    os << '\n';
  }
  return os.str();
}

ArmsTable compare_arms(const EEGDataset& gt, const MaskSpec& spec,
                       const std::function<Tensor(const Tensor& x_lr)>& recon, FeatureKind kind,
                       const Mlp2Config& cfg, const std::vector<FrequencyBand>& bands) {
  if (!gt.has_labels()) throw FeatureError("compare_arms needs a labeled dataset");
  const auto [tr, te] = split_indices(gt.n_windows(), cfg.train_frac, cfg.seed);
  const auto ytr = take(gt.labels, tr);
  const auto yte = take(gt.labels, te);

  ArmsTable table;
  for (const auto& b : bands) table.columns.push_back(b.name);
  table.columns.push_back("all");

  const std::vector<std::pair<std::string, EEGDataset>> arms = {
      {"LR", lr_dataset(gt, spec)}, {"SR", sr_dataset(gt, spec, recon)}, {"GT", gt}};
  for (const auto& [name, ds] : arms) {
    const FeatureMatrix f = extract_features(kind, ds, bands);
    ArmsRow row{name, {}};
    for (std::size_t b = 0; b <= bands.size(); ++b) {
      const FeatureMatrix fb = b < bands.size() ? select_band(f, b) : f;
      row.accuracy.push_back(mlp2_train_eval(take(fb, tr), ytr, take(fb, te), yte, cfg));
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace estformer
