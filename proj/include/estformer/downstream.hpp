#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "estformer/data.hpp"
#include "estformer/tensor.hpp"

namespace estformer {

enum class FeatureKind { PSD, DE };
std::string to_string(FeatureKind k);
FeatureKind parse_feature_kind(const std::string& s);

struct FeatureMatrix {
  Tensor values;  // [N x C x B]
  std::vector<std::string> band_names;
  FeatureKind kind = FeatureKind::PSD;

  std::size_t n() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }
  std::size_t bands() const { return values.dim(2); }
  Tensor sample(std::size_t i) const;  // [C x B]
};

class FeatureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kFeatureEps = 1e-10;

// One-sided periodogram of a real signal, bins k = 0..T/2 at k*fs/T Hz,
// normalized so the bins sum to mean(x^2).
std::vector<double> periodogram(std::span<const double> x);
double bin_frequency(std::size_t k, std::size_t t, double sample_rate);

// log(mean periodogram power within the band + eps)
FeatureMatrix psd_features(const EEGDataset& ds, const std::vector<FrequencyBand>& bands);
// 0.5 ln(2 pi e sigma^2 + eps), sigma^2 = summed periodogram power within the band
FeatureMatrix de_features(const EEGDataset& ds, const std::vector<FrequencyBand>& bands);
FeatureMatrix extract_features(FeatureKind kind, const EEGDataset& ds, const std::vector<FrequencyBand>& bands);
// Keeps one band column.
FeatureMatrix select_band(const FeatureMatrix& f, std::size_t band);

struct Mlp2Config {
  std::size_t hidden_band = 32;     // block 1: bands -> hidden_band
  std::size_t hidden_channel = 64;  // block 2: channels -> hidden_channel
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double weight_decay = 0.01;
  double train_frac = 0.8;
  std::uint64_t seed = 1;

  void validate() const;
};

// Band-axis linear + GELU, channel-axis linear + GELU, flatten, linear to
// class logits. Features are z-scored with training-set statistics.
// Returns test accuracy.
double mlp2_train_eval(const FeatureMatrix& train_x, const std::vector<int>& train_y, const FeatureMatrix& test_x,
                       const std::vector<int>& test_y, const Mlp2Config& cfg);
// Seeded split by cfg.train_frac, then as above.
double mlp2_train_eval(const FeatureMatrix& features, const std::vector<int>& labels, const Mlp2Config& cfg);

// Low-resolution copy holding only the visible channels.
EEGDataset lr_dataset(const EEGDataset& gt, const MaskSpec& spec);
// Full-montage dataset whose masked rows come from `recon` and visible rows
// are copied from the input.
EEGDataset sr_dataset(const EEGDataset& gt, const MaskSpec& spec,
                      const std::function<Tensor(const Tensor& x_lr)>& recon);

struct ArmsRow {
  std::string arm;                // LR, SR or GT
  std::vector<double> accuracy;   // one per band, then all bands together
};

struct ArmsTable {
  std::vector<std::string> columns;  // band names then "all"
  std::vector<ArmsRow> rows;
  std::string to_csv() const;
};

// Accuracy of the classifier on LR, SR and GT features for each band alone and
// all bands together. The same window split is used for every arm.
ArmsTable compare_arms(const EEGDataset& gt, const MaskSpec& spec,
                       const std::function<Tensor(const Tensor& x_lr)>& recon, FeatureKind kind,
                       const Mlp2Config& cfg, const std::vector<FrequencyBand>& bands = standard_bands());

}  // namespace estformer
