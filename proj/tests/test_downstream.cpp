#include <doctest.h>

#include <cmath>
#include <numbers>

#include "estformer/baselines.hpp"
#include "estformer/downstream.hpp"
#include "estformer/training.hpp"
#include "support.hpp"

using namespace estformer;

namespace {

const ElectrodeMontage& one_channel() {
  static const ElectrodeMontage m({{"Cz", 0, 0, 1}});
  return m;
}

Tensor tone(double amp, double hz, double phase, std::size_t t, double fs) {
  Tensor w({1, t});
  for (std::size_t i = 0; i < t; ++i)
    w.mutable_data()[i] = amp * std::sin(2 * std::numbers::pi * hz * static_cast<double>(i) / fs + phase);
  return w;
}

EEGDataset single(const Tensor& w, double fs) { return make_dataset(one_channel(), fs, {w}); }

double feature(const FeatureMatrix& f, std::size_t band) { return f.values[band]; }

}  // namespace

TEST_CASE("periodogram bins sum to the mean square") {
  Rng rng(1);
  for (std::size_t t : {1, 2, 7, 64, 101}) {
    std::vector<double> x(t);
    double ms = 0.0;
    for (double& v : x) v = rng.normal(), ms += v * v / static_cast<double>(t);
    const auto p = periodogram(x);
    CHECK(p.size() == t / 2 + 1);
    double s = 0.0;
    for (double v : p) s += v;
    CHECK(s == doctest::Approx(ms).epsilon(1e-12));
  }
  CHECK(bin_frequency(10, 128, 128.0) == 10.0);
  CHECK_THROWS_AS(periodogram({}), FeatureError);
}

TEST_CASE("a 10 Hz tone lands in the alpha band") {
  const EEGDataset ds = single(tone(1.0, 10.0, 0.3, 256, 128.0), 128.0);
  for (FeatureKind kind : {FeatureKind::PSD, FeatureKind::DE}) {
    const FeatureMatrix f = extract_features(kind, ds, standard_bands());
    CHECK(f.values.shape() == Shape{1, 1, 5});
    CHECK(f.band_names[2] == "alpha");
    for (std::size_t b : {0, 1, 3, 4}) CHECK(feature(f, 2) > feature(f, b));
    const FeatureMatrix alpha = select_band(f, 2);
    CHECK(alpha.bands() == 1);
    CHECK(alpha.values[0] == feature(f, 2));
  }
}

TEST_CASE("zero signal hits the epsilon guard") {
  const EEGDataset ds = single(Tensor({1, 128}), 128.0);
  const FeatureMatrix p = psd_features(ds, standard_bands());
  for (double v : p.values.values()) CHECK(v == doctest::Approx(std::log(kFeatureEps)));
  const FeatureMatrix d = de_features(ds, standard_bands());
  for (double v : d.values.values()) {
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(0.5 * std::log(kFeatureEps)));
  }
}

TEST_CASE("differential entropy closed forms") {
  // A bin-centred tone of amplitude a has band power a^2 / 2.
  const double fs = 128.0;
  const EEGDataset unit = single(tone(std::sqrt(2.0), 10.0, 0.0, 128, fs), fs);
  CHECK(feature(de_features(unit, standard_bands()), 2) ==
        doctest::Approx(0.5 * std::log(2 * std::numbers::pi * std::numbers::e)).epsilon(1e-6));
  CHECK(feature(de_features(unit, standard_bands()), 2) == doctest::Approx(1.4189).epsilon(1e-4));
  const double a0 = std::sqrt(2.0 / (2 * std::numbers::pi * std::numbers::e));
  const EEGDataset zero_de = single(tone(a0, 10.0, 0.0, 128, fs), fs);
  CHECK(std::abs(feature(de_features(zero_de, standard_bands()), 2)) < 1e-6);

  Rng rng(2);
  Tensor w({1, 256});
  for (double& v : w.mutable_values()) v = rng.normal();
  Tensor w2 = w.clone();
  for (double& v : w2.mutable_values()) v *= 2.0;
  const FeatureMatrix a = de_features(single(w, fs), standard_bands());
  const FeatureMatrix b = de_features(single(w2, fs), standard_bands());
  for (std::size_t k = 0; k < 5; ++k) CHECK(b.values[k] - a.values[k] == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("white noise has a flat power spectrum across bands") {
  Rng rng(3);
  const double fs = 128.0;
  std::vector<Tensor> windows;
  for (int i = 0; i < 100; ++i) {
    Tensor w({1, 256});
    for (double& v : w.mutable_values()) v = rng.normal();
    windows.push_back(w);
  }
  const FeatureMatrix f = psd_features(make_dataset(one_channel(), fs, windows), standard_bands());
  std::vector<double> mean(5, 0.0);
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t b = 0; b < 5; ++b) mean[b] += std::exp(f.values[i * 5 + b]) / 100.0;
  const double avg = (mean[0] + mean[1] + mean[2] + mean[3] + mean[4]) / 5.0;
  for (double m : mean) CHECK(std::abs(m / avg - 1.0) < 0.2);
}

TEST_CASE("features are stable under time shifts of a tone") {
  const double fs = 128.0;
  for (double hz : {6.0, 10.5, 21.0}) {
    const FeatureMatrix ref = psd_features(single(tone(1.0, hz, 0.0, 256, fs), fs), standard_bands());
    for (double phase : {0.7, 1.9, 4.0}) {
      const FeatureMatrix f = psd_features(single(tone(1.0, hz, phase, 256, fs), fs), standard_bands());
      // The band holding the tone keeps its power within 5%.
      std::size_t top = 0;
      for (std::size_t b = 1; b < 5; ++b)
        if (ref.values[b] > ref.values[top]) top = b;
      CHECK(std::abs(std::exp(f.values[top] - ref.values[top]) - 1.0) < 0.05);
    }
  }
}

TEST_CASE("bands above Nyquist are rejected") {
  const EEGDataset ds = single(Tensor({1, 64}), 64.0);
  CHECK_THROWS_AS(psd_features(ds, standard_bands()), FeatureError);
  CHECK_THROWS_AS(psd_features(ds, {}), FeatureError);
  CHECK(parse_feature_kind("de") == FeatureKind::DE);
  CHECK_THROWS(parse_feature_kind("fft"));
}

TEST_CASE("the classifier separates separable features and stays at chance on shuffled labels") {
  Rng rng(4);
  const std::size_t n = 150, c = 4, b = 5;
  Tensor values({n, c, b});
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<int>(i % 3);
    for (std::size_t j = 0; j < c * b; ++j)
      values.mutable_data()[i * c * b + j] = rng.normal(0.0, 0.3) + (j % 3 == static_cast<std::size_t>(labels[i]) ? 1.5 : 0.0);
  }
  const FeatureMatrix f{values, {"delta", "theta", "alpha", "beta", "gamma"}, FeatureKind::PSD};
  Mlp2Config cfg;
  cfg.epochs = 60;
  CHECK(mlp2_train_eval(f, labels, cfg) >= 0.95);
  CHECK(mlp2_train_eval(f, labels, cfg) == mlp2_train_eval(f, labels, cfg));

  double acc = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng shuffle(seed);
    std::vector<int> y = labels;
    shuffle.shuffle(std::span<int>(y));
    cfg.seed = seed;
    acc += mlp2_train_eval(f, y, cfg) / 5.0;
  }
  CHECK(std::abs(acc - 1.0 / 3.0) < 0.10);
  CHECK_THROWS(mlp2_train_eval(f, std::vector<int>(n, 0), cfg));
  CHECK_THROWS(mlp2_train_eval(f, std::vector<int>(n - 1, 0), cfg));
}

TEST_CASE("compare_arms shapes and the GT arm definition") {
  SyntheticConfig sc;
  sc.n_classes = 3;
  const EEGDataset ds = synth_generate(sc, builtin_montage("std16"), 128.0, 1.0, 60);
  const MaskSpec spec = mask_case(ds.montage, 4, 1);
  Mlp2Config cfg;
  cfg.epochs = 20;
  const EEGDataset lr = lr_dataset(ds, spec);
  CHECK(lr.n_channels() == spec.c_lr());
  CHECK(psd_features(lr, standard_bands()).channels() == 4);
  const EEGDataset sr = sr_dataset(ds, spec, an_reconstructor(spec));
  CHECK(sr.n_channels() == 16);
  CHECK(oracle::max_abs_diff(sr.window_rows(3, spec.visible), ds.window_rows(3, spec.visible)) == 0.0);

  const ArmsTable t = compare_arms(ds, spec, an_reconstructor(spec), FeatureKind::DE, cfg);
  REQUIRE(t.rows.size() == 3);
  CHECK(t.rows[0].arm == "LR");
  CHECK(t.rows[2].arm == "GT");
  CHECK(t.columns.back() == "all");
  CHECK(t.rows[2].accuracy.back() == mlp2_train_eval(de_features(ds, standard_bands()), ds.labels, cfg));
  CHECK(t.rows[0].accuracy.back() == mlp2_train_eval(de_features(lr, standard_bands()), ds.labels, cfg));
  CHECK(t.to_csv().rfind("arm,delta,theta,alpha,beta,gamma,all\nLR,", 0) == 0);
  CHECK_THROWS(compare_arms(synth_generate(SyntheticConfig{}, ds.montage, 128.0, 1.0, 4), spec,
                            an_reconstructor(spec), FeatureKind::PSD, cfg));
}
