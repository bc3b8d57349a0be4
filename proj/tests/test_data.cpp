#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <set>

#include "estformer/data.hpp"
#include "estformer/downstream.hpp"
#include "estformer/loss.hpp"
#include "support.hpp"

using namespace estformer;

namespace {

double row_corr(const Tensor& w, std::size_t a, std::size_t b) {
  const std::size_t t = w.cols();
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < t; ++i) ma += w.at(a, i) / t, mb += w.at(b, i) / t;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    sab += (w.at(a, i) - ma) * (w.at(b, i) - mb);
    saa += (w.at(a, i) - ma) * (w.at(a, i) - ma);
    sbb += (w.at(b, i) - mb) * (w.at(b, i) - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::uint32_t u32_at(const std::string& s, std::size_t off) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(s[off])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[off + 3])) << 24;
}

float f32_at(const std::string& s, std::size_t off) {
  const std::uint32_t bits = u32_at(s, off);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

TEST_CASE("standard bands") {
  const auto& b = standard_bands();
  REQUIRE(b.size() == 5);
  CHECK(b[0].name == "delta");
  CHECK(b[0].lo_hz == 0.5);
  CHECK(b[2].lo_hz == 8.0);
  CHECK(b[2].hi_hz == 13.0);
  CHECK(b[4].hi_hz == 50.0);
}

TEST_CASE("synthetic generation is seeded and shaped") {
  SyntheticConfig cfg;
  cfg.n_classes = 3;
  const ElectrodeMontage m = builtin_montage("std16");
  const EEGDataset a = synth_generate(cfg, m, 100.0, 1.0, 6);
  const EEGDataset b = synth_generate(cfg, m, 100.0, 1.0, 6);
  CHECK(a.windows.shape() == Shape{6, 16, 100});
  CHECK(encode_dataset(a) == encode_dataset(b));
  CHECK(a.labels.size() == 6);
  for (int l : a.labels) CHECK((l >= 0 && l < 3));
  cfg.seed = 2;
  CHECK(encode_dataset(synth_generate(cfg, m, 100.0, 1.0, 6)) != encode_dataset(a));
  // Per-channel standard deviation is close to one.
  const Tensor w = a.window(0);
  for (std::size_t c = 0; c < 16; ++c) {
    double s = 0.0, mean = 0.0;
    for (std::size_t t = 0; t < 100; ++t) mean += w.at(c, t) / 100.0;
    for (std::size_t t = 0; t < 100; ++t) s += (w.at(c, t) - mean) * (w.at(c, t) - mean) / 100.0;
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(0.5));
  }
  SyntheticConfig bad;
  bad.noise_std = -1.0;
  CHECK_THROWS(synth_generate(bad, m, 100.0, 1.0, 2));
  CHECK_THROWS(synth_generate(cfg, m, 100.0, 1.0, 0));
}

TEST_CASE("one noiseless source gives rank-one channels") {
  SyntheticConfig cfg;
  cfg.n_sources = 1;
  cfg.noise_std = 0.0;
  const EEGDataset ds = synth_generate(cfg, builtin_montage("std16"), 128.0, 1.0, 2);
  const Tensor w = ds.window(1);
  for (std::size_t a = 0; a < 16; ++a)
    for (std::size_t b = a + 1; b < 16; ++b) CHECK(std::abs(row_corr(w, a, b)) == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("nearby electrodes are more correlated than distant ones") {
  const ElectrodeMontage m = builtin_montage("std32");
  const EEGDataset ds = synth_generate(SyntheticConfig{}, m, 128.0, 2.0, 20);
  std::vector<std::tuple<double, std::size_t, std::size_t>> pairs;
  for (std::size_t a = 0; a < m.size(); ++a)
    for (std::size_t b = a + 1; b < m.size(); ++b) pairs.emplace_back(m.angular_distance(a, b), a, b);
  std::sort(pairs.begin(), pairs.end());
  double near = 0.0, far = 0.0;
  for (std::size_t w = 0; w < ds.n_windows(); ++w) {
    const Tensor x = ds.window(w);
    for (std::size_t k = 0; k < 5; ++k) {
      near += row_corr(x, std::get<1>(pairs[k]), std::get<2>(pairs[k]));
      far += row_corr(x, std::get<1>(pairs[pairs.size() - 1 - k]), std::get<2>(pairs[pairs.size() - 1 - k]));
    }
  }
  CHECK(near / 100.0 > far / 100.0 + 0.2);
}

TEST_CASE("mask cases partition every bundled montage") {
  for (const auto& name : builtin_montage_names()) {
    const ElectrodeMontage m = builtin_montage(name);
    for (int scale : {2, 4, 8}) {
      if (visible_count(m.size(), scale) < 2) {
        CHECK_THROWS(mask_cases(m, scale));
        continue;
      }
      const auto cases = mask_cases(m, scale);
      REQUIRE(cases.size() == 4);
      const double every_k = min_pairwise_distance(m, cases[0].visible);
      for (const MaskSpec& s : cases) {
        CHECK(s.c_lr() == static_cast<std::size_t>(std::llround(static_cast<double>(m.size()) / scale)));
        CHECK(s.c_lr() + s.c_mask() == m.size());
        std::vector<std::size_t> all(s.visible);
        all.insert(all.end(), s.masked.begin(), s.masked.end());
        std::sort(all.begin(), all.end());
        for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);
        CHECK(std::is_sorted(s.visible.begin(), s.visible.end()));
        CHECK(s.scale_factor == scale);
        if (s.case_id > 1) CHECK(min_pairwise_distance(m, s.visible) >= every_k);
      }
    }
  }
  const MaskSpec c1 = mask_case(builtin_montage("mi64"), 4, 1);
  std::vector<std::size_t> expect;
  for (std::size_t i = 0; i < 64; i += 4) expect.push_back(i);
  CHECK(c1.visible == expect);
  const MaskSpec half = mask_case(builtin_montage("mi64"), 2, 3);
  CHECK(half.c_lr() == 32);
  CHECK(half.c_mask() == 32);
  CHECK_THROWS(mask_case(builtin_montage("mi64"), 3, 1));
  CHECK_THROWS(mask_case(builtin_montage("mi64"), 2, 5));
  CHECK(visible_count(62, 4) == 16);  // round(15.5)
}

TEST_CASE("split is seeded, disjoint and exhaustive") {
  const auto [a, b] = split_indices(10, 0.8, 3);
  CHECK(a.size() == 8);
  CHECK(b.size() == 2);
  std::set<std::size_t> all(a.begin(), a.end());
  all.insert(b.begin(), b.end());
  CHECK(all.size() == 10);
  CHECK(split_indices(10, 0.8, 3) == std::pair{a, b});
  CHECK(split_indices(10, 0.8, 4) != std::pair{a, b});
  CHECK_THROWS(split_indices(1, 0.8, 1));

  const EEGDataset ds = synth_generate(SyntheticConfig{}, builtin_montage("toy6"), 32.0, 0.5, 10);
  const auto [tr, te] = split(ds, 0.8, 3);
  CHECK(tr.n_windows() == 8);
  std::multiset<double> orig, parts;
  for (std::size_t w = 0; w < 10; ++w) orig.insert(ds.window(w)[0]);
  for (std::size_t w = 0; w < 8; ++w) parts.insert(tr.window(w)[0]);
  for (std::size_t w = 0; w < 2; ++w) parts.insert(te.window(w)[0]);
  CHECK(orig == parts);
}

TEST_CASE("container layout matches a manual byte walk") {
  std::vector<Tensor> windows{Tensor({2, 3}, {0.5, -1.0, 2.0, 0.25, 3.0, -4.0}), Tensor({2, 3}, {1, 2, 3, 4, 5, 6})};
  const ElectrodeMontage m({{"Cz", 0, 0, 1}, {"T8", 1, 0, 0}});
  const EEGDataset ds = make_dataset(m, 250.0, windows, {2, 7});
  const std::string bytes = encode_dataset(ds);
  const std::size_t header = 4 + 4 * 4 + 4 + 1, electrode = 16 + 12;
  CHECK(bytes.size() == header + 2 * electrode + 12 * 4 + 2 * 2);
  CHECK(bytes.substr(0, 4) == "ESR1");
  CHECK(u32_at(bytes, 4) == 1);
  CHECK(u32_at(bytes, 8) == 2);
  CHECK(u32_at(bytes, 12) == 2);
  CHECK(u32_at(bytes, 16) == 3);
  CHECK(f32_at(bytes, 20) == 250.0f);
  CHECK(bytes[24] == 1);
  CHECK(bytes.substr(25, 3) == std::string("Cz\0", 3));
  for (std::size_t i = 27; i < 41; ++i) CHECK(bytes[i] == '\0');
  CHECK(f32_at(bytes, 41 + 8) == 1.0f);       // Cz z
  CHECK(bytes.substr(53, 2) == "T8");
  CHECK(f32_at(bytes, 53 + 16) == 1.0f);      // T8 x
  const std::size_t data = header + 2 * electrode;
  CHECK(f32_at(bytes, data) == 0.5f);
  CHECK(f32_at(bytes, data + 5 * 4) == -4.0f);
  CHECK(f32_at(bytes, data + 6 * 4) == 1.0f);
  const std::size_t labels = data + 12 * 4;
  CHECK(static_cast<unsigned char>(bytes[labels]) == 2);
  CHECK(static_cast<unsigned char>(bytes[labels + 2]) == 7);
}

TEST_CASE("container round trip and distinct errors") {
  SyntheticConfig cfg;
  cfg.n_classes = 2;
  const EEGDataset ds = synth_generate(cfg, builtin_montage("std16"), 64.0, 0.5, 3);
  const std::string bytes = encode_dataset(ds);
  const EEGDataset back = decode_dataset(bytes);
  CHECK(encode_dataset(back) == bytes);
  CHECK(back.labels == ds.labels);
  CHECK(oracle::max_abs_diff(back.windows, ds.windows) == 0.0);
  CHECK(back.montage[3].name == ds.montage[3].name);

  const auto path = std::filesystem::temp_directory_path() / "estformer_data_test.esr1";
  save_dataset(ds, path);
  CHECK(encode_dataset(load_dataset(path)) == bytes);
  std::filesystem::remove(path);

  std::string bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_dataset(bad), DatasetMagicError);
  bad = bytes;
  bad[4] = 2;
  CHECK_THROWS_AS(decode_dataset(bad), DatasetVersionError);
  CHECK_THROWS_AS(decode_dataset(bytes.substr(0, bytes.size() - 1)), DatasetTruncatedError);
  CHECK_THROWS_AS(decode_dataset(bytes.substr(0, 10)), DatasetTruncatedError);
  CHECK_THROWS_AS(decode_dataset(bytes + "x"), DatasetError);
  CHECK_THROWS_AS(load_dataset("/nonexistent/x.esr1"), IoError);
}

TEST_CASE("synthetic labels are learnable by a centroid classifier") {
  SyntheticConfig cfg;
  cfg.n_classes = 3;
  const EEGDataset ds = synth_generate(cfg, builtin_montage("std16"), 128.0, 2.0, 90);
  const FeatureMatrix f = psd_features(ds, standard_bands());
  const auto [tr, te] = split_indices(ds.n_windows(), 0.7, 1);
  const std::size_t dim = f.channels() * f.bands();
  std::vector<std::vector<double>> centroid(3, std::vector<double>(dim, 0.0));
  std::vector<double> count(3, 0.0);
  for (std::size_t i : tr) {
    const Tensor s = f.sample(i);
    for (std::size_t j = 0; j < dim; ++j) centroid[ds.labels[i]][j] += s[j];
    count[ds.labels[i]] += 1.0;
  }
  for (int k = 0; k < 3; ++k)
    for (double& v : centroid[k]) v /= count[k];
  std::size_t correct = 0;
  for (std::size_t i : te) {
    const Tensor s = f.sample(i);
    int best = 0;
    double best_d = 1e300;
    for (int k = 0; k < 3; ++k) {
      double d = 0.0;
      for (std::size_t j = 0; j < dim; ++j) d += (s[j] - centroid[k][j]) * (s[j] - centroid[k][j]);
      if (d < best_d) best_d = d, best = k;
    }
    correct += best == ds.labels[i];
  }
  CHECK(static_cast<double>(correct) / te.size() > 1.0 / 3.0 + 0.15);
}
