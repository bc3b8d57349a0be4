#include "estformer/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "binary_io.hpp"

namespace estformer {

const std::vector<FrequencyBand>& standard_bands() {
  static const std::vector<FrequencyBand> bands = {
      {"delta", 0.5, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}, {"gamma", 30.0, 50.0}};
  return bands;
}

// ---- dataset ----------------------------------------------------------------

Tensor EEGDataset::window(std::size_t i) const {
  const std::size_t c = n_channels(), t = n_samples();
  if (i >= n_windows()) throw std::out_of_range("window index " + std::to_string(i) + " out of range");
  Tensor out({c, t});
  std::copy_n(windows.data() + i * c * t, c * t, out.mutable_data());
  return out;
}

Tensor EEGDataset::window_rows(std::size_t i, const std::vector<std::size_t>& channels) const {
  const std::size_t c = n_channels(), t = n_samples();
  if (i >= n_windows()) throw std::out_of_range("window index " + std::to_string(i) + " out of range");
  Tensor out({channels.size(), t});
  for (std::size_t r = 0; r < channels.size(); ++r) {
    if (channels[r] >= c) throw std::out_of_range("channel index out of range");
    std::copy_n(windows.data() + (i * c + channels[r]) * t, t, out.mutable_data() + r * t);
  }
  return out;
}

EEGDataset EEGDataset::subset(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw std::invalid_argument("empty dataset subset");
  const std::size_t c = n_channels(), t = n_samples();
  EEGDataset out{montage, sample_rate, Tensor({indices.size(), c, t}), {}};
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= n_windows()) throw std::out_of_range("subset index out of range");
    std::copy_n(windows.data() + indices[k] * c * t, c * t, out.windows.mutable_data() + k * c * t);
    if (has_labels()) out.labels.push_back(labels[indices[k]]);
  }
  return out;
}

void EEGDataset::validate() const {
  if (!windows.defined() || windows.rank() != 3) throw DatasetError("dataset windows must be [N x C x T]");
  if (n_channels() != montage.size()) throw DatasetError("channel count does not match montage size");
  if (!(sample_rate > 0.0)) throw DatasetError("sample rate must be positive");
  if (has_labels() && labels.size() != n_windows()) throw DatasetError("label count does not match window count");
}

EEGDataset make_dataset(ElectrodeMontage montage, double sample_rate, const std::vector<Tensor>& windows,
                        std::vector<int> labels) {
  if (windows.empty()) throw DatasetError("dataset needs at least one window");
  const std::size_t c = windows[0].rows(), t = windows[0].cols();
  EEGDataset ds{std::move(montage), sample_rate, Tensor({windows.size(), c, t}), std::move(labels)};
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (windows[i].shape() != Shape{c, t}) throw DatasetError("windows must share one shape");
    auto* dst = ds.windows.mutable_data() + i * c * t;
    for (std::size_t j = 0; j < c * t; ++j) dst[j] = static_cast<double>(static_cast<float>(windows[i][j]));
  }
  ds.validate();
  return ds;
}

// ---- synthetic generator ----------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_sources == 0) throw std::invalid_argument("synthetic config needs at least one source");
  for (const auto& [lo, hi] : band_amplitude) {
    if (lo < 0.0 || hi < lo) throw std::invalid_argument("band amplitude ranges must be nonnegative and ordered");
  }
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be nonnegative");
  if (!(noise_ar >= 0.0 && noise_ar < 1.0)) throw std::invalid_argument("noise_ar must lie in [0, 1)");
  if (n_classes == 1) throw std::invalid_argument("n_classes must be 0 (unlabeled) or at least 2");
  if (class_scale < 0.0 || class_scale > 1.0) throw std::invalid_argument("class_scale must lie in [0, 1]");
  if (amplitude_jitter < 0.0 || amplitude_jitter > 1.0) throw std::invalid_argument("amplitude_jitter must lie in [0, 1]");
  if (kappa < 0.0) throw std::invalid_argument("kappa must be nonnegative");
}

EEGDataset synth_generate(const SyntheticConfig& cfg, const ElectrodeMontage& montage, double sample_rate,
                          double window_seconds, std::size_t n_windows) {
  cfg.validate();
  if (montage.empty()) throw std::invalid_argument("synth_generate: empty montage");
  if (!(sample_rate > 0.0) || !(window_seconds > 0.0) || n_windows == 0) {
    throw std::invalid_argument("synth_generate: sample rate, window length and count must be positive");
  }
  const auto t_len = static_cast<std::size_t>(std::llround(sample_rate * window_seconds));
  if (t_len < 2) throw std::invalid_argument("synth_generate: window shorter than two samples");
  const std::size_t c = montage.size(), ns = cfg.n_sources, nb = standard_bands().size();
  Rng rng(cfg.seed, "synth");

  // Fixed source layout: points on the sphere no lower than the electrode cap.
  std::vector<Electrode> sources;
  while (sources.size() < ns) {
    const double z = rng.uniform(-1.0, 1.0), phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    if (z < -0.2) continue;
    const double r = std::sqrt(1.0 - z * z);
    sources.push_back({"src", r * std::cos(phi), r * std::sin(phi), z});
  }
  std::vector<double> gain(ns * c);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t e = 0; e < c; ++e) gain[s * c + e] = std::exp(-cfg.kappa * angular_distance(sources[s], montage[e]));
  }
  std::vector<double> base(ns * nb);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t b = 0; b < nb; ++b) {
      base[s * nb + b] = rng.uniform(cfg.band_amplitude[b].first, cfg.band_amplitude[b].second);
    }
  }
  const std::size_t n_profiles = std::max<std::size_t>(cfg.n_classes, 1);
  std::vector<double> profile(n_profiles * ns * nb, 1.0);
  if (cfg.n_classes > 0) {
    for (double& f : profile) f = 1.0 + cfg.class_scale * rng.uniform(-1.0, 1.0);
  }

  const double nyquist_guard = 0.45 * sample_rate;
  std::vector<double> signal(n_windows * c * t_len, 0.0);
  std::vector<int> labels;
  std::vector<double> src(t_len);
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t cls = cfg.n_classes > 0 ? w % cfg.n_classes : 0;
    if (cfg.n_classes > 0) labels.push_back(static_cast<int>(cls));
    for (std::size_t s = 0; s < ns; ++s) {
      std::fill(src.begin(), src.end(), 0.0);
      for (std::size_t b = 0; b < nb; ++b) {
        const auto& band = standard_bands()[b];
        const double hi = std::min(band.hi_hz, nyquist_guard);
        const double f = band.lo_hz < hi ? rng.uniform(band.lo_hz, hi) : hi;
        const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double amp = base[s * nb + b] * profile[(cls * ns + s) * nb + b] *
                           (1.0 + cfg.amplitude_jitter * rng.uniform(-1.0, 1.0));
        for (std::size_t t = 0; t < t_len; ++t) {
          src[t] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / sample_rate + phase);
        }
      }
      for (std::size_t e = 0; e < c; ++e) {
        double* row = signal.data() + (w * c + e) * t_len;
        const double g = gain[s * c + e];
        for (std::size_t t = 0; t < t_len; ++t) row[t] += g * src[t];
      }
    }
  }

  // Per-channel unit variance for the source mixture, then additive noise.
  std::vector<double> scale(c, 0.0);
  for (std::size_t e = 0; e < c; ++e) {
    double ss = 0.0;
    for (std::size_t w = 0; w < n_windows; ++w) {
      const double* row = signal.data() + (w * c + e) * t_len;
      for (std::size_t t = 0; t < t_len; ++t) ss += row[t] * row[t];
    }
    const double sd = std::sqrt(ss / static_cast<double>(n_windows * t_len));
    scale[e] = sd > 0.0 ? 1.0 / sd : 1.0;
  }
  const double ar = cfg.noise_ar, innov = std::sqrt(1.0 - ar * ar);
  Tensor windows({n_windows, c, t_len});
  double* out = windows.mutable_data();
  for (std::size_t w = 0; w < n_windows; ++w) {
    for (std::size_t e = 0; e < c; ++e) {
      const double* row = signal.data() + (w * c + e) * t_len;
      double* dst = out + (w * c + e) * t_len;
      double noise = rng.normal();
      for (std::size_t t = 0; t < t_len; ++t) {
        if (t > 0) noise = ar * noise + innov * rng.normal();
        const double v = row[t] * scale[e] + cfg.noise_std * noise;
        dst[t] = static_cast<double>(static_cast<float>(v));
      }
    }
  }
  EEGDataset ds{montage, sample_rate, windows, std::move(labels)};
  ds.validate();
  return ds;
}

// ---- mask cases ---------------------------------------------------------------

std::size_t visible_count(std::size_t c_sr, int scale_factor) {
  if (scale_factor != 2 && scale_factor != 4 && scale_factor != 8) {
    throw std::invalid_argument("scale factor must be 2, 4 or 8, got " + std::to_string(scale_factor));
  }
  return static_cast<std::size_t>(std::llround(static_cast<double>(c_sr) / scale_factor));
}

double min_pairwise_distance(const ElectrodeMontage& montage, const std::vector<std::size_t>& idx) {
  double best = std::numbers::pi;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) best = std::min(best, montage.angular_distance(idx[a], idx[b]));
  }
  return best;
}

namespace {

std::vector<std::size_t> every_kth(std::size_t c, std::size_t c_lr, std::size_t k) {
  std::vector<std::size_t> v;
  if ((c_lr - 1) * k < c) {
    for (std::size_t i = 0; i < c_lr; ++i) v.push_back(i * k);
  } else {
    for (std::size_t i = 0; i < c_lr; ++i) v.push_back(i * c / c_lr);
  }
  return v;
}

// Farthest-point selection from a seeded start, then single swaps that raise
// the minimum pairwise distance until none does.
std::vector<std::size_t> spread_selection(const ElectrodeMontage& m, std::size_t c_lr, std::uint64_t seed) {
  const std::size_t c = m.size();
  Rng rng(seed, "mask_case");
  std::vector<std::size_t> chosen{rng.uniform_index(c)};
  std::vector<double> nearest(c);
  for (std::size_t i = 0; i < c; ++i) nearest[i] = m.angular_distance(i, chosen[0]);
  while (chosen.size() < c_lr) {
    std::size_t pick = 0;
    double far = -1.0;
    for (std::size_t i = 0; i < c; ++i) {
      if (nearest[i] > far) {
        far = nearest[i];
        pick = i;
      }
    }
    chosen.push_back(pick);
    for (std::size_t i = 0; i < c; ++i) nearest[i] = std::min(nearest[i], m.angular_distance(i, pick));
  }
  std::vector<char> in(c, 0);
  for (auto i : chosen) in[i] = 1;
  double current = min_pairwise_distance(m, chosen);
  for (bool improved = true; improved;) {
    improved = false;
    for (std::size_t slot = 0; slot < chosen.size() && !improved; ++slot) {
      for (std::size_t cand = 0; cand < c && !improved; ++cand) {
        if (in[cand]) continue;
        auto trial = chosen;
        trial[slot] = cand;
        const double d = min_pairwise_distance(m, trial);
        if (d > current + 1e-12) {
          in[chosen[slot]] = 0;
          in[cand] = 1;
          chosen = std::move(trial);
          current = d;
          improved = true;
        }
      }
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace

MaskSpec mask_case(const ElectrodeMontage& montage, int scale_factor, int case_id) {
  const std::size_t c = montage.size();
  const std::size_t c_lr = visible_count(c, scale_factor);
  if (c_lr < 2 || c_lr >= c) {
    throw std::invalid_argument("montage of " + std::to_string(c) + " electrodes is too small for scale " +
                                std::to_string(scale_factor));
  }
  if (case_id < 1 || case_id > 4) throw std::invalid_argument("mask case must be 1..4");
  std::vector<std::size_t> visible = case_id == 1
                                         ? every_kth(c, c_lr, static_cast<std::size_t>(scale_factor))
                                         : spread_selection(montage, c_lr, static_cast<std::uint64_t>(case_id - 1));
  return MaskSpec::from_visible(montage, std::move(visible), scale_factor, case_id);
}

std::vector<MaskSpec> mask_cases(const ElectrodeMontage& montage, int scale_factor) {
  std::vector<MaskSpec> out;
  for (int k = 1; k <= 4; ++k) out.push_back(mask_case(montage, scale_factor, k));
  return out;
}

// ---- split ------------------------------------------------------------------

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_frac,
                                                                            std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("split needs at least two windows");
  if (!(train_frac > 0.0 && train_frac < 1.0)) throw std::invalid_argument("train_frac must lie in (0, 1)");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed, "split");
  rng.shuffle(std::span<std::size_t>(order));
  auto n_train = static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n - 1);
  std::vector<std::size_t> a(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> b(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {std::move(a), std::move(b)};
}

std::pair<EEGDataset, EEGDataset> split(const EEGDataset& ds, double train_frac, std::uint64_t seed) {
  const auto [a, b] = split_indices(ds.n_windows(), train_frac, seed);
  return {ds.subset(a), ds.subset(b)};
}

// ---- container --------------------------------------------------------------

namespace {
constexpr char kMagic[4] = {'E', 'S', 'R', '1'};
constexpr std::size_t kNameBytes = 16;
}  // namespace

std::string encode_dataset(const EEGDataset& ds) {
  ds.validate();
  detail::ByteWriter w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.n_windows()));
  w.u32(static_cast<std::uint32_t>(ds.n_channels()));
  w.u32(static_cast<std::uint32_t>(ds.n_samples()));
  w.f32(static_cast<float>(ds.sample_rate));
  w.u8(ds.has_labels() ? 1 : 0);
  for (const auto& e : ds.montage.electrodes()) {
    std::string name = e.name.substr(0, kNameBytes);
    name.resize(kNameBytes, '\0');
    w.raw(name);
    w.f32(static_cast<float>(e.x));
    w.f32(static_cast<float>(e.y));
    w.f32(static_cast<float>(e.z));
  }
  for (double v : ds.windows.values()) w.f32(static_cast<float>(v));
  if (ds.has_labels()) {
    for (int l : ds.labels) {
      if (l < 0 || l > 0xFFFF) throw DatasetError("label does not fit in u16");
      w.u16(static_cast<std::uint16_t>(l));
    }
  }
  return w.take();
}

EEGDataset decode_dataset(const std::string& bytes) {
  detail::ByteReader<DatasetTruncatedError> r(bytes);
  if (bytes.size() < 4 || r.raw(4) != std::string_view(kMagic, 4)) {
    throw DatasetMagicError("not an ESR1 dataset (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw DatasetVersionError("unsupported dataset version " + std::to_string(version));
  }
  const std::uint32_t n = r.u32(), c = r.u32(), t = r.u32();
  const float rate = r.f32();
  const std::uint8_t has_labels = r.u8();
  if (n == 0 || c == 0 || t == 0) throw DatasetError("dataset header has a zero dimension");
  std::vector<Electrode> es;
  for (std::uint32_t i = 0; i < c; ++i) {
    std::string name(r.raw(kNameBytes));
    name.erase(name.find_last_not_of('\0') + 1);
    const double x = r.f32(), y = r.f32(), z = r.f32();
    es.push_back({name, x, y, z});
  }
  const std::size_t count = std::size_t{n} * c * t;
  if (r.remaining() / 4 < count) {
    throw DatasetTruncatedError("dataset truncated: expected " + std::to_string(count) + " samples");
  }
  std::vector<double> values(count);
  for (auto& v : values) v = r.f32();
  std::vector<int> labels;
  if (has_labels) {
    for (std::uint32_t i = 0; i < n; ++i) labels.push_back(r.u16());
  }
  if (r.remaining() != 0) throw DatasetError("trailing bytes after dataset payload");
  EEGDataset ds{ElectrodeMontage(std::move(es)), static_cast<double>(rate), Tensor({n, c, t}, std::move(values)),
                std::move(labels)};
  ds.validate();
  return ds;
}

void save_dataset(const EEGDataset& ds, const std::filesystem::path& path) {
  const std::string bytes = encode_dataset(ds);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write dataset " + path.string());
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing dataset " + path.string());
}

EEGDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open dataset " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return decode_dataset(ss.str());
}

}  // namespace estformer
