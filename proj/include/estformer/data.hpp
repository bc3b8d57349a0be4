#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "estformer/model.hpp"
#include "estformer/montage.hpp"
#include "estformer/rng.hpp"
#include "estformer/tensor.hpp"

namespace estformer {

struct FrequencyBand {
  std::string name;
  double lo_hz;  // inclusive
  double hi_hz;  // exclusive
};

// delta [0.5,4), theta [4,8), alpha [8,13), beta [13,30), gamma [30,50)
const std::vector<FrequencyBand>& standard_bands();

// Windowed multichannel recordings. `windows` is [N x C x T], window-major
// then channel-major, and always holds float32-representable values so the
// container round trip is exact.
struct EEGDataset {
  ElectrodeMontage montage;
  double sample_rate = 0.0;
  Tensor windows;
  std::vector<int> labels;  // empty or one per window

  std::size_t n_windows() const { return windows.dim(0); }
  std::size_t n_channels() const { return windows.dim(1); }
  std::size_t n_samples() const { return windows.dim(2); }
  double window_seconds() const { return static_cast<double>(n_samples()) / sample_rate; }
  bool has_labels() const { return !labels.empty(); }

  Tensor window(std::size_t i) const;  // [C x T]
  Tensor window_rows(std::size_t i, const std::vector<std::size_t>& channels) const;
  EEGDataset subset(const std::vector<std::size_t>& indices) const;
  void validate() const;
};

// Builds a dataset from [C x T] windows, rounding values to float32.
EEGDataset make_dataset(ElectrodeMontage montage, double sample_rate, const std::vector<Tensor>& windows,
                        std::vector<int> labels = {});

struct SyntheticConfig {
  std::size_t n_sources = 6;
  // Per-band amplitude range of each source's sinusoid, in band order.
  std::array<std::pair<double, double>, 5> band_amplitude{
      {{1.0, 2.0}, {0.6, 1.2}, {0.8, 1.6}, {0.3, 0.8}, {0.1, 0.4}}};
  double noise_std = 0.1;    // relative to the unit-variance source mixture
  double noise_ar = 0.9;     // AR(1) coefficient of the per-channel noise
  std::size_t n_classes = 0; // 0 = unlabeled
  double class_scale = 0.5;  // class amplitude profiles are base * (1 + scale * U[-1,1])
  double amplitude_jitter = 0.2;
  double kappa = 3.0;        // spatial decay of source gain per radian
  std::uint64_t seed = 1;

  void validate() const;
};

EEGDataset synth_generate(const SyntheticConfig& cfg, const ElectrodeMontage& montage, double sample_rate,
                          double window_seconds, std::size_t n_windows);

// Four deterministic visible-channel selections for a scale factor in {2,4,8}:
// case 1 takes every k-th electrode, cases 2-4 are greedy max-min-distance
// selections started from seeded electrodes.
std::vector<MaskSpec> mask_cases(const ElectrodeMontage& montage, int scale_factor);
MaskSpec mask_case(const ElectrodeMontage& montage, int scale_factor, int case_id);
std::size_t visible_count(std::size_t c_sr, int scale_factor);
// Smallest pairwise great-circle distance among the given electrodes.
double min_pairwise_distance(const ElectrodeMontage& montage, const std::vector<std::size_t>& idx);

// Seeded shuffle of 0..n-1 cut at round(train_frac * n), clamped to [1, n-1].
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, double train_frac,
                                                                            std::uint64_t seed);
std::pair<EEGDataset, EEGDataset> split(const EEGDataset& ds, double train_frac, std::uint64_t seed);

// ---- .esr1 container --------------------------------------------------------

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class DatasetMagicError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class DatasetVersionError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};
class DatasetTruncatedError : public DatasetError {
 public:
  using DatasetError::DatasetError;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

std::string encode_dataset(const EEGDataset& ds);
EEGDataset decode_dataset(const std::string& bytes);
void save_dataset(const EEGDataset& ds, const std::filesystem::path& path);
EEGDataset load_dataset(const std::filesystem::path& path);

}  // namespace estformer
