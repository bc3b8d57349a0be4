#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "estformer/baselines.hpp"
#include "estformer/data.hpp"
#include "estformer/downstream.hpp"
#include "estformer/model.hpp"
#include "estformer/training.hpp"

namespace estformer {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Everything a run needs besides file paths, read from `key = value` lines.
struct RunConfig {
  // data
  std::string montage = "std32";
  double sample_rate = 128.0;
  double window_seconds = 2.0;
  std::size_t n_windows = 500;
  double train_frac = 0.8;
  std::uint64_t split_seed = 1;
  SyntheticConfig synth;

  // mask
  int scale = 4;
  int mask_case = 1;

  Hyperparams model;
  std::uint64_t init_seed = 1;
  TrainConfig train;

  // baselines
  std::size_t an_k = 4;
  SplineConfig spline;

  // downstream
  std::string feature = "psd";
  Mlp2Config classifier;

  void validate() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
// Every key with its current value; parse_run_config(format_run_config(c))
// reproduces c exactly.
std::string format_run_config(const RunConfig& c);
void save_run_config(const RunConfig& c, const std::filesystem::path& path);
std::vector<std::string> run_config_keys();

}  // namespace estformer
