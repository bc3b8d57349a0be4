#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "estformer/montage.hpp"
#include "estformer/tensor.hpp"

namespace estformer {

enum class PEKind { Temporal1D, Spatial3D };

struct PEMatrix {
  Tensor values;  // [positions x d_model]
  PEKind kind = PEKind::Temporal1D;
};

// Electrode coordinates are mapped to [0, 1] per axis and multiplied by this
// before encoding, so that neighbouring electrodes get distinguishable phases.
inline constexpr double kDefaultPositionScale = 100.0;

// Interleaved pairs: [2i] = sin(pos / 10000^(2i/d)), [2i+1] = cos(...).
std::vector<double> sincos_encode(double pos, std::size_t d_model);

PEMatrix pe_1d(std::size_t length, std::size_t d_model);

// Per-axis affine map of electrode coordinates to [0, 1]; a degenerate axis
// maps to 0.5.
std::vector<std::array<double, 3>> normalize_coords(const ElectrodeMontage& m);
std::vector<std::array<double, 3>> normalize_coords(const std::vector<std::array<double, 3>>& points);

// Row c = concat(enc(x_c), enc(y_c), enc(z_c)), each enc of width d_model/3,
// using normalized coordinates times `position_scale`.
PEMatrix pe_3d(const ElectrodeMontage& m, std::size_t d_model, double position_scale = kDefaultPositionScale);
PEMatrix pe_3d(const std::vector<std::array<double, 3>>& normalized, std::size_t d_model,
               double position_scale = kDefaultPositionScale);

}  // namespace estformer
