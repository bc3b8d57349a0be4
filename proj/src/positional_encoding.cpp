#include "estformer/positional_encoding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace estformer {

std::vector<double> sincos_encode(double pos, std::size_t d_model) {
  if (d_model < 2 || d_model % 2 != 0) {
    throw std::invalid_argument("sincos_encode: d_model must be even and >= 2, got " + std::to_string(d_model));
  }
  std::vector<double> out(d_model);
  for (std::size_t i = 0; i < d_model / 2; ++i) {
    const double freq = std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
    out[2 * i] = std::sin(pos / freq);
    out[2 * i + 1] = std::cos(pos / freq);
  }
  return out;
}

PEMatrix pe_1d(std::size_t length, std::size_t d_model) {
  if (length == 0) throw std::invalid_argument("pe_1d: length must be positive");
  Tensor t({length, d_model});
  for (std::size_t p = 0; p < length; ++p) {
    const auto row = sincos_encode(static_cast<double>(p), d_model);
    std::copy(row.begin(), row.end(), t.mutable_data() + p * d_model);
  }
  return {t, PEKind::Temporal1D};
}

std::vector<std::array<double, 3>> normalize_coords(const std::vector<std::array<double, 3>>& points) {
  if (points.empty()) throw std::invalid_argument("normalize_coords: empty montage");
  std::vector<std::array<double, 3>> out(points.size());
  for (std::size_t axis = 0; axis < 3; ++axis) {
    double lo = points[0][axis], hi = points[0][axis];
    for (const auto& p : points) {
      lo = std::min(lo, p[axis]);
      hi = std::max(hi, p[axis]);
    }
    for (std::size_t i = 0; i < points.size(); ++i) {
      out[i][axis] = hi > lo ? (points[i][axis] - lo) / (hi - lo) : 0.5;
    }
  }
  return out;
}

std::vector<std::array<double, 3>> normalize_coords(const ElectrodeMontage& m) {
  std::vector<std::array<double, 3>> pts;
  pts.reserve(m.size());
  for (const auto& e : m.electrodes()) pts.push_back({e.x, e.y, e.z});
  return normalize_coords(pts);
}

PEMatrix pe_3d(const std::vector<std::array<double, 3>>& normalized, std::size_t d_model, double position_scale) {
  if (d_model == 0 || d_model % 6 != 0) {
    throw std::invalid_argument("pe_3d: d_model must be a positive multiple of 6, got " + std::to_string(d_model));
  }
  const std::size_t part = d_model / 3;
  Tensor t({normalized.size(), d_model});
  for (std::size_t c = 0; c < normalized.size(); ++c) {
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const auto enc = sincos_encode(normalized[c][axis] * position_scale, part);
      std::copy(enc.begin(), enc.end(), t.mutable_data() + c * d_model + axis * part);
    }
  }
  return {t, PEKind::Spatial3D};
}

PEMatrix pe_3d(const ElectrodeMontage& m, std::size_t d_model, double position_scale) {
  return pe_3d(normalize_coords(m), d_model, position_scale);
}

}  // namespace estformer
