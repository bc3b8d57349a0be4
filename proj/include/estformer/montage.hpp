#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace estformer {

class MontageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Electrode {
  std::string name;
  double x = 0.0;  // +x towards the right ear
  double y = 0.0;  // +y towards the nasion
  double z = 0.0;  // +z towards the vertex
};

// Named electrodes on the unit sphere. The order is the canonical channel
// order of every data array built on the montage.
class ElectrodeMontage {
 public:
  ElectrodeMontage() = default;
  explicit ElectrodeMontage(std::vector<Electrode> electrodes);

  std::size_t size() const { return electrodes_.size(); }
  bool empty() const { return electrodes_.empty(); }
  const Electrode& operator[](std::size_t i) const { return electrodes_[i]; }
  const std::vector<Electrode>& electrodes() const { return electrodes_; }
  std::vector<std::string> names() const;
  // Case-insensitive lookup; throws MontageError when absent.
  std::size_t index_of(std::string_view name) const;

  // Great-circle distance in radians between electrodes i and j.
  double angular_distance(std::size_t i, std::size_t j) const;

 private:
  std::vector<Electrode> electrodes_;
};

double angular_distance(const Electrode& a, const Electrode& b);

// Idealised spherical position of a 10-10 label (e.g. "Fz", "CP3", "T9").
Electrode standard_position(std::string_view label);

// Bundled montages: "mi64" (64-channel motor imagery layout), "seed62",
// "std32", "std16" and "toy6".
ElectrodeMontage builtin_montage(std::string_view name);
std::vector<std::string> builtin_montage_names();

// Text format: one `NAME x y z` per line, '#' starts a comment.
ElectrodeMontage parse_montage(std::string_view text);
ElectrodeMontage load_montage(const std::filesystem::path& path);
std::string format_montage(const ElectrodeMontage& m);
void save_montage(const ElectrodeMontage& m, const std::filesystem::path& path);

// Accepts either a builtin name or a path to a montage file.
ElectrodeMontage resolve_montage(const std::string& name_or_path);

}  // namespace estformer
