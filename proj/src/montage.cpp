#include "estformer/montage.hpp"
#include "estformer/tensor.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_set>

namespace estformer {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

struct Vec3 {
  double x, y, z;
};

double deg(double d) { return d * std::numbers::pi / 180.0; }

Vec3 slerp(const Vec3& a, const Vec3& b, double f) {
  const double dot = std::clamp(a.x * b.x + a.y * b.y + a.z * b.z, -1.0, 1.0);
  const double omega = std::acos(dot);
  const double s = std::sin(omega);
  const double wa = std::sin((1.0 - f) * omega) / s;
  const double wb = std::sin(f * omega) / s;
  return {wa * a.x + wb * b.x, wa * a.y + wb * b.y, wa * a.z + wb * b.z};
}

// Point on the sagittal arc, `a` degrees from Fpz over the vertex.
Vec3 midline(double a) { return {0.0, std::cos(deg(a)), std::sin(deg(a))}; }

// Point at azimuth `az` degrees from the front, elevation `el` degrees.
Vec3 lateral(double az, double el, bool right) {
  const double r = std::cos(deg(el));
  return {(right ? 1.0 : -1.0) * r * std::sin(deg(az)), r * std::cos(deg(az)), std::sin(deg(el))};
}

struct Row {
  double midline_deg;  // sagittal angle of the row's z electrode
  double ring_az;      // azimuth of the row's 7/8 electrode on the equator
  double ring_el;
  bool ring_first;     // Fp1/O1 style rows whose first electrode is on the ring
};

Row row_for(const std::string& prefix, std::string_view label) {
  if (prefix == "fp") return {0.0, 18.0, 0.0, true};
  if (prefix == "af") return {22.5, 36.0, 0.0, false};
  if (prefix == "f") return {45.0, 54.0, 0.0, false};
  if (prefix == "fc" || prefix == "ft") return {67.5, 72.0, 0.0, false};
  if (prefix == "c" || prefix == "t") return {90.0, 90.0, 0.0, false};
  if (prefix == "cp" || prefix == "tp") return {112.5, 108.0, 0.0, false};
  if (prefix == "p") return {135.0, 126.0, 0.0, false};
  if (prefix == "po") return {157.5, 144.0, 0.0, false};
  if (prefix == "o") return {180.0, 162.0, 0.0, true};
  if (prefix == "i") return {202.5, 162.0, -22.5, true};
  if (prefix == "cb") return {202.5, 153.0, -27.0, true};
  throw MontageError("unknown electrode label '" + std::string(label) + "'");
}

}  // namespace

ElectrodeMontage::ElectrodeMontage(std::vector<Electrode> electrodes) : electrodes_(std::move(electrodes)) {
  std::unordered_set<std::string> seen;
  for (const auto& e : electrodes_) {
    if (e.name.empty() || e.name.size() > 15) throw MontageError("electrode name must be 1..15 characters");
    if (!seen.insert(lower(e.name)).second) throw MontageError("duplicate electrode name '" + e.name + "'");
    const double norm = std::sqrt(e.x * e.x + e.y * e.y + e.z * e.z);
    if (std::abs(norm - 1.0) > 1e-6) {
      throw MontageError("electrode '" + e.name + "' is not on the unit sphere (|p| = " + std::to_string(norm) +
                         ")");
    }
  }
}

std::vector<std::string> ElectrodeMontage::names() const {
  std::vector<std::string> out;
  out.reserve(electrodes_.size());
  for (const auto& e : electrodes_) out.push_back(e.name);
  return out;
}

std::size_t ElectrodeMontage::index_of(std::string_view name) const {
  const std::string key = lower(name);
  for (std::size_t i = 0; i < electrodes_.size(); ++i) {
    if (lower(electrodes_[i].name) == key) return i;
  }
  throw MontageError("electrode '" + std::string(name) + "' not in montage");
}

double angular_distance(const Electrode& a, const Electrode& b) {
  const double dot = std::clamp(a.x * b.x + a.y * b.y + a.z * b.z, -1.0, 1.0);
  return std::acos(dot);
}

double ElectrodeMontage::angular_distance(std::size_t i, std::size_t j) const {
  return estformer::angular_distance(electrodes_.at(i), electrodes_.at(j));
}

Electrode standard_position(std::string_view label) {
  const std::string l = lower(label);
  if (l.size() < 2) throw MontageError("unknown electrode label '" + std::string(label) + "'");
  Vec3 p{};
  if (l.back() == 'z') {
    const Row row = row_for(l.substr(0, l.size() - 1), label);
    p = midline(row.midline_deg);
  } else {
    const auto digit = l.find_first_of("0123456789");
    if (digit == std::string::npos || digit == 0) {
      throw MontageError("unknown electrode label '" + std::string(label) + "'");
    }
    const Row row = row_for(l.substr(0, digit), label);
    const int number = std::stoi(l.substr(digit));
    if (number <= 0) throw MontageError("unknown electrode label '" + std::string(label) + "'");
    const bool right = number % 2 == 0;
    // 10-10 numbering: 1/2 sit a quarter of the way from the midline to the
    // ring electrode 7/8; 9/10 extrapolate one step past the ring.
    const int level = right ? number / 2 : (number + 1) / 2;
    const double frac = row.ring_first ? static_cast<double>(level) : static_cast<double>(level) / 4.0;
    p = slerp(midline(row.midline_deg), lateral(row.ring_az, row.ring_el, right), frac);
  }
  const double n = std::sqrt(p.x * p.x + p.y * p.y + p.z * p.z);
  return {std::string(label), p.x / n, p.y / n, p.z / n};
}

namespace {

const char* const kMi64[] = {"Fc5", "Fc3", "Fc1", "Fcz", "Fc2", "Fc4", "Fc6", "C5",  "C3",  "C1",  "Cz",
                             "C2",  "C4",  "C6",  "Cp5", "Cp3", "Cp1", "Cpz", "Cp2", "Cp4", "Cp6", "Fp1",
                             "Fpz", "Fp2", "Af7", "Af3", "Afz", "Af4", "Af8", "F7",  "F5",  "F3",  "F1",
                             "Fz",  "F2",  "F4",  "F6",  "F8",  "Ft7", "Ft8", "T7",  "T8",  "T9",  "T10",
                             "Tp7", "Tp8", "P7",  "P5",  "P3",  "P1",  "Pz",  "P2",  "P4",  "P6",  "P8",
                             "Po7", "Po3", "Poz", "Po4", "Po8", "O1",  "Oz",  "O2",  "Iz"};

const char* const kSeed62[] = {"FP1", "FPZ", "FP2", "AF3", "AF4", "F7",  "F5",  "F3",  "F1",  "FZ",  "F2",
                               "F4",  "F6",  "F8",  "FT7", "FC5", "FC3", "FC1", "FCZ", "FC2", "FC4", "FC6",
                               "FT8", "T7",  "C5",  "C3",  "C1",  "CZ",  "C2",  "C4",  "C6",  "T8",  "TP7",
                               "CP5", "CP3", "CP1", "CPZ", "CP2", "CP4", "CP6", "TP8", "P7",  "P5",  "P3",
                               "P1",  "PZ",  "P2",  "P4",  "P6",  "P8",  "PO7", "PO5", "PO3", "POZ", "PO4",
                               "PO6", "PO8", "CB1", "O1",  "OZ",  "O2",  "CB2"};

const char* const kStd32[] = {"Fp1", "Fp2", "AF3", "AF4", "F7",  "F3",  "Fz",  "F4",  "F8",  "FC5", "FC1",
                              "FC2", "FC6", "T7",  "C3",  "Cz",  "C4",  "T8",  "CP5", "CP1", "CP2", "CP6",
                              "P7",  "P3",  "Pz",  "P4",  "P8",  "PO3", "PO4", "O1",  "Oz",  "O2"};

const char* const kStd16[] = {"Fp1", "Fp2", "F7", "F3", "F4", "F8", "T7", "C3",
                              "C4",  "T8",  "P7", "P3", "P4", "P8", "O1", "O2"};

const char* const kToy6[] = {"F3", "F4", "C3", "C4", "P3", "P4"};

template <std::size_t N>
ElectrodeMontage from_labels(const char* const (&labels)[N]) {
  std::vector<Electrode> es;
  es.reserve(N);
  for (const char* l : labels) es.push_back(standard_position(l));
  return ElectrodeMontage(std::move(es));
}

}  // namespace

ElectrodeMontage builtin_montage(std::string_view name) {
  const std::string n = lower(name);
  if (n == "mi64") return from_labels(kMi64);
  if (n == "seed62") return from_labels(kSeed62);
  if (n == "std32") return from_labels(kStd32);
  if (n == "std16") return from_labels(kStd16);
  if (n == "toy6") return from_labels(kToy6);
  throw MontageError("no builtin montage named '" + std::string(name) + "'");
}

std::vector<std::string> builtin_montage_names() { return {"mi64", "seed62", "std32", "std16", "toy6"}; }

ElectrodeMontage parse_montage(std::string_view text) {
  std::vector<Electrode> es;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    Electrode e;
    if (!(ls >> e.name)) continue;
    if (!(ls >> e.x >> e.y >> e.z)) {
      throw MontageError("montage line " + std::to_string(line_no) + ": expected `NAME x y z`");
    }
    std::string extra;
    if (ls >> extra) throw MontageError("montage line " + std::to_string(line_no) + ": trailing tokens");
    es.push_back(std::move(e));
  }
  if (es.empty()) throw MontageError("montage has no electrodes");
  return ElectrodeMontage(std::move(es));
}

ElectrodeMontage load_montage(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open montage file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_montage(ss.str());
}

std::string format_montage(const ElectrodeMontage& m) {
  std::ostringstream os;
  os.precision(17);
  os << "# NAME x y z (unit sphere; +x right, +y nasion, +z vertex)\n";
  for (const auto& e : m.electrodes()) os << e.name << ' ' << e.x << ' ' << e.y << ' ' << e.z << '\n';
  return os.str();
}

void save_montage(const ElectrodeMontage& m, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write montage file " + path.string());
  f << format_montage(m);
}

ElectrodeMontage resolve_montage(const std::string& name_or_path) {
  const auto names = builtin_montage_names();
  if (std::find(names.begin(), names.end(), lower(name_or_path)) != names.end()) {
    return builtin_montage(name_or_path);
  }
  return load_montage(name_or_path);
}

}  // namespace estformer
