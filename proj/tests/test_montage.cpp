#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "estformer/montage.hpp"

using namespace estformer;

namespace {
void check_at(const Electrode& e, double x, double y, double z) {
  CHECK(e.x == doctest::Approx(x).epsilon(1e-12));
  CHECK(e.y == doctest::Approx(y).epsilon(1e-12));
  CHECK(e.z == doctest::Approx(z).epsilon(1e-12));
}
}  // namespace

TEST_CASE("landmark positions") {
  check_at(standard_position("Cz"), 0, 0, 1);
  check_at(standard_position("Fpz"), 0, 1, 0);
  check_at(standard_position("Oz"), 0, -1, 0);
  check_at(standard_position("T8"), 1, 0, 0);
  check_at(standard_position("T7"), -1, 0, 0);
  const Electrode fz = standard_position("Fz");
  CHECK(fz.y == doctest::Approx(std::cos(std::numbers::pi / 4)));
  CHECK_THROWS_AS(standard_position("Q3"), MontageError);
  CHECK_THROWS_AS(standard_position("X"), MontageError);
}

TEST_CASE("left/right pairs mirror across the midline") {
  for (auto [l, r] : {std::pair{"C3", "C4"}, {"F7", "F8"}, {"PO7", "PO8"}, {"Fp1", "Fp2"}, {"CP5", "CP6"}, {"T9", "T10"}}) {
    const Electrode a = standard_position(l), b = standard_position(r);
    CHECK(a.x == doctest::Approx(-b.x));
    CHECK(a.y == doctest::Approx(b.y));
    CHECK(a.z == doctest::Approx(b.z));
    CHECK(a.x < 0.0);
  }
  // Numbering moves outward from the midline.
  CHECK(std::abs(standard_position("C1").x) < std::abs(standard_position("C3").x));
  CHECK(std::abs(standard_position("C3").x) < std::abs(standard_position("C5").x));
}

TEST_CASE("bundled montages are valid") {
  const std::vector<std::pair<std::string, std::size_t>> expected{
      {"mi64", 64}, {"seed62", 62}, {"std32", 32}, {"std16", 16}, {"toy6", 6}};
  for (const auto& [name, n] : expected) {
    const ElectrodeMontage m = builtin_montage(name);
    CHECK(m.size() == n);
    std::set<std::string> names;
    for (const auto& e : m.electrodes()) {
      CHECK(std::sqrt(e.x * e.x + e.y * e.y + e.z * e.z) == doctest::Approx(1.0).epsilon(1e-12));
      names.insert(e.name);
    }
    CHECK(names.size() == n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) CHECK(m.angular_distance(i, j) > 0.05);
  }
  CHECK_THROWS_AS(builtin_montage("nope"), MontageError);
}

TEST_CASE("montage validation and lookup") {
  CHECK_THROWS_AS(ElectrodeMontage({{"A", 1, 0, 0}, {"a", 0, 1, 0}}), MontageError);
  CHECK_THROWS_AS(ElectrodeMontage({{"A", 1, 1, 0}}), MontageError);
  CHECK_THROWS_AS(ElectrodeMontage({{"ABCDEFGHIJKLMNOP", 1, 0, 0}}), MontageError);
  const ElectrodeMontage m({{"Cz", 0, 0, 1}, {"T8", 1, 0, 0}});
  CHECK(m.index_of("cz") == 0);
  CHECK(m.index_of("T8") == 1);
  CHECK_THROWS_AS(m.index_of("Pz"), MontageError);
  CHECK(m.angular_distance(0, 1) == doctest::Approx(std::numbers::pi / 2));
}

TEST_CASE("montage text round trip") {
  const ElectrodeMontage m = builtin_montage("std32");
  const ElectrodeMontage back = parse_montage(format_montage(m));
  REQUIRE(back.size() == m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(back[i].name == m[i].name);
    CHECK(back[i].x == m[i].x);
    CHECK(back[i].y == m[i].y);
    CHECK(back[i].z == m[i].z);
  }
  CHECK_THROWS_AS(parse_montage("Cz 0 0\n"), MontageError);
  CHECK_THROWS_AS(parse_montage("# only a comment\n"), MontageError);
  CHECK_THROWS_AS(parse_montage("Cz 0 0 1 extra\n"), MontageError);
}

TEST_CASE("shipped montage files match the generated tables") {
  for (const auto& name : builtin_montage_names()) {
    const auto path = std::filesystem::path(ESTFORMER_DATA_DIR) / (name + ".txt");
    REQUIRE(std::filesystem::exists(path));
    const ElectrodeMontage file = load_montage(path), gen = builtin_montage(name);
    REQUIRE(file.size() == gen.size());
    for (std::size_t i = 0; i < gen.size(); ++i) {
      CHECK(file[i].name == gen[i].name);
      CHECK(file[i].x == gen[i].x);
      CHECK(file[i].z == gen[i].z);
    }
  }
}
