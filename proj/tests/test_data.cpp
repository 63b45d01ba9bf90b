#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "mlasdi/data.hpp"

using namespace mlasdi;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

SnapshotTensor tiny_tensor() {
  // 1 parameter, 2 times, 3 states
  return SnapshotTensor({{{0.5}}}, {0.0, 0.1}, 3, {1.0, 2.0, 3.0, 4.0, 5.0, 6.0});
}

}  // namespace

TEST_CASE("toy generator produces the documented shapes") {
  const SnapshotTensor toy = generate_toy({1.0, 1.4}, 600, 201);
  REQUIRE(toy.num_parameters() == 2);
  REQUIRE(toy.num_times() == 201);
  REQUIRE(toy.state_dim() == 600);
  REQUIRE(toy.dt() == Catch::Approx(2.0 * std::numbers::pi / 200.0));
}

TEST_CASE("toy field value at the origin") {
  // sin(0) + 0.1*cos(0) = 0.1, and the envelope is 1 at x = 0
  REQUIRE(toy_field(0.0, 0.0, 1.0) == Catch::Approx(0.1).margin(1e-15));
}

TEST_CASE("zero amplitude gives an all-zero field") {
  const SnapshotTensor toy = generate_toy({0.0}, 12, 9);
  for (double v : toy.values()) REQUIRE(v == 0.0);
}

TEST_CASE("toy generator is deterministic and bounded") {
  const SnapshotTensor a = generate_toy({1.3}, 40, 17);
  const SnapshotTensor b = generate_toy({1.3}, 40, 17);
  REQUIRE(a.values() == b.values());
  for (double v : a.values()) REQUIRE(std::abs(v) <= 1.1 * 1.3 + 1e-12);
}

TEST_CASE("toy generator rejects degenerate grids") {
  REQUIRE_THROWS_MATCHES(generate_toy({1.0}, 1, 10), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::invalid_grid;
                         }));
  REQUIRE_THROWS_AS(generate_toy({1.0}, 10, 1), Error);
  REQUIRE_THROWS_AS(generate_toy({}, 10, 10), Error);
}

TEST_CASE("tensor validation rejects bad inputs") {
  // non-uniform time grid
  REQUIRE_THROWS_MATCHES(
      SnapshotTensor({{{1.0}}}, {0.0, 0.1, 0.3}, 1, {1.0, 2.0, 3.0}), Error,
      Catch::Matchers::Predicate<Error>(
          [](const Error& e) { return e.code() == Errc::non_uniform_time_grid; }));
  // duplicate parameters
  REQUIRE_THROWS_AS(
      SnapshotTensor({{{1.0}}, {{1.0}}}, {0.0, 0.1}, 1, {1.0, 2.0, 3.0, 4.0}), Error);
  // non-finite values
  REQUIRE_THROWS_AS(
      SnapshotTensor({{{1.0}}}, {0.0, 0.1}, 1,
                     {1.0, std::numeric_limits<double>::quiet_NaN()}),
      Error);
  // empty parameter list
  REQUIRE_THROWS_MATCHES(SnapshotTensor({}, {0.0, 0.1}, 1, {}), Error,
                         Catch::Matchers::Predicate<Error>([](const Error& e) {
                           return e.code() == Errc::invalid_tensor;
                         }));
}

TEST_CASE("save/load round-trip is bitwise") {
  const SnapshotTensor toy = generate_toy({1.0, 1.4}, 25, 11);
  const std::string path = temp_path("mlasdi_roundtrip.mlsd");
  save_snapshots(toy, path);
  const SnapshotTensor back = load_snapshots(path);
  REQUIRE(back.values() == toy.values());
  REQUIRE(back.num_parameters() == toy.num_parameters());
  REQUIRE(back.parameters()[1].values == toy.parameters()[1].values);
  REQUIRE(back.times() == toy.times());
  fs::remove(path);
}

TEST_CASE("file sizes follow the format arithmetic") {
  // header: 4 magic + 1 version + 4*u32 + 2*f64 = 37 bytes, then parameters,
  // then payload
  const std::string path = temp_path("mlasdi_size.mlsd");
  const SnapshotTensor t = tiny_tensor();
  save_snapshots(t, path);
  REQUIRE(fs::file_size(path) == 37 + 1 * 1 * 8 + 6 * 8);
  fs::remove(path);

  const SnapshotTensor toy = generate_toy({1.0, 1.4}, 600, 201);
  save_snapshots(toy, path);
  REQUIRE(fs::file_size(path) ==
          37 + 2 * 1 * 8 + static_cast<std::uintmax_t>(2) * 201 * 600 * 8);
  fs::remove(path);
}

TEST_CASE("corrupt files are rejected with the right categories") {
  const std::string path = temp_path("mlasdi_corrupt.mlsd");
  save_snapshots(tiny_tensor(), path);

  SECTION("truncated payload is a shape error") {
    fs::resize_file(path, fs::file_size(path) - 8);
    REQUIRE_THROWS_MATCHES(load_snapshots(path), Error,
                           Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::shape_error;
                           }));
  }

  SECTION("bad magic is a format error") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    REQUIRE_THROWS_MATCHES(load_snapshots(path), Error,
                           Catch::Matchers::Predicate<Error>([](const Error& e) {
                             return e.code() == Errc::format_error;
                           }));
  }

  SECTION("trailing garbage is a shape error") {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f.write("zz", 2);
    f.close();
    REQUIRE_THROWS_AS(load_snapshots(path), Error);
  }

  fs::remove(path);
}

TEST_CASE("center_scale_stats on degenerate and symmetric data") {
  SnapshotTensor constant({{{1.0}}}, {0.0, 1.0}, 2, {3.5, 3.5, 3.5, 3.5});
  CenterScale cs = center_scale_stats(constant);
  REQUIRE(cs.mean[0] == 3.5);
  REQUIRE(cs.mean[1] == 3.5);
  REQUIRE(cs.scale == 1.0);  // guarded

  SnapshotTensor pm({{{1.0}}}, {0.0, 1.0}, 2, {-1.0, 1.0, 1.0, -1.0});
  CenterScale cs2 = center_scale_stats(pm);
  REQUIRE(cs2.mean[0] == 0.0);
  REQUIRE(cs2.mean[1] == 0.0);
  REQUIRE(cs2.scale == Catch::Approx(1.0));
}

TEST_CASE("center_scale_stats matches a brute-force two-pass oracle on toy data") {
  const SnapshotTensor toy = generate_toy({1.0, 1.4}, 30, 21);
  const CenterScale cs = center_scale_stats(toy);
  // independent oracle: center per state index, then a flat two-pass std
  const int nu = toy.state_dim();
  const std::size_t rows = toy.values().size() / nu;
  std::vector<double> mean(nu, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (int s = 0; s < nu; ++s) mean[s] += toy.values()[r * nu + s] / double(rows);
  double ss = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (int s = 0; s < nu; ++s) {
      const double d = toy.values()[r * nu + s] - mean[s];
      ss += d * d;
    }
  const double oracle = std::sqrt(ss / double(toy.values().size()));
  REQUIRE(cs.scale == Catch::Approx(oracle).margin(1e-12));
  for (int s = 0; s < nu; ++s) REQUIRE(cs.mean[s] == Catch::Approx(mean[s]).margin(1e-12));
}

TEST_CASE("csv export writes one row per (parameter, time)") {
  const std::string path = temp_path("mlasdi_export.csv");
  snapshots_to_csv(tiny_tensor(), path);
  std::ifstream f(path);
  std::string line;
  int lines = 0;
  while (std::getline(f, line)) ++lines;
  REQUIRE(lines == 1 + 1 * 2);  // header + n_params * n_times
  fs::remove(path);
}
