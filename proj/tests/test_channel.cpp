#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "support.hpp"
#include "uwmmse/channel.hpp"
#include "uwmmse/dataset.hpp"
#include "uwmmse/seeding.hpp"

using namespace uwmmse;
using namespace uwmmse::channel;

TEST_CASE("network config validation") {
  NetworkConfig c;
  CHECK_NOTHROW(c.validate());
  c.d = 4;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.pmax = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.alpha = {1.0, 2.0};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(parse_fading("nakagami"), ConfigError);
  CHECK_THROWS_AS(FadingSpec::rician(0.0).validate(), ConfigError);
  CHECK(parse_v_convention(to_string(VConvention::kPaper)) == VConvention::kPaper);
}

TEST_CASE("path factor and Rician parameters") {
  CHECK(path_factor(0.0) == 1.0);
  CHECK(path_factor(1.0) == 0.5);
  CHECK(path_factor(2.0) == doctest::Approx(1.0 / 9.0));
  CHECK(rician_mean(100.0) == doctest::Approx(0.70360).epsilon(1e-4));
  CHECK(rician_stddev(100.0) == doctest::Approx(0.07036).epsilon(1e-3));
}

TEST_CASE("explicit topology distances") {
  const auto topo = make_topology({{0, 0}, {3, 0}}, {{0, 4}, {3, 4}});
  CHECK(topo.distance(0, 0) == 4.0);
  CHECK(topo.distance(0, 1) == 5.0);  // tx 1 to rx 0
  CHECK(topo.distance(1, 0) == 5.0);
}

TEST_CASE("uniform placement stays in the square and centers on it") {
  const std::size_t M = 10000;
  const auto topo = sample_topology(M, SpatialSpec::uniform(), 5);
  const double side = std::sqrt(static_cast<double>(M));
  double mean = 0.0;
  for (const auto& p : topo.tx) {
    CHECK(p.x >= 0.0);
    CHECK(p.x <= side);
    mean += p.x;
  }
  mean /= static_cast<double>(M);
  const double se = side / std::sqrt(12.0) / std::sqrt(static_cast<double>(M));
  CHECK(std::abs(mean - side / 2) < 3 * se);
}

TEST_CASE("Rayleigh coefficients follow the written scaling") {
  // One pair at distance 1: each real component is N(0, 1) / (sqrt(2) * 2).
  NetworkConfig c;
  c.M = 1;
  c.R = 10;
  c.T = 10;
  const auto topo = make_topology({{0, 0}}, {{1, 0}});
  double s1 = 0.0, s2 = 0.0;
  std::size_t n = 0;
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const auto h = sample_csi(topo, FadingSpec::rayleigh(), c, k);
    for (const cplx& z : h.block(0, 0).values()) {
      s1 += z.real();
      s2 += z.real() * z.real();
      ++n;
    }
  }
  const double var = 1.0 / 8.0;
  const double mean = s1 / static_cast<double>(n);
  const double emp_var = s2 / static_cast<double>(n) - mean * mean;
  CHECK(std::abs(mean) < 3 * std::sqrt(var / static_cast<double>(n)));
  CHECK(std::abs(emp_var - var) < 3 * var * std::sqrt(2.0 / static_cast<double>(n)));
}

TEST_CASE("sources are reproducible and index-addressable") {
  const auto src = test::rayleigh_source(6, 42);
  CHECK(src.sample(3) == src.sample(3));
  CHECK(src.batch(2, 3)[1] == src.sample(3));
  CHECK_FALSE(src.sample(3) == src.sample(4));
  auto other = src;
  other.seed = 43;
  CHECK_FALSE(other.sample(3) == src.sample(3));
}

TEST_CASE("permuted relabels both node axes") {
  const auto h = test::rayleigh_source(4, 1).sample(0);
  const std::vector<std::size_t> perm{2, 0, 3, 1};
  const auto p = h.permuted(perm);
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b) CHECK(p.block(a, b) == h.block(perm[a], perm[b]));
  CHECK_THROWS_AS((void)h.permuted({0, 1}), ShapeError);
}

TEST_CASE("distortion touches floor(rate * N) coefficients, nested in the rate") {
  const auto h = test::rayleigh_source(4, 9).sample(0);
  const std::size_t n = h.coefficient_count();
  CHECK(distort_csi(h, 0.0, 0.1, 1) == h);
  CHECK(distort_csi(h, 0.7, 0.0, 1) == h);
  const auto lo = distort_csi(h, 0.3, 0.1, 7);
  const auto hi = distort_csi(h, 0.6, 0.1, 7);
  std::size_t changed_lo = 0, changed_hi = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (lo.coefficient(k) != h.coefficient(k)) {
      ++changed_lo;
      CHECK(hi.coefficient(k) == lo.coefficient(k));
    }
    if (hi.coefficient(k) != h.coefficient(k)) ++changed_hi;
  }
  CHECK(changed_lo == static_cast<std::size_t>(std::floor(0.3 * static_cast<double>(n))));
  CHECK(changed_hi == static_cast<std::size_t>(std::floor(0.6 * static_cast<double>(n))));
  CHECK_THROWS_AS(distort_csi(h, 1.5, 0.1, 1), ConfigError);
}

TEST_CASE("dataset round trip and corruption") {
  const auto src = test::rayleigh_source(3, 11);
  Dataset ds{3, 3, 5, 1, src.batch(0, 4)};
  const auto bytes = encode_dataset(ds);
  CHECK(bytes.size() == 32 + 4 * 9 * 15 * 16);
  const auto back = decode_dataset(bytes);
  CHECK(back.samples == ds.samples);

  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_dataset(truncated), FormatError);
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(decode_dataset(bad_magic), FormatError);
  auto bad_version = bytes;
  bad_version[4] = 9;
  CHECK_THROWS_AS(decode_dataset(bad_version), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "uwmmse_test_dataset.bin";
  save_dataset(path, ds);
  CHECK(load_dataset(path).samples == ds.samples);
  std::filesystem::remove(path);
}

TEST_CASE("seed derivation is stable and purpose-specific") {
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(split_seed(5, 0) != split_seed(5, 1));
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}
