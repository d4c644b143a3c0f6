#pragma once

// Shared helpers for the unit tests.

#include <random>

#include "uwmmse/channel.hpp"
#include "uwmmse/linalg.hpp"

namespace uwmmse::test {

inline CMatrix random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
  std::normal_distribution<double> n;
  CMatrix m(rows, cols);
  for (auto& x : m.data()) {
    const double re = n(rng);
    const double im = n(rng);
    x = {re, im};
  }
  return m;
}

// A A^H + n I: comfortably positive definite.
inline CMatrix random_hpd(std::mt19937_64& rng, std::size_t n) {
  const CMatrix a = random_matrix(rng, n, n);
  CMatrix s = linalg::gemm_adj_b(a, a);
  for (std::size_t k = 0; k < n; ++k) s(k, k) += static_cast<double>(n);
  return s;
}

inline channel::ChannelSource rayleigh_source(std::size_t M, std::uint64_t seed,
                                              std::size_t R = 3, std::size_t T = 5) {
  channel::NetworkConfig cfg;
  cfg.M = M;
  cfg.R = R;
  cfg.T = T;
  return {cfg, channel::FadingSpec::rayleigh(), channel::SpatialSpec::uniform(), seed};
}

}  // namespace uwmmse::test
