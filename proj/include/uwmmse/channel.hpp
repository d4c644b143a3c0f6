#pragma once

// Geometric MU-MIMO channel generation.
//
// Index convention: H_ij (block [i][j] of the CSI tensor) is the R x T channel
// from transmitter j to receiver r(i); l_ij is the distance between
// transmitter j and receiver i. The desired link of pair i is H_ii.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "uwmmse/linalg.hpp"

namespace uwmmse::channel {

// Which channel block enters the transmit-side sum of the beamformer update:
//   kPaper:      sum_j H_ij^H U_j W_j U_j^H H_ij   (literal index order)
//   kTransposed: sum_j H_ji^H U_j W_j U_j^H H_ji   (exact BCD minimizer)
enum class VConvention { kPaper, kTransposed };

std::string to_string(VConvention c);
VConvention parse_v_convention(const std::string& name);

struct NetworkConfig {
  std::size_t M = 10;
  std::size_t T = 5;
  std::size_t R = 3;
  std::size_t d = 1;
  double sigma = 2.6e-5;  // noise standard deviation, linear
  double pmax = 1.0;      // per-transmitter power budget, linear
  std::vector<double> alpha;  // per-user priorities; empty means all ones
  VConvention v_convention = VConvention::kTransposed;

  // Throws ConfigError when an invariant is violated.
  void validate() const;
  [[nodiscard]] double alpha_at(std::size_t i) const { return alpha.empty() ? 1.0 : alpha[i]; }
};

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct SpatialSpec {
  enum class Kind { kUniform, kGaussian };
  Kind kind = Kind::kUniform;
  double stddev = 1.0;  // Gaussian only

  static SpatialSpec uniform() { return {}; }
  static SpatialSpec gaussian(double stddev) { return {Kind::kGaussian, stddev}; }
};

struct FadingSpec {
  enum class Kind { kRayleigh, kRician };
  Kind kind = Kind::kRayleigh;
  double k_factor = 100.0;  // linear; Rician only

  static FadingSpec rayleigh() { return {}; }
  static FadingSpec rician(double k = 100.0) { return {Kind::kRician, k}; }
  void validate() const;
};

std::string to_string(FadingSpec::Kind k);
FadingSpec parse_fading(const std::string& name, double k_factor = 100.0);

struct Topology {
  std::vector<Point> tx;
  std::vector<Point> rx;
  std::vector<double> distances;  // row-major M x M, entry (i, j) = |tx_j - rx_i|

  [[nodiscard]] std::size_t size() const { return tx.size(); }
  [[nodiscard]] double distance(std::size_t i, std::size_t j) const {
    return distances[i * tx.size() + j];
  }
};

// Builds a topology from explicit positions.
Topology make_topology(std::vector<Point> tx, std::vector<Point> rx);

class CsiTensor {
 public:
  CsiTensor() = default;
  CsiTensor(std::size_t M, std::size_t R, std::size_t T);

  [[nodiscard]] std::size_t M() const { return m_; }
  [[nodiscard]] std::size_t R() const { return r_; }
  [[nodiscard]] std::size_t T() const { return t_; }
  [[nodiscard]] std::size_t coefficient_count() const { return m_ * m_ * r_ * t_; }

  [[nodiscard]] const CMatrix& block(std::size_t i, std::size_t j) const {
    return blocks_[i * m_ + j];
  }
  CMatrix& block(std::size_t i, std::size_t j) { return blocks_[i * m_ + j]; }

  // Flat row-major access over (i, j, r, t).
  [[nodiscard]] cplx coefficient(std::size_t flat) const;
  cplx& coefficient(std::size_t flat);

  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] bool same_shape(const CsiTensor& other) const {
    return m_ == other.m_ && r_ == other.r_ && t_ == other.t_;
  }
  // Relabels nodes: result.block(a, b) = block(perm[a], perm[b]).
  [[nodiscard]] CsiTensor permuted(const std::vector<std::size_t>& perm) const;

  friend bool operator==(const CsiTensor&, const CsiTensor&) = default;

 private:
  std::size_t m_ = 0, r_ = 0, t_ = 0;
  std::vector<CMatrix> blocks_;
};

// Transmitters and receivers dropped i.i.d.: uniform on [0, sqrt(M)]^2, or
// normal around (sqrt(M)/2, sqrt(M)/2) with the given stddev (unclipped).
Topology sample_topology(std::size_t M, const SpatialSpec& spatial, std::uint64_t seed);

// Deterministic path factor 1 / (1 + l^3).
double path_factor(double distance);

// Rician component statistics for a linear K-factor.
double rician_mean(double k);
double rician_stddev(double k);

CsiTensor sample_csi(const Topology& topology, const FadingSpec& fading,
                     const NetworkConfig& config, std::uint64_t seed);

// Adds (c + i d), c, d ~ N(0, sigma_r), to floor(rate * coefficient_count)
// coefficients picked uniformly without replacement. The rest are untouched.
// For a fixed seed the distorted sets are nested in the rate.
CsiTensor distort_csi(const CsiTensor& h, double rate, double sigma_r, std::uint64_t seed);

// Reproducible stream of CSI samples; sample(k) depends only on (seed, k).
struct ChannelSource {
  NetworkConfig config;
  FadingSpec fading;
  SpatialSpec spatial;
  std::uint64_t seed = 0;

  [[nodiscard]] CsiTensor sample(std::uint64_t index) const;
  [[nodiscard]] std::vector<CsiTensor> batch(std::uint64_t first, std::size_t count) const;
};

}  // namespace uwmmse::channel
