#include "uwmmse/channel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "uwmmse/errors.hpp"
#include "uwmmse/seeding.hpp"

namespace uwmmse::channel {

std::string to_string(VConvention c) {
  return c == VConvention::kPaper ? "paper" : "transposed";
}

VConvention parse_v_convention(const std::string& name) {
  if (name == "paper") return VConvention::kPaper;
  if (name == "transposed") return VConvention::kTransposed;
  throw ConfigError("unknown v_update_convention '" + name + "' (expected paper|transposed)");
}

void NetworkConfig::validate() const {
  if (M < 1 || T < 1 || R < 1 || d < 1) throw ConfigError("M, T, R and d must be at least 1");
  if (d > std::min(R, T)) throw ConfigError("d must not exceed min(R, T)");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma must be >= 0");
  if (!(pmax > 0.0) || !std::isfinite(pmax)) throw ConfigError("pmax must be > 0");
  if (!alpha.empty()) {
    if (alpha.size() != M) throw ConfigError("alpha must have M entries");
    for (double a : alpha)
      if (!(a > 0.0)) throw ConfigError("alpha entries must be > 0");
  }
}

void FadingSpec::validate() const {
  if (kind == Kind::kRician && !(k_factor > 0.0)) {
    throw ConfigError("Rician k_factor must be > 0");
  }
}

std::string to_string(FadingSpec::Kind k) {
  return k == FadingSpec::Kind::kRayleigh ? "rayleigh" : "rician";
}

FadingSpec parse_fading(const std::string& name, double k_factor) {
  if (name == "rayleigh") return FadingSpec::rayleigh();
  if (name == "rician") {
    FadingSpec f = FadingSpec::rician(k_factor);
    f.validate();
    return f;
  }
  throw ConfigError("unknown fading '" + name + "' (expected rayleigh|rician)");
}

Topology make_topology(std::vector<Point> tx, std::vector<Point> rx) {
  if (tx.size() != rx.size()) throw ShapeError("topology: tx/rx counts differ");
  Topology t;
  const std::size_t m = tx.size();
  t.tx = std::move(tx);
  t.rx = std::move(rx);
  t.distances.resize(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      t.distances[i * m + j] = std::hypot(t.tx[j].x - t.rx[i].x, t.tx[j].y - t.rx[i].y);
  return t;
}

CsiTensor::CsiTensor(std::size_t M, std::size_t R, std::size_t T)
    : m_(M), r_(R), t_(T), blocks_(M * M, CMatrix(R, T)) {}

cplx CsiTensor::coefficient(std::size_t flat) const {
  const std::size_t per = r_ * t_;
  return blocks_.at(flat / per)[flat % per];
}

cplx& CsiTensor::coefficient(std::size_t flat) {
  const std::size_t per = r_ * t_;
  return blocks_.at(flat / per)[flat % per];
}

bool CsiTensor::all_finite() const {
  return std::all_of(blocks_.begin(), blocks_.end(),
                     [](const CMatrix& b) { return linalg::all_finite(b); });
}

CsiTensor CsiTensor::permuted(const std::vector<std::size_t>& perm) const {
  if (perm.size() != m_) throw ShapeError("permuted: permutation length differs from M");
  CsiTensor out(m_, r_, t_);
  for (std::size_t a = 0; a < m_; ++a)
    for (std::size_t b = 0; b < m_; ++b) out.block(a, b) = block(perm[a], perm[b]);
  return out;
}

Topology sample_topology(std::size_t M, const SpatialSpec& spatial, std::uint64_t seed) {
  if (M < 1) throw ConfigError("sample_topology: M must be >= 1");
  std::mt19937_64 rng(seed);
  const double side = std::sqrt(static_cast<double>(M));
  std::vector<Point> tx(M), rx(M);
  if (spatial.kind == SpatialSpec::Kind::kUniform) {
    std::uniform_real_distribution<double> u(0.0, side);
    for (auto& p : tx) p = {u(rng), u(rng)};
    for (auto& p : rx) p = {u(rng), u(rng)};
  } else {
    if (!(spatial.stddev > 0.0)) throw ConfigError("Gaussian placement needs stddev > 0");
    std::normal_distribution<double> g(side / 2.0, spatial.stddev);
    for (auto& p : tx) p = {g(rng), g(rng)};
    for (auto& p : rx) p = {g(rng), g(rng)};
  }
  return make_topology(std::move(tx), std::move(rx));
}

double path_factor(double distance) { return 1.0 / (1.0 + distance * distance * distance); }

double rician_mean(double k) { return std::sqrt(k / (2.0 * (k + 1.0))); }
double rician_stddev(double k) { return std::sqrt(1.0 / (2.0 * (k + 1.0))); }

CsiTensor sample_csi(const Topology& topology, const FadingSpec& fading,
                     const NetworkConfig& config, std::uint64_t seed) {
  if (topology.size() != config.M) {
    throw ShapeError("sample_csi: topology has " + std::to_string(topology.size()) +
                     " pairs, config expects " + std::to_string(config.M));
  }
  fading.validate();
  std::mt19937_64 rng(seed);
  const bool rician = fading.kind == FadingSpec::Kind::kRician;
  std::normal_distribution<double> comp(rician ? rician_mean(fading.k_factor) : 0.0,
                                        rician ? rician_stddev(fading.k_factor) : 1.0);
  const double extra = rician ? 1.0 : 1.0 / std::sqrt(2.0);

  CsiTensor h(config.M, config.R, config.T);
  for (std::size_t i = 0; i < config.M; ++i)
    for (std::size_t j = 0; j < config.M; ++j) {
      const double scale = extra * path_factor(topology.distance(i, j));
      for (auto& x : h.block(i, j).data()) {
        const double a = comp(rng);
        const double b = comp(rng);
        x = scale * cplx(a, b);
      }
    }
  return h;
}

CsiTensor distort_csi(const CsiTensor& h, double rate, double sigma_r, std::uint64_t seed) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw ConfigError("distort_csi: rate must lie in [0, 1]");
  if (!(sigma_r >= 0.0)) throw ConfigError("distort_csi: sigma_r must be >= 0");
  CsiTensor out = h;
  const std::size_t n = h.coefficient_count();
  const auto count = static_cast<std::size_t>(std::floor(rate * static_cast<double>(n)));
  if (count == 0 || sigma_r == 0.0) return out;

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  // Full shuffle, then a prefix: with one seed, a higher rate distorts a
  // superset of the coefficients, with the same noise on the shared ones.
  std::shuffle(all.begin(), all.end(), rng);
  std::normal_distribution<double> noise(0.0, sigma_r);
  for (std::size_t p = 0; p < count; ++p) {
    const double c = noise(rng);
    const double d = noise(rng);
    out.coefficient(all[p]) += cplx(c, d);
  }
  return out;
}

CsiTensor ChannelSource::sample(std::uint64_t index) const {
  const std::uint64_t s = split_seed(seed, index);
  const Topology topo = sample_topology(config.M, spatial, derive_seed(s, "topology"));
  return sample_csi(topo, fading, config, derive_seed(s, "fading"));
}

std::vector<CsiTensor> ChannelSource::batch(std::uint64_t first, std::size_t count) const {
  std::vector<CsiTensor> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(sample(first + k));
  return out;
}

}  // namespace uwmmse::channel
