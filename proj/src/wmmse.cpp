#include "uwmmse/wmmse.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "uwmmse/errors.hpp"

namespace uwmmse::wmmse {

using linalg::Cholesky;
using linalg::gemm;
using linalg::gemm_adj_a;
using linalg::gemm_adj_b;

void SolverOptions::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(bisection_tol > 0.0)) throw ConfigError("bisection_tol must be > 0");
  if (bisection_max_steps < 1) throw ConfigError("bisection_max_steps must be >= 1");
}

cplx v_init(const NetworkConfig& config) {
  const double a = std::sqrt(config.pmax / (2.0 * static_cast<double>(config.T * config.d)));
  return {a, a};
}

BeamformerSet initial_beamformers(const NetworkConfig& config) {
  return BeamformerSet(config.M, CMatrix(config.T, config.d, v_init(config)));
}

double node_power(const CMatrix& v) { return linalg::frob_norm_sq(v); }

double max_power(const BeamformerSet& v) {
  double m = 0.0;
  for (const auto& vi : v) m = std::max(m, node_power(vi));
  return m;
}

double distance(const BeamformerSet& a, const BeamformerSet& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += linalg::frob_norm_sq(a[i] - b[i]);
  return std::sqrt(s);
}

namespace {

void check_shapes(const CsiTensor& h, const BeamformerSet& v) {
  if (v.size() != h.M()) throw ShapeError("beamformer count differs from M");
  for (const auto& vi : v)
    if (vi.rows() != h.T()) throw ShapeError("beamformer rows differ from T");
}

// Interference-plus-noise covariance at receiver i, optionally including the
// desired link.
CMatrix receive_covariance(const CsiTensor& h, const BeamformerSet& v, double sigma,
                           std::size_t i, bool include_own) {
  CMatrix a = (sigma * sigma) * CMatrix::identity(h.R());
  for (std::size_t j = 0; j < h.M(); ++j) {
    if (j == i && !include_own) continue;
    const CMatrix g = gemm(h.block(i, j), v[j]);
    a += gemm_adj_b(g, g);
  }
  return a;
}

const CMatrix& transmit_block(const CsiTensor& h, std::size_t i, std::size_t j,
                              VConvention convention) {
  return convention == VConvention::kPaper ? h.block(i, j) : h.block(j, i);
}

}  // namespace

ReceiverSet update_u(const CsiTensor& h, const BeamformerSet& v, double sigma) {
  check_shapes(h, v);
  ReceiverSet u;
  u.nodes.reserve(h.M());
  for (std::size_t i = 0; i < h.M(); ++i) {
    const CMatrix a = receive_covariance(h, v, sigma, i, true);
    const CMatrix rhs = gemm(h.block(i, i), v[i]);
    try {
      u.nodes.push_back(linalg::hermitian_solve(a, rhs));
    } catch (const SingularityError& e) {
      throw SingularityError(std::string("update_u: ") + e.what(), i);
    }
  }
  return u;
}

WeightSet update_w_hat(const CsiTensor& h, const ReceiverSet& u, const BeamformerSet& v) {
  check_shapes(h, v);
  WeightSet w;
  w.nodes.reserve(h.M());
  for (std::size_t i = 0; i < h.M(); ++i) {
    const std::size_t d = v[i].cols();
    const CMatrix e = CMatrix::identity(d) - gemm_adj_a(u[i], gemm(h.block(i, i), v[i]));
    try {
      const CMatrix inv = linalg::inverse(e);
      w.nodes.push_back(0.5 * (inv + linalg::adjoint(inv)));
    } catch (const SingularityError& err) {
      throw SingularityError(std::string("update_w_hat: ") + err.what(), i);
    }
  }
  return w;
}

namespace {

// I + X^H B^{-1} X for node i, Hermitian-symmetrized. Throws DomainError when
// B is singular.
CMatrix capacity_matrix(const CsiTensor& h, const BeamformerSet& v, double sigma, std::size_t i) {
  const CMatrix b = receive_covariance(h, v, sigma, i, false);
  const CMatrix x = gemm(h.block(i, i), v[i]);
  CMatrix y;
  try {
    y = linalg::hermitian_solve(b, x);
  } catch (const SingularityError&) {
    throw DomainError("interference-plus-noise matrix of node " + std::to_string(i) +
                      " is singular");
  }
  const CMatrix g = CMatrix::identity(x.cols()) + gemm_adj_a(x, y);
  return cplx(0.5) * (g + linalg::adjoint(g));
}

}  // namespace

WeightSet mmse_weights(const CsiTensor& h, const BeamformerSet& v, double sigma) {
  check_shapes(h, v);
  WeightSet w;
  w.nodes.reserve(h.M());
  for (std::size_t i = 0; i < h.M(); ++i) w.nodes.push_back(capacity_matrix(h, v, sigma, i));
  return w;
}

CMatrix mse_matrix(const CsiTensor& h, const ReceiverSet& u, const BeamformerSet& v,
                   double sigma, std::size_t i) {
  const std::size_t d = v[i].cols();
  const CMatrix gap = CMatrix::identity(d) - gemm_adj_a(u[i], gemm(h.block(i, i), v[i]));
  CMatrix e = gemm_adj_b(gap, gap);
  for (std::size_t j = 0; j < h.M(); ++j) {
    if (j == i) continue;
    const CMatrix g = gemm_adj_a(u[i], gemm(h.block(i, j), v[j]));
    e += gemm_adj_b(g, g);
  }
  e += (sigma * sigma) * gemm_adj_a(u[i], u[i]);
  return e;
}

double surrogate_objective(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                           const BeamformerSet& v, double sigma) {
  double total = 0.0;
  for (std::size_t i = 0; i < h.M(); ++i) {
    const CMatrix e = mse_matrix(h, u, v, sigma, i);
    double logdet = 0.0;
    try {
      logdet = Cholesky(w[i]).logdet();
    } catch (const SingularityError&) {
      throw DomainError("surrogate_objective: weight of node " + std::to_string(i) +
                        " is not Hermitian positive definite");
    }
    total += linalg::trace(gemm(w[i], e)).real() - logdet;
  }
  return total;
}

double block_minimum_objective(const CsiTensor& h, const BeamformerSet& v, double sigma) {
  const auto rates = node_rates(h, v, sigma);
  double total = 0.0;
  for (std::size_t i = 0; i < h.M(); ++i) {
    total += static_cast<double>(v[i].cols()) - std::log(2.0) * rates[i];
  }
  return total;
}

CMatrix transmit_covariance(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                            std::size_t i, VConvention convention) {
  CMatrix s(h.T(), h.T());
  for (std::size_t j = 0; j < h.M(); ++j) {
    const CMatrix x = gemm_adj_a(transmit_block(h, i, j, convention), u[j]);  // T x d
    s += gemm_adj_b(gemm(x, w[j]), x);
  }
  return s;
}

namespace {

CMatrix transmit_rhs(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                     std::size_t i) {
  return gemm(gemm_adj_a(h.block(i, i), u[i]), w[i]);
}

CMatrix shifted(CMatrix s, cplx mu) {
  for (std::size_t k = 0; k < s.rows(); ++k) s(k, k) += mu;
  return s;
}

}  // namespace

VUpdate update_v_classical(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                           const NetworkConfig& config, const SolverOptions& opts) {
  VUpdate out;
  out.v.nodes.reserve(h.M());
  out.mu.reserve(h.M());
  const double pmax = config.pmax;

  for (std::size_t i = 0; i < h.M(); ++i) {
    const CMatrix rhs = transmit_rhs(h, u, w, i);
    if (linalg::frob_norm(rhs) == 0.0) {
      out.v.nodes.emplace_back(h.T(), rhs.cols());
      out.mu.push_back(0.0);
      continue;
    }
    // In the eigenbasis of S the power is a smooth scalar function of mu,
    //   P(mu) = sum_k ||c_k||^2 / (lambda_k + mu)^2,  c = Q^H rhs,
    // so the bisection is not disturbed by solver noise of S + mu I.
    const linalg::HermitianEigen eig(transmit_covariance(h, u, w, i, config.v_convention));
    const CMatrix c = gemm_adj_a(eig.vectors, rhs);
    const std::size_t T = c.rows();
    std::vector<double> lambda(T), weight(T, 0.0);
    const double floor = 1e-14 * std::max(std::abs(eig.values.back()), 1e-300);
    for (std::size_t k = 0; k < T; ++k) {
      lambda[k] = eig.values[k] > floor ? eig.values[k] : 0.0;
      for (std::size_t col = 0; col < c.cols(); ++col) weight[k] += std::norm(c(k, col));
    }
    auto power = [&](double mu) {
      double p = 0.0;
      for (std::size_t k = 0; k < T; ++k) {
        if (weight[k] == 0.0) continue;
        const double den = lambda[k] + mu;
        if (den == 0.0) return std::numeric_limits<double>::infinity();
        p += weight[k] / (den * den);
      }
      return p;
    };
    auto v_at = [&](double mu) {
      CMatrix scaled = c;
      for (std::size_t k = 0; k < T; ++k) {
        const double den = lambda[k] + mu;
        for (std::size_t col = 0; col < c.cols(); ++col) {
          scaled(k, col) = den == 0.0 ? cplx(0.0) : scaled(k, col) / den;
        }
      }
      return gemm(eig.vectors, scaled);
    };

    double mu = 0.0;
    if (!(power(0.0) <= pmax)) {
      double lo = 0.0;
      double hi = 1.0;
      std::size_t steps = 0;
      while (power(hi) > pmax) {
        if (++steps > opts.bisection_max_steps) {
          throw SolverError("update_v: bisection failed to bracket the multiplier for node " +
                            std::to_string(i));
        }
        lo = hi;
        hi *= 2.0;
      }
      // Invariant: P(lo) > pmax >= P(hi).
      for (std::size_t k = 0; k < opts.bisection_max_steps; ++k) {
        if (pmax - power(hi) <= opts.bisection_tol) break;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        (power(mid) > pmax ? lo : hi) = mid;
      }
      mu = hi;
    }
    CMatrix v = v_at(mu);
    // Rounding in assembling V may leave it a hair above the budget.
    if (node_power(v) > pmax) v = project_power(BeamformerSet(1, v), pmax)[0];
    out.v.nodes.push_back(std::move(v));
    out.mu.push_back(mu);
  }
  return out;
}

BeamformerSet update_v_fixed_mu(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                                cplx mu, VConvention convention) {
  BeamformerSet v;
  v.nodes.reserve(h.M());
  for (std::size_t i = 0; i < h.M(); ++i) {
    const CMatrix s = shifted(transmit_covariance(h, u, w, i, convention), mu);
    try {
      v.nodes.push_back(linalg::solve(s, transmit_rhs(h, u, w, i)));
    } catch (const SingularityError& e) {
      throw SingularityError(std::string("update_v: ") + e.what(), i);
    }
  }
  return v;
}

double saturation_gain(const CMatrix& v, double pmax) {
  const double inv = 1.0 / linalg::frob_norm(v);
  double c = std::sqrt(pmax);
  while (c > 0.0 && node_power((inv * v) * c) > pmax) c = std::nextafter(c, 0.0);
  return c;
}

BeamformerSet project_power(const BeamformerSet& v, double pmax) {
  BeamformerSet out = v;
  for (auto& vi : out) {
    if (node_power(vi) <= pmax) continue;
    const double c = saturation_gain(vi, pmax);
    vi = (cplx(1.0 / linalg::frob_norm(vi)) * vi) * cplx(c);
  }
  return out;
}

namespace {

// Rows sigma I_R, then (H_ij V_j)^H for every j != i, and (H_ii V_i)^H last
// when `with_signal` is set; its Gram matrix is the receive covariance.
CMatrix receive_root(const CsiTensor& h, const BeamformerSet& v, double sigma, std::size_t i,
                     bool with_signal) {
  const std::size_t R = h.R(), d = v[i].cols();
  CMatrix a(R + (h.M() - (with_signal ? 0 : 1)) * d, R);
  for (std::size_t k = 0; k < R; ++k) a(k, k) = sigma;
  std::size_t row = R;
  for (std::size_t j = 0; j < h.M(); ++j) {
    if (j == i && !with_signal) continue;
    const CMatrix g = gemm(h.block(i, j), v[j]);  // R x d
    for (std::size_t c = 0; c < d; ++c, ++row)
      for (std::size_t r = 0; r < R; ++r) a(row, r) = std::conj(g(r, c));
  }
  return a;
}

}  // namespace

std::vector<double> node_rates(const CsiTensor& h, const BeamformerSet& v, double sigma) {
  check_shapes(h, v);
  std::vector<double> rates(h.M());
  for (std::size_t i = 0; i < h.M(); ++i) {
    // log det(B + X X^H) - log det B, both through square roots of B.
    try {
      rates[i] = (linalg::logdet_gram(receive_root(h, v, sigma, i, true)) -
                  linalg::logdet_gram(receive_root(h, v, sigma, i, false))) /
                 std::log(2.0);
    } catch (const SingularityError&) {
      throw DomainError("sum_rate: interference-plus-noise matrix of node " + std::to_string(i) +
                        " is singular");
    }
  }
  return rates;
}

double sum_rate(const CsiTensor& h, const BeamformerSet& v, double sigma,
                const std::vector<double>& alpha) {
  const auto rates = node_rates(h, v, sigma);
  double total = 0.0;
  for (std::size_t i = 0; i < rates.size(); ++i) total += (alpha.empty() ? 1.0 : alpha[i]) * rates[i];
  return total;
}

WmmseResult run_wmmse(const CsiTensor& h, const NetworkConfig& config, const SolverOptions& opts,
                      bool record_sweeps) {
  config.validate();
  opts.validate();
  WmmseResult result;
  BeamformerSet v = initial_beamformers(config);
  const double stop = 1e-8 * std::sqrt(static_cast<double>(config.M) * config.pmax);

  for (std::size_t t = 0; t < opts.max_iters; ++t) {
    ReceiverSet u = update_u(h, v, config.sigma);
    WeightSet w = mmse_weights(h, v, config.sigma);
    VUpdate next = update_v_classical(h, u, w, config, opts);
    if (opts.objective_trace) {
      // Objective of the completed sweep, minimized over (U, W) for the new V.
      result.objective.push_back(block_minimum_objective(h, next.v, config.sigma));
    }
    const double moved = distance(next.v, v);
    v = std::move(next.v);
    ++result.iterations;
    if (record_sweeps) result.sweeps.push_back({std::move(u), std::move(w), v});
    if (opts.early_exit && moved < stop) break;
  }
  result.v = std::move(v);
  return result;
}

WmmseResult run_truncated(const CsiTensor& h, const NetworkConfig& config, std::size_t k,
                          SolverOptions opts, bool record_sweeps) {
  if (k < 1) throw ConfigError("run_truncated: k must be >= 1");
  opts.max_iters = k;
  return run_wmmse(h, config, opts, record_sweeps);
}

std::vector<SweepState> run_pinned(const CsiTensor& h, const NetworkConfig& config,
                                   std::size_t k, cplx mu) {
  std::vector<SweepState> states;
  BeamformerSet v = initial_beamformers(config);
  for (std::size_t t = 0; t < k; ++t) {
    ReceiverSet u = update_u(h, v, config.sigma);
    WeightSet w = mmse_weights(h, v, config.sigma);
    BeamformerSet raw = update_v_fixed_mu(h, u, w, mu, config.v_convention);
    v = project_power(raw, config.pmax);
    states.push_back({std::move(u), std::move(w), v});
  }
  return states;
}

}  // namespace uwmmse::wmmse
