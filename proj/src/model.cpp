#include "uwmmse/model.hpp"

#include <cmath>
#include <random>

#include "uwmmse/errors.hpp"
#include "uwmmse/seeding.hpp"

namespace uwmmse::model {

using ad::Tape;
using ad::Var;
using linalg::gemm;
using linalg::gemm_adj_a;
using linalg::gemm_adj_b;

namespace {

void require_single_stream(std::size_t d) {
  if (d != 1) throw ConfigError("the unfolded model supports d = 1 only");
}

CMatrix relu(CMatrix a) {
  for (auto& x : a.data()) x = cplx(std::max(x.real(), 0.0), std::max(x.imag(), 0.0));
  return a;
}

CMatrix diag_of(const CMatrix& s) {
  CMatrix out(s.rows(), s.cols());
  for (std::size_t k = 0; k < s.rows(); ++k) out(k, k) = s(k, k);
  return out;
}

void check_shape(const CMatrix& m, std::size_t r, std::size_t c, const std::string& name) {
  if (m.rows() != r || m.cols() != c) {
    throw ShapeError(name + ": expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

const CMatrix& transmit_block(const CsiTensor& h, std::size_t i, std::size_t j,
                              channel::VConvention convention) {
  return convention == channel::VConvention::kPaper ? h.block(i, j) : h.block(j, i);
}

}  // namespace

Hyper Hyper::for_network(const NetworkConfig& config, std::size_t F, std::size_t G) {
  Hyper h;
  h.F = F;
  h.G = G;
  h.Fp = config.R + config.T;
  h.P = mlp_parameter_count(G, config.d);
  return h;
}

const std::vector<std::string>& ModelParams::block_names() {
  static const std::vector<std::string> names{"theta11", "theta12", "theta21",
                                              "theta22", "omega",   "mu"};
  return names;
}

std::vector<CMatrix> ModelParams::blocks() const {
  return {theta11, theta12, theta21, theta22, omega, CMatrix::scalar(mu)};
}

void ModelParams::set_blocks(std::span<const CMatrix> b) {
  if (b.size() != kBlockCount) throw ShapeError("set_blocks: expected 6 blocks");
  check_shape(b[0], theta11.rows(), theta11.cols(), "theta11");
  check_shape(b[1], theta12.rows(), theta12.cols(), "theta12");
  check_shape(b[2], theta21.rows(), theta21.cols(), "theta21");
  check_shape(b[3], theta22.rows(), theta22.cols(), "theta22");
  check_shape(b[4], omega.rows(), omega.cols(), "omega");
  check_shape(b[5], 1, 1, "mu");
  theta11 = b[0];
  theta12 = b[1];
  theta21 = b[2];
  theta22 = b[3];
  omega = b[4];
  mu = b[5][0];
}

void ModelParams::validate(const NetworkConfig& config) const {
  if (hyper.Fp != config.R + config.T) throw ShapeError("hyper F' differs from R + T");
  if (hyper.P != mlp_parameter_count(hyper.G, config.d)) {
    throw ShapeError("hyper P inconsistent with G and d");
  }
  check_shape(theta11, hyper.F, hyper.Fp, "theta11");
  check_shape(theta12, hyper.F, hyper.Fp, "theta12");
  check_shape(theta21, hyper.P, hyper.F, "theta21");
  check_shape(theta22, hyper.P, hyper.F, "theta22");
  check_shape(omega, config.R, config.T, "omega");
  for (const auto& b : blocks())
    if (!linalg::all_finite(b)) throw DomainError("model parameters contain non-finite entries");
}

ModelParams init_params(const NetworkConfig& config, const Hyper& hyper, std::uint64_t seed) {
  config.validate();
  require_single_stream(config.d);
  std::mt19937_64 rng(derive_seed(seed, "init"));
  auto glorot = [&](std::size_t rows, std::size_t cols, std::size_t fan_in, std::size_t fan_out) {
    std::normal_distribution<double> n(0.0, std::sqrt(1.0 / static_cast<double>(fan_in + fan_out)));
    CMatrix m(rows, cols);
    for (auto& x : m.data()) {
      const double re = n(rng);
      const double im = n(rng);
      x = cplx(re, im);
    }
    return m;
  };
  ModelParams p;
  p.hyper = hyper;
  p.theta11 = glorot(hyper.F, hyper.Fp, hyper.Fp, hyper.F);
  p.theta12 = glorot(hyper.F, hyper.Fp, hyper.Fp, hyper.F);
  p.theta21 = glorot(hyper.P, hyper.F, hyper.F, hyper.P);
  p.theta22 = glorot(hyper.P, hyper.F, hyper.F, hyper.P);
  p.omega = glorot(config.R, config.T, config.R * config.T, 1);
  p.mu = kMuInit;
  p.validate(config);
  return p;
}

ModelParams zero_theta(ModelParams params) {
  for (CMatrix* m : {&params.theta11, &params.theta12, &params.theta21, &params.theta22})
    *m = CMatrix(m->rows(), m->cols());
  return params;
}

ParameterCount count_parameters(const ModelParams& params) {
  ParameterCount c;
  c.theta = params.theta11.size() + params.theta12.size() + params.theta21.size() +
            params.theta22.size();
  c.omega = params.omega.size();
  c.mu = 1;
  c.total = c.theta + c.omega + c.mu;
  return c;
}

std::vector<cplx> NodeMlpParams::flatten() const {
  std::vector<cplx> out;
  out.reserve(w1.size() + b1.size() + w2.size() + b2.size());
  for (const CMatrix* m : {&w1, &b1, &w2, &b2})
    out.insert(out.end(), m->data().begin(), m->data().end());
  return out;
}

NodeMlpParams NodeMlpParams::unflatten(std::span<const cplx> xi, std::size_t G, std::size_t d) {
  const std::size_t dd = d * d;
  if (xi.size() != mlp_parameter_count(G, d)) throw ShapeError("unflatten: wrong length");
  auto take = [&](std::size_t offset, std::size_t rows, std::size_t cols) {
    return CMatrix(rows, cols,
                   std::vector<cplx>(xi.begin() + static_cast<std::ptrdiff_t>(offset),
                                     xi.begin() + static_cast<std::ptrdiff_t>(offset + rows * cols)));
  };
  NodeMlpParams p;
  p.w1 = take(0, G, dd);
  p.b1 = take(G * dd, G, 1);
  p.w2 = take(G * dd + G, dd, G);
  p.b2 = take(2 * G * dd + G, dd, 1);
  return p;
}

CMatrix gamma_raw(const CsiTensor& h, const CMatrix& omega) {
  check_shape(omega, h.R(), h.T(), "omega");
  CMatrix s(h.M(), h.M());
  for (std::size_t i = 0; i < h.M(); ++i)
    for (std::size_t j = 0; j < h.M(); ++j) {
      const auto blk = h.block(i, j).data();
      cplx acc = 0.0;
      for (std::size_t k = 0; k < blk.size(); ++k) acc += omega[k] * blk[k];
      s(i, j) = acc;
    }
  return s;
}

CMatrix gamma_transform(const CsiTensor& h, const CMatrix& omega) {
  CMatrix s = gamma_raw(h, omega);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double mass = kRowNormEps;
    for (std::size_t c = 0; c < s.cols(); ++c) mass += std::abs(s(r, c));
    for (std::size_t c = 0; c < s.cols(); ++c) s(r, c) /= mass;
  }
  return s;
}

CMatrix build_features(const ReceiverSet& u, const BeamformerSet& v) {
  if (u.size() != v.size()) throw ShapeError("build_features: node counts differ");
  if (u.size() == 0) throw ShapeError("build_features: no nodes");
  require_single_stream(u[0].cols());
  require_single_stream(v[0].cols());
  const std::size_t R = u[0].rows();
  const std::size_t T = v[0].rows();
  CMatrix q(u.size(), R + T);
  for (std::size_t i = 0; i < u.size(); ++i) {
    for (std::size_t r = 0; r < R; ++r) q(i, r) = u[i](r, 0);
    for (std::size_t t = 0; t < T; ++t) q(i, R + t) = v[i](t, 0);
  }
  return q;
}

GcnOutput psi_gcn(const CMatrix& s, const CMatrix& q, const ModelParams& params) {
  const CMatrix dg = diag_of(s);
  GcnOutput out;
  out.z = relu(gemm_adj_b(gemm(dg, q), params.theta11) + gemm_adj_b(gemm(s, q), params.theta12));
  out.xi = relu(gemm_adj_b(gemm(dg, out.z), params.theta21) +
                gemm_adj_b(gemm(s, out.z), params.theta22));
  return out;
}

PhiOutput phi_mlp(const NodeMlpParams& xi, const CMatrix& w_hat) {
  const CMatrix vec = w_hat.reshaped(w_hat.size(), 1);
  const CMatrix hidden = relu(gemm(xi.w1, vec) + xi.b1);
  PhiOutput out;
  out.phi = relu(gemm(xi.w2, hidden) + xi.b2).reshaped(w_hat.rows(), w_hat.cols());
  out.w = out.phi + w_hat;
  return out;
}

BeamformerSet update_v_unfolded(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                                cplx mu, channel::VConvention convention) {
  return wmmse::update_v_fixed_mu(h, u, w, mu, convention);
}

BeamformerSet beta_saturate(const BeamformerSet& v_bar, double pmax) {
  return wmmse::project_power(v_bar, pmax);
}

ForwardResult forward(const CsiTensor& h, const ModelParams& params, const NetworkConfig& config,
                      std::size_t K, bool trace) {
  if (K < 1) throw ConfigError("forward: K must be >= 1");
  require_single_stream(config.d);
  if (h.M() != config.M || h.R() != config.R || h.T() != config.T) {
    throw ShapeError("forward: CSI shape differs from the network config");
  }
  ForwardResult result;
  const CMatrix s = gamma_transform(h, params.omega);
  BeamformerSet v = wmmse::initial_beamformers(config);
  for (std::size_t k = 0; k < K; ++k) {
    ReceiverSet u = wmmse::update_u(h, v, config.sigma);
    WeightSet w_hat = wmmse::mmse_weights(h, v, config.sigma);
    const CMatrix q = build_features(u, v);
    GcnOutput g = psi_gcn(s, q, params);
    WeightSet phi, w;
    for (std::size_t i = 0; i < config.M; ++i) {
      std::span<const cplx> row = g.xi.data().subspan(i * params.hyper.P, params.hyper.P);
      PhiOutput o = phi_mlp(NodeMlpParams::unflatten(row, params.hyper.G, config.d), w_hat[i]);
      phi.nodes.push_back(std::move(o.phi));
      w.nodes.push_back(std::move(o.w));
    }
    BeamformerSet v_bar = update_v_unfolded(h, u, w, params.mu, config.v_convention);
    BeamformerSet v_next = beta_saturate(v_bar, config.pmax);
    if (trace) {
      result.layers.push_back({s, q, std::move(g.z), std::move(g.xi), std::move(u),
                               std::move(w_hat), std::move(phi), std::move(w), std::move(v_bar),
                               v_next});
    }
    v = std::move(v_next);
  }
  result.v = std::move(v);
  return result;
}

ParamVars bind_parameters(Tape& tape, const ModelParams& params) {
  std::vector<Var> leaves;
  const auto b = params.blocks();
  for (std::size_t k = 0; k < b.size(); ++k) leaves.push_back(tape.parameter(b[k], k));
  return bind_parameters(leaves);
}

ParamVars bind_parameters(std::span<const Var> leaves) {
  if (leaves.size() != ModelParams::kBlockCount) throw ShapeError("bind_parameters: need 6 leaves");
  return {leaves[0], leaves[1], leaves[2], leaves[3], leaves[4], leaves[5]};
}

namespace {

Var hermitize(Tape& tape, Var a) { return tape.scale(tape.add(a, tape.adjoint(a)), 0.5); }

// Graph version of the receiver and weight updates: U_i from the full
// receive covariance, W^_i = I + X^H B_i^{-1} X from the interference-plus-noise
// part, X = H_ii V_i.
void receivers_graph(Tape& tape, const std::vector<std::vector<Var>>& hc,
                     const std::vector<Var>& v, double sigma, std::size_t R,
                     std::vector<Var>& u, std::vector<Var>& w_hat) {
  const std::size_t M = v.size();
  const Var noise = tape.constant((sigma * sigma) * CMatrix::identity(R));
  const Var eye_d = tape.constant(CMatrix::identity(tape.value(v[0]).cols()));
  u.assign(M, Var{});
  w_hat.assign(M, Var{});
  for (std::size_t i = 0; i < M; ++i) {
    std::vector<Var> all{noise};
    std::vector<Var> others{noise};
    Var own{};
    for (std::size_t j = 0; j < M; ++j) {
      const Var g = tape.gemm(hc[i][j], v[j]);
      const Var gg = tape.gemm_adj_b(g, g);
      all.push_back(gg);
      if (j == i) {
        own = g;
      } else {
        others.push_back(gg);
      }
    }
    try {
      u[i] = tape.hermitian_solve(tape.sum(all), own);
    } catch (const SingularityError& e) {
      throw SingularityError(std::string("update_u: ") + e.what(), i);
    }
    try {
      const Var y = tape.hermitian_solve(tape.sum(others), own);
      w_hat[i] = hermitize(tape, tape.add(eye_d, tape.gemm_adj_a(own, y)));
    } catch (const SingularityError& e) {
      throw SingularityError(std::string("update_w_hat: ") + e.what(), i);
    }
  }
}

Var saturate_graph(Tape& tape, Var v_bar, double pmax) {
  const CMatrix& val = tape.value(v_bar);
  if (wmmse::node_power(val) <= pmax) return v_bar;
  const double c = wmmse::saturation_gain(val, pmax);
  return tape.scale(tape.scalar_mul(tape.reciprocal(tape.frob_norm(v_bar)), v_bar), c);
}

}  // namespace

std::vector<Var> forward_graph(Tape& tape, const CsiTensor& h, const ParamVars& p,
                               const ModelParams& params, const NetworkConfig& config,
                               std::size_t K, std::vector<LayerVars>* trace) {
  if (K < 1) throw ConfigError("forward: K must be >= 1");
  require_single_stream(config.d);
  const std::size_t M = config.M, R = config.R, T = config.T;
  const std::size_t G = params.hyper.G, P = params.hyper.P;
  if (h.M() != M || h.R() != R || h.T() != T) {
    throw ShapeError("forward: CSI shape differs from the network config");
  }

  std::vector<std::vector<Var>> hc(M, std::vector<Var>(M));
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = 0; j < M; ++j) hc[i][j] = tape.constant(h.block(i, j));

  // Channel compression, shared by all layers.
  CMatrix flat(M * M, R * T);
  for (std::size_t b = 0; b < M * M; ++b) {
    const auto blk = h.block(b / M, b % M).data();
    for (std::size_t k = 0; k < blk.size(); ++k) flat(b, k) = blk[k];
  }
  const Var raw = tape.gemm(tape.constant(std::move(flat)), tape.reshape(p.omega, R * T, 1));
  const Var s = tape.row_normalize(tape.reshape(raw, M, M), kRowNormEps);
  const Var dg = tape.diag(s);

  const Var eye_t = tape.constant(CMatrix::identity(T));
  const Var mu_eye = tape.scalar_mul(p.mu, eye_t);

  std::vector<Var> v(M, tape.constant(CMatrix(T, 1, wmmse::v_init(config))));
  for (std::size_t k = 0; k < K; ++k) {
    LayerVars lv;
    std::vector<Var> u, w_hat;
    receivers_graph(tape, hc, v, config.sigma, R, u, w_hat);

    const Var q = tape.hconcat(std::vector<Var>{tape.reshape(tape.vconcat(u), M, R),
                                                tape.reshape(tape.vconcat(v), M, T)});
    const Var z = tape.cartesian_relu(tape.add(tape.gemm_adj_b(tape.gemm(dg, q), p.theta11),
                                               tape.gemm_adj_b(tape.gemm(s, q), p.theta12)));
    const Var xi = tape.cartesian_relu(tape.add(tape.gemm_adj_b(tape.gemm(dg, z), p.theta21),
                                                tape.gemm_adj_b(tape.gemm(s, z), p.theta22)));

    std::vector<Var> phi(M), w(M);
    for (std::size_t i = 0; i < M; ++i) {
      const Var w1 = tape.reshape(tape.slice(xi, i, 1, 0, G), G, 1);
      const Var b1 = tape.reshape(tape.slice(xi, i, 1, G, G), G, 1);
      const Var w2 = tape.slice(xi, i, 1, 2 * G, G);
      const Var b2 = tape.slice(xi, i, 1, 3 * G, P - 3 * G);
      const Var hidden = tape.cartesian_relu(tape.add(tape.gemm(w1, w_hat[i]), b1));
      phi[i] = tape.cartesian_relu(tape.add(tape.gemm(w2, hidden), b2));
      w[i] = tape.add(phi[i], w_hat[i]);
    }

    std::vector<Var> v_bar(M), v_next(M);
    for (std::size_t i = 0; i < M; ++i) {
      std::vector<Var> terms;
      terms.reserve(M);
      for (std::size_t j = 0; j < M; ++j) {
        const Var blk = config.v_convention == channel::VConvention::kPaper ? hc[i][j] : hc[j][i];
        const Var x = tape.gemm_adj_a(blk, u[j]);
        terms.push_back(tape.gemm_adj_b(tape.gemm(x, w[j]), x));
      }
      const Var lhs = tape.add(tape.sum(terms), mu_eye);
      const Var rhs = tape.gemm(tape.gemm_adj_a(hc[i][i], u[i]), w[i]);
      try {
        v_bar[i] = tape.solve(lhs, rhs);
      } catch (const SingularityError& err) {
        throw SingularityError(std::string("update_v: ") + err.what(), i);
      }
      v_next[i] = saturate_graph(tape, v_bar[i], config.pmax);
    }

    if (trace) {
      lv.s = s;
      lv.q = q;
      lv.z = z;
      lv.xi = xi;
      lv.u = u;
      lv.w_hat = w_hat;
      lv.phi = phi;
      lv.w = w;
      lv.v_bar = v_bar;
      lv.v = v_next;
      trace->push_back(std::move(lv));
    }
    v = std::move(v_next);
  }
  return v;
}

Var sum_rate_graph(Tape& tape, const CsiTensor& h, std::span<const Var> v,
                   const NetworkConfig& config) {
  const std::size_t M = v.size();
  const Var noise = tape.constant(config.sigma * CMatrix::identity(h.R()));
  std::vector<Var> rates;
  rates.reserve(M);
  for (std::size_t i = 0; i < M; ++i) {
    // Square roots of the receive covariance with and without the signal.
    std::vector<Var> all{noise}, interference{noise};
    for (std::size_t j = 0; j < M; ++j) {
      const Var g = tape.adjoint(tape.gemm(tape.constant(h.block(i, j)), v[j]));
      all.push_back(g);
      if (j != i) interference.push_back(g);
    }
    Var r{};
    try {
      r = tape.sub(tape.logdet_gram(tape.vconcat(all)), tape.logdet_gram(tape.vconcat(interference)));
    } catch (const DomainError&) {
      throw DomainError("sum_rate: interference-plus-noise matrix of node " + std::to_string(i) +
                        " is singular");
    }
    const double a = config.alpha_at(i);
    if (a != 1.0) r = tape.scale(r, a);
    rates.push_back(r);
  }
  return tape.sum(rates);
}

ResidualTable necessary_condition_residual(const std::vector<LayerTrace>& trace, const CsiTensor& h,
                                const ModelParams& params, const NetworkConfig& config,
                                const ResidualOptions& options) {
  ResidualTable table;
  if (trace.empty()) return table;
  require_single_stream(config.d);
  const std::size_t M = h.M();
  const LayerTrace& last = trace.back();
  const cplx mu = options.include_mu ? params.mu : cplx(0.0);

  auto shifted = [&](CMatrix a) {
    for (std::size_t k = 0; k < a.rows(); ++k) a(k, k) += mu;
    return a;
  };

  for (const LayerTrace& layer : trace) {
    std::vector<std::optional<double>> row(M);
    for (std::size_t i = 0; i < M; ++i) {
      const CMatrix a =
          shifted(wmmse::transmit_covariance(h, layer.u, layer.w, i, config.v_convention));
      const CMatrix c =
          shifted(wmmse::transmit_covariance(h, last.u, last.w, i, config.v_convention));
      const CMatrix b_bar = gemm_adj_a(h.block(i, i), last.u[i]);
      CMatrix bracket(h.T(), h.T());
      for (std::size_t j = 0; j < M; ++j) {
        if (j == i) continue;
        const CMatrix x = gemm_adj_a(transmit_block(h, i, j, config.v_convention), layer.u[j]);
        const cplx coef = last.w[j][0] * layer.phi[i][0] - last.w[i][0] * layer.phi[j][0];
        bracket += coef * gemm_adj_b(x, x);
      }
      try {
        const CMatrix left = linalg::solve(a, bracket);
        const CMatrix right = linalg::solve(c, b_bar);
        row[i] = linalg::frob_norm(gemm(left, right));
      } catch (const SingularityError&) {
        row[i] = std::nullopt;
      }
    }
    table.push_back(std::move(row));
  }
  return table;
}

}  // namespace uwmmse::model
