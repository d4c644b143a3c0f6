#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "support.hpp"
#include "uwmmse/model.hpp"

using namespace uwmmse;
using namespace uwmmse::model;

namespace {

cplx crelu(cplx z) { return {std::max(z.real(), 0.0), std::max(z.imag(), 0.0)}; }

struct Fixture {
  channel::ChannelSource src = test::rayleigh_source(6, 21);
  NetworkConfig net = src.config;
  ModelParams params = init_params(net, Hyper::for_network(net), 5);
  CsiTensor h = src.sample(0);
};

}  // namespace

TEST_CASE("parameter counts follow the layout") {
  NetworkConfig net;
  const auto p = init_params(net, Hyper::for_network(net), 0);
  CHECK(p.hyper.Fp == 8);
  CHECK(p.hyper.P == 49);
  const auto c = count_parameters(p);
  CHECK(c.theta == 3648);
  CHECK(c.omega == 15);
  CHECK(c.mu == 1);
  CHECK(c.total == 3664);
  CHECK(p.mu == kMuInit);
  NetworkConfig one = net;
  one.R = one.T = 1;
  CHECK(count_parameters(init_params(one, Hyper::for_network(one), 0)).omega == 1);
  CHECK(count_parameters(init_params(net, Hyper::for_network(net), 0)).total ==
        count_parameters(init_params([&] { auto n = net; n.M = 40; return n; }(),
                                     Hyper::for_network(net), 0)).total);
}

TEST_CASE("initialization is seeded") {
  NetworkConfig net;
  const auto hy = Hyper::for_network(net);
  CHECK(init_params(net, hy, 1) == init_params(net, hy, 1));
  CHECK_FALSE(init_params(net, hy, 1) == init_params(net, hy, 2));
  CHECK(zero_theta(init_params(net, hy, 1)).theta21 == CMatrix(49, 32));
}

TEST_CASE("gamma matches the loop oracle and normalizes rows") {
  Fixture f;
  const CMatrix raw = gamma_raw(f.h, f.params.omega);
  for (std::size_t i = 0; i < f.net.M; ++i)
    for (std::size_t j = 0; j < f.net.M; ++j) {
      cplx acc = 0;
      for (std::size_t p = 0; p < f.net.R; ++p)
        for (std::size_t q = 0; q < f.net.T; ++q) acc += f.params.omega(p, q) * f.h.block(i, j)(p, q);
      CHECK(std::abs(raw(i, j) - acc) < 1e-14);
    }
  const CMatrix s = gamma_transform(f.h, f.params.omega);
  for (std::size_t i = 0; i < f.net.M; ++i) {
    double mass = 0;
    for (std::size_t j = 0; j < f.net.M; ++j) mass += std::abs(s(i, j));
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("gamma is permutation equivariant") {
  Fixture f;
  const std::vector<std::size_t> perm{3, 1, 5, 0, 2, 4};
  const CMatrix s = gamma_transform(f.h, f.params.omega);
  const CMatrix sp = gamma_transform(f.h.permuted(perm), f.params.omega);
  for (std::size_t a = 0; a < 6; ++a)
    for (std::size_t b = 0; b < 6; ++b) CHECK(std::abs(sp(a, b) - s(perm[a], perm[b])) < 1e-14);
}

TEST_CASE("graph convolution matches the loop oracle") {
  Fixture f;
  std::mt19937_64 rng(8);
  const std::size_t M = f.net.M, Fp = f.params.hyper.Fp, F = f.params.hyper.F,
                    P = f.params.hyper.P;
  const CMatrix s = gamma_transform(f.h, f.params.omega);
  const CMatrix q = test::random_matrix(rng, M, Fp);
  const auto out = psi_gcn(s, q, f.params);

  // Z_if = relu(S_ii sum_c q_ic conj(t11_fc) + sum_j S_ij sum_c q_jc conj(t12_fc))
  CMatrix z(M, F);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t k = 0; k < F; ++k) {
      cplx acc = 0;
      for (std::size_t c = 0; c < Fp; ++c) acc += s(i, i) * q(i, c) * std::conj(f.params.theta11(k, c));
      for (std::size_t j = 0; j < M; ++j)
        for (std::size_t c = 0; c < Fp; ++c) acc += s(i, j) * q(j, c) * std::conj(f.params.theta12(k, c));
      z(i, k) = crelu(acc);
    }
  CHECK(linalg::max_abs_diff(out.z, z) < 1e-12);
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t p = 0; p < P; ++p) {
      cplx acc = 0;
      for (std::size_t c = 0; c < F; ++c) acc += s(i, i) * z(i, c) * std::conj(f.params.theta21(p, c));
      for (std::size_t j = 0; j < M; ++j)
        for (std::size_t c = 0; c < F; ++c) acc += s(i, j) * z(j, c) * std::conj(f.params.theta22(p, c));
      CHECK(std::abs(out.xi(i, p) - crelu(acc)) < 1e-12);
    }
}

TEST_CASE("node MLP matches the scalar oracle") {
  std::mt19937_64 rng(9);
  const std::size_t G = 16;
  std::vector<cplx> xi(mlp_parameter_count(G, 1));
  for (auto& x : xi) x = test::random_matrix(rng, 1, 1)[0];
  const auto p = NodeMlpParams::unflatten(xi, G, 1);
  CHECK(p.flatten() == xi);
  const CMatrix w_hat(1, 1, cplx(2.5, -0.3));
  const auto out = phi_mlp(p, w_hat);
  cplx acc = xi[2 * G + G];  // b2
  for (std::size_t g = 0; g < G; ++g) {
    const cplx hidden = crelu(xi[g] * w_hat[0] + xi[G + g]);
    acc += xi[2 * G + g] * hidden;
  }
  CHECK(std::abs(out.phi[0] - crelu(acc)) < 1e-13);
  CHECK(out.w[0] == out.phi[0] + w_hat[0]);
  CHECK_THROWS_AS(NodeMlpParams::unflatten(std::vector<cplx>(5), G, 1), ShapeError);
}

TEST_CASE("features stack U and V and reject d > 1") {
  wmmse::ReceiverSet u(2, CMatrix(3, 1, 1.0));
  wmmse::BeamformerSet v(2, CMatrix(5, 1, 2.0));
  const CMatrix q = build_features(u, v);
  CHECK(q.rows() == 2);
  CHECK(q.cols() == 8);
  CHECK(q(1, 2) == 1.0);
  CHECK(q(1, 3) == 2.0);
  wmmse::ReceiverSet u2(2, CMatrix(3, 2, 1.0));
  wmmse::BeamformerSet v2(2, CMatrix(5, 2, 1.0));
  CHECK_THROWS_AS(build_features(u2, v2), ConfigError);
}

TEST_CASE("beta saturation is idempotent and feasible") {
  std::mt19937_64 rng(10);
  wmmse::BeamformerSet v;
  for (int i = 0; i < 20; ++i) v.nodes.push_back(4.0 * test::random_matrix(rng, 5, 1));
  const auto b = beta_saturate(v, 1.0);
  CHECK(beta_saturate(b, 1.0) == b);
  for (const auto& x : b) CHECK(wmmse::node_power(x) <= 1.0);
}

TEST_CASE("zero theta reduces to pinned truncated WMMSE layer by layer") {
  Fixture f;
  const auto p0 = zero_theta(f.params);
  const auto fw = forward(f.h, p0, f.net, 3, true);
  const auto ref = wmmse::run_pinned(f.h, f.net, 3, p0.mu);
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < f.net.M; ++i) {
      CHECK(fw.layers[k].phi[i][0] == cplx(0.0));
      CHECK(linalg::max_abs_diff(fw.layers[k].v[i], ref[k].v[i]) <= 1e-10);
      CHECK(linalg::max_abs_diff(fw.layers[k].w[i], ref[k].w_hat[i]) <= 1e-10);
    }
  }
}

TEST_CASE("tape forward equals the value forward") {
  Fixture f;
  const auto fw = forward(f.h, f.params, f.net, 3);
  ad::Tape tape;
  const auto pv = bind_parameters(tape, f.params);
  const auto v = forward_graph(tape, f.h, pv, f.params, f.net, 3);
  for (std::size_t i = 0; i < f.net.M; ++i) CHECK(linalg::max_abs_diff(tape.value(v[i]), fw.v[i]) < 1e-12);
  const auto r = sum_rate_graph(tape, f.h, v, f.net);
  CHECK(tape.value(r)[0].real() ==
        doctest::Approx(wmmse::sum_rate(f.h, fw.v, f.net.sigma)).epsilon(1e-12));
}

TEST_CASE("forward is permutation equivariant and feasible at every layer") {
  Fixture f;
  std::mt19937_64 rng(12);
  std::vector<std::size_t> perm(f.net.M);
  for (int t = 0; t < 5; ++t) {
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto h = f.src.sample(static_cast<std::uint64_t>(t));
    const auto a = forward(h, f.params, f.net, 3, true);
    const auto b = forward(h.permuted(perm), f.params, f.net, 3);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < f.net.M; ++i) {
      num += linalg::frob_norm_sq(b.v[i] - a.v[perm[i]]);
      den += linalg::frob_norm_sq(a.v[i]);
    }
    CHECK(std::sqrt(num / den) <= 1e-6);
    for (const auto& layer : a.layers)
      for (const auto& vi : layer.v) CHECK(wmmse::node_power(vi) <= f.net.pmax * (1 + 1e-9));
  }
}

TEST_CASE("necessary-condition residual vanishes without the correction") {
  Fixture f;
  const auto p0 = zero_theta(f.params);
  const auto fw = forward(f.h, p0, f.net, 4, true);
  const auto table = necessary_condition_residual(fw.layers, f.h, p0, f.net);
  REQUIRE(table.size() == 4);
  for (const auto& row : table)
    for (const auto& r : row) {
      REQUIRE(r.has_value());
      CHECK(*r == 0.0);
    }

  auto one = f.net;
  one.M = 1;
  auto src1 = f.src;
  src1.config = one;
  const auto h1 = src1.sample(0);
  const auto fw1 = forward(h1, f.params, one, 2, true);
  for (const auto& row : necessary_condition_residual(fw1.layers, h1, f.params, one)) CHECK(*row[0] == 0.0);
}

TEST_CASE("forward argument checks") {
  Fixture f;
  CHECK_THROWS_AS(forward(f.h, f.params, f.net, 0), ConfigError);
  auto other = f.net;
  other.M = 5;
  CHECK_THROWS_AS(forward(f.h, f.params, other, 1), ShapeError);
  auto bad = f.params;
  bad.omega = CMatrix(2, 2);
  CHECK_THROWS_AS(bad.validate(f.net), ShapeError);
}
