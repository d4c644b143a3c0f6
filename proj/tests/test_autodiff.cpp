#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "uwmmse/autodiff.hpp"

using namespace uwmmse;
using namespace uwmmse::ad;

namespace {

// Re tr(C^H x) with a fixed random C: a real scalar that touches every entry.
Var probe(Tape& t, Var x) {
  std::mt19937_64 rng(77);
  const CMatrix& v = t.value(x);
  const Var c = t.constant(test::random_matrix(rng, v.rows(), v.cols()));
  return t.real_part(t.trace(t.gemm_adj_a(c, x)));
}

double worst_fraction(const Program& p, std::vector<CMatrix> params) {
  GradientCheckOptions o;
  return check_gradients(p, params, o).fraction_within(1e-5);
}

}  // namespace

TEST_CASE("gradient of a linear probe is the probe matrix") {
  std::mt19937_64 rng(1);
  const CMatrix c = test::random_matrix(rng, 3, 2);
  Tape t;
  const Var x = t.parameter(test::random_matrix(rng, 3, 2), 0);
  const Var l = t.real_part(t.trace(t.gemm_adj_a(t.constant(c), x)));
  const auto g = t.backward(l);
  CHECK(linalg::max_abs_diff(g.blocks.at(0), c) < 1e-15);
}

TEST_CASE("gradient of the Frobenius norm is x / ||x||") {
  std::mt19937_64 rng(2);
  const CMatrix x0 = test::random_matrix(rng, 2, 3);
  Tape t;
  const Var x = t.parameter(x0, 0);
  const auto g = t.backward(t.frob_norm(x));
  CHECK(linalg::max_abs_diff(g.blocks.at(0), (1.0 / linalg::frob_norm(x0)) * x0) < 1e-15);
}

TEST_CASE("every primitive agrees with central differences") {
  std::mt19937_64 rng(4);
  auto rnd = [&](std::size_t r, std::size_t c) { return test::random_matrix(rng, r, c); };
  const CMatrix eye3 = CMatrix::identity(3);

  struct Case {
    const char* name;
    Program program;
    std::vector<CMatrix> params;
  };
  const std::vector<Case> cases{
      {"add", [](Tape& t, auto v) { return probe(t, t.add(v[0], v[1])); }, {rnd(3, 2), rnd(3, 2)}},
      {"sub", [](Tape& t, auto v) { return probe(t, t.sub(v[0], v[1])); }, {rnd(3, 2), rnd(3, 2)}},
      {"sum",
       [](Tape& t, auto v) { return probe(t, t.sum(std::vector<Var>{v[0], v[1], v[0]})); },
       {rnd(3, 2), rnd(3, 2)}},
      {"scale", [](Tape& t, auto v) { return probe(t, t.scale(v[0], {0.3, 2.0})); }, {rnd(3, 2)}},
      {"scalar_mul", [](Tape& t, auto v) { return probe(t, t.scalar_mul(v[0], v[1])); },
       {rnd(1, 1), rnd(3, 2)}},
      {"gemm", [](Tape& t, auto v) { return probe(t, t.gemm(v[0], v[1])); }, {rnd(3, 2), rnd(2, 4)}},
      {"gemm_adj_a", [](Tape& t, auto v) { return probe(t, t.gemm_adj_a(v[0], v[1])); },
       {rnd(3, 2), rnd(3, 4)}},
      {"gemm_adj_b", [](Tape& t, auto v) { return probe(t, t.gemm_adj_b(v[0], v[1])); },
       {rnd(3, 2), rnd(4, 2)}},
      {"gemm_adj_b shared input", [](Tape& t, auto v) { return probe(t, t.gemm_adj_b(v[0], v[0])); },
       {rnd(3, 2)}},
      {"adjoint", [](Tape& t, auto v) { return probe(t, t.adjoint(v[0])); }, {rnd(3, 2)}},
      {"solve", [](Tape& t, auto v) { return probe(t, t.solve(v[0], v[1])); },
       {test::random_hpd(rng, 3) + rnd(3, 3), rnd(3, 2)}},
      {"hermitian_solve",
       [eye3](Tape& t, auto v) {
         const Var a = t.add(t.gemm_adj_b(v[0], v[0]), t.constant(eye3));
         return probe(t, t.hermitian_solve(a, v[1]));
       },
       {rnd(3, 3), rnd(3, 2)}},
      {"frob_norm", [](Tape& t, auto v) { return t.frob_norm(v[0]); }, {rnd(3, 2)}},
      {"logdet_cap",
       [eye3](Tape& t, auto v) {
         return t.logdet_cap(t.add(t.gemm_adj_b(v[0], v[0]), t.constant(eye3)));
       },
       {rnd(3, 3)}},
      {"logdet_gram", [](Tape& t, auto v) { return t.logdet_gram(v[0]); }, {rnd(5, 3)}},
      {"cartesian_relu", [](Tape& t, auto v) { return probe(t, t.cartesian_relu(v[0])); },
       {rnd(3, 2)}},
      {"reciprocal", [](Tape& t, auto v) { return probe(t, t.reciprocal(v[0])); }, {rnd(3, 2)}},
      {"hconcat", [](Tape& t, auto v) { return probe(t, t.hconcat(std::vector<Var>{v[0], v[1]})); },
       {rnd(3, 2), rnd(3, 4)}},
      {"vconcat", [](Tape& t, auto v) { return probe(t, t.vconcat(std::vector<Var>{v[0], v[1]})); },
       {rnd(3, 2), rnd(1, 2)}},
      {"reshape", [](Tape& t, auto v) { return probe(t, t.reshape(v[0], 2, 3)); }, {rnd(3, 2)}},
      {"slice", [](Tape& t, auto v) { return probe(t, t.slice(v[0], 1, 2, 1, 2)); }, {rnd(3, 4)}},
      {"diag", [](Tape& t, auto v) { return probe(t, t.diag(v[0])); }, {rnd(3, 3)}},
      {"row_normalize", [](Tape& t, auto v) { return probe(t, t.row_normalize(v[0], 1e-12)); },
       {rnd(3, 4)}},
      {"trace", [](Tape& t, auto v) { return t.real_part(t.scale(t.trace(v[0]), {0.3, 2.0})); },
       {rnd(3, 3)}},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(worst_fraction(c.program, c.params) == 1.0);
  }
}

TEST_CASE("logdet_gram equals logdet_cap of the Gram matrix") {
  std::mt19937_64 rng(5);
  const CMatrix a = test::random_matrix(rng, 6, 3);
  Tape t;
  const Var x = t.parameter(a, 0);
  const Var root = t.logdet_gram(x);
  const Var gram = t.logdet_cap(t.gemm_adj_a(x, x));
  CHECK(t.value(root)[0].real() == doctest::Approx(t.value(gram)[0].real()).epsilon(1e-13));
  CHECK(linalg::max_abs_diff(t.backward(root).blocks.at(0), t.backward(gram).blocks.at(0)) < 1e-12);
  CHECK_THROWS_AS(t.logdet_gram(t.constant(CMatrix(4, 2))), DomainError);
}

TEST_CASE("tape misuse is reported") {
  Tape t;
  const Var x = t.parameter(CMatrix(2, 2, 1.0), 0);
  CHECK_THROWS_AS((void)t.backward(x), std::logic_error);
  CHECK_THROWS_AS(t.add(x, t.constant(CMatrix(3, 1))), ShapeError);
  const Var in[] = {x};
  CHECK_THROWS_AS(t.record(OpKind::kSlice, in), UnsupportedOpError);
  CHECK(t.kind(t.record(OpKind::kAdjoint, in)) == OpKind::kAdjoint);
  CHECK(t.depends_on_parameters(x));
  CHECK_FALSE(t.depends_on_parameters(t.constant(CMatrix(1, 1))));
}

TEST_CASE("gradients accumulate through reused nodes") {
  // L = Re tr(x + x) = 2 Re tr(x)  =>  dL/dx = 2 I (stacked convention)
  Tape t;
  const Var x = t.parameter(CMatrix(2, 2, cplx(0.5, -1.0)), 0);
  const auto g = t.backward(t.real_part(t.trace(t.add(x, x))));
  CHECK(linalg::max_abs_diff(g.blocks.at(0), 2.0 * CMatrix::identity(2)) < 1e-15);
}

TEST_CASE("check_gradients validates its step") {
  const Program p = [](Tape& t, std::span<const Var> v) { return t.frob_norm(v[0]); };
  std::vector<CMatrix> params{CMatrix(1, 1, 1.0)};
  GradientCheckOptions o;
  o.h = 1e-2;
  CHECK_THROWS_AS(check_gradients(p, params, o), std::invalid_argument);
}
