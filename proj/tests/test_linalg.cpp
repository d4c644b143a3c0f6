#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"
#include "uwmmse/linalg.hpp"

using namespace uwmmse;
using namespace uwmmse::linalg;

namespace {

// Triple-loop product, the oracle for every gemm variant.
CMatrix naive_product(const CMatrix& a, const CMatrix& b) {
  CMatrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j)
      for (std::size_t k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

CMatrix naive_adjoint(const CMatrix& a) {
  CMatrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = std::conj(a(i, j));
  return t;
}

}  // namespace

TEST_CASE("gemm variants match the loop oracle") {
  std::mt19937_64 rng(1);
  const CMatrix a = test::random_matrix(rng, 4, 3);
  const CMatrix b = test::random_matrix(rng, 3, 5);
  const CMatrix c = test::random_matrix(rng, 4, 5);
  const CMatrix d = test::random_matrix(rng, 6, 3);
  CHECK(max_abs_diff(gemm(a, b), naive_product(a, b)) < 1e-13);
  CHECK(max_abs_diff(gemm_adj_a(a, c), naive_product(naive_adjoint(a), c)) < 1e-13);
  CHECK(max_abs_diff(gemm_adj_b(a, d), naive_product(a, naive_adjoint(d))) < 1e-13);
  CHECK(adjoint(a) == naive_adjoint(a));
  CHECK_THROWS_AS(gemm(a, a), ShapeError);
}

TEST_CASE("elementwise helpers") {
  const CMatrix a{{cplx(1, 2), cplx(3, 0)}, {cplx(0, -1), cplx(2, 2)}};
  CHECK(trace(a) == cplx(3, 4));
  CHECK(frob_norm_sq(a) == doctest::Approx(1 + 4 + 9 + 1 + 8));
  CHECK(transpose(a)(0, 1) == cplx(0, -1));
  CHECK(conj(a)(0, 0) == cplx(1, -2));
  CHECK(all_finite(a));
  CMatrix bad = a;
  bad(1, 1) = cplx(std::nan(""), 0);
  CHECK_FALSE(all_finite(bad));
  CHECK(a.reshaped(1, 4)(0, 2) == cplx(0, -1));
  CHECK_THROWS_AS((void)a.reshaped(3, 1), ShapeError);
}

TEST_CASE("Cholesky solves and log-determinants") {
  std::mt19937_64 rng(2);
  const CMatrix a = test::random_hpd(rng, 6);
  const CMatrix b = test::random_matrix(rng, 6, 2);
  const Cholesky ch(a);
  CHECK(max_abs_diff(gemm(a, ch.solve(b)), b) < 1e-11);
  CHECK(max_abs_diff(hermitian_solve(a, b), ch.solve(b)) < 1e-14);

  // det [[2, i], [-i, 2]] = 3
  const CMatrix two{{cplx(2, 0), cplx(0, 1)}, {cplx(0, -1), cplx(2, 0)}};
  CHECK(Cholesky(two).logdet() == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(logdet_cap(two) == doctest::Approx(std::log2(3.0)).epsilon(1e-14));
  CHECK(logdet_cap(CMatrix::diagonal(std::vector<cplx>{2.0, 4.0})) == doctest::Approx(3.0));
}

TEST_CASE("Cholesky rejects singular and indefinite input") {
  const CMatrix singular{{cplx(1, 0), cplx(1, 0)}, {cplx(1, 0), cplx(1, 0)}};
  CHECK_THROWS_AS(Cholesky{singular}, SingularityError);
  const CMatrix indefinite = CMatrix::diagonal(std::vector<cplx>{1.0, -1.0});
  CHECK_THROWS_AS(Cholesky{indefinite}, SingularityError);
  CHECK_THROWS_AS(logdet_cap(indefinite), DomainError);
  CHECK_THROWS_AS(Cholesky{CMatrix(2, 3)}, ShapeError);
}

TEST_CASE("LU solves, adjoint solves and determinants") {
  std::mt19937_64 rng(3);
  const CMatrix a = test::random_matrix(rng, 5, 5);
  const CMatrix b = test::random_matrix(rng, 5, 3);
  const Lu lu(a);
  CHECK(max_abs_diff(gemm(a, lu.solve(b)), b) < 1e-11);
  CHECK(max_abs_diff(gemm_adj_a(a, lu.solve_adjoint(b)), b) < 1e-11);
  CHECK(max_abs_diff(gemm(inverse(a), a), CMatrix::identity(5)) < 1e-11);
  CHECK(max_abs_diff(solve(a, b), lu.solve(b)) < 1e-14);

  const CMatrix small{{cplx(1, 0), cplx(2, 0)}, {cplx(3, 0), cplx(4, 0)}};
  CHECK(std::abs(Lu(small).det() - cplx(-2, 0)) < 1e-14);
  const CMatrix rank1{{cplx(1, 0), cplx(2, 0)}, {cplx(2, 0), cplx(4, 0)}};
  CHECK_THROWS_AS(Lu{rank1}, SingularityError);
}

TEST_CASE("Gram log-determinant from the QR factor") {
  std::mt19937_64 rng(5);
  const CMatrix a = test::random_matrix(rng, 7, 3);
  CHECK(logdet_gram(a) == doctest::Approx(Cholesky(gemm_adj_a(a, a)).logdet()).epsilon(1e-13));
  // Scaled identity on top of one strong row: det = s^4 (s^2 + 1e6) with s = 1e-7.
  const double s = 1e-7;
  CMatrix b(3, 2);
  b(0, 0) = s;
  b(1, 1) = s;
  b(2, 0) = 1e3;
  const double exact = 2 * std::log(s) + std::log(s * s + 1e6);
  CHECK(logdet_gram(b) == doctest::Approx(exact).epsilon(1e-14));
  CHECK_THROWS_AS(logdet_gram(CMatrix(3, 2)), SingularityError);
  CHECK_THROWS_AS(logdet_gram(CMatrix(1, 2)), ShapeError);
}

TEST_CASE("Hermitian eigendecomposition") {
  std::mt19937_64 rng(6);
  const CMatrix a = test::random_hpd(rng, 5) - 6.0 * CMatrix::identity(5);
  const HermitianEigen e(a);
  CHECK(std::is_sorted(e.values.begin(), e.values.end()));
  CHECK(max_abs_diff(gemm_adj_a(e.vectors, e.vectors), CMatrix::identity(5)) < 1e-13);
  CMatrix rebuilt = e.vectors;
  for (std::size_t k = 0; k < 5; ++k)
    for (std::size_t i = 0; i < 5; ++i) rebuilt(i, k) *= e.values[k];
  CHECK(max_abs_diff(gemm_adj_b(rebuilt, e.vectors), a) < 1e-12);
  const HermitianEigen two(CMatrix{{cplx(2, 0), cplx(0, 1)}, {cplx(0, -1), cplx(2, 0)}});
  CHECK(two.values[0] == doctest::Approx(1.0));
  CHECK(two.values[1] == doctest::Approx(3.0));
}
