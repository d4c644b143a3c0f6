#pragma once

// Small dense complex-matrix kernel. Matrices here are at most ~100x100, so
// everything is a straightforward row-major loop nest in double precision.

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "uwmmse/errors.hpp"

namespace uwmmse::linalg {

using cplx = std::complex<double>;

class CMatrix {
 public:
  CMatrix() = default;
  CMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols) {}
  CMatrix(std::size_t rows, std::size_t cols, cplx fill)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  CMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> data);
  CMatrix(std::initializer_list<std::initializer_list<cplx>> rows);

  static CMatrix identity(std::size_t n);
  static CMatrix scalar(cplx value) { return CMatrix(1, 1, value); }
  static CMatrix diagonal(std::span<const cplx> values);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] std::size_t size() const { return data_.size(); }
  [[nodiscard]] bool empty() const { return data_.empty(); }
  [[nodiscard]] bool is_square() const { return rows_ == cols_; }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }
  cplx& operator[](std::size_t k) { return data_[k]; }
  const cplx& operator[](std::size_t k) const { return data_[k]; }

  [[nodiscard]] std::span<cplx> data() { return data_; }
  [[nodiscard]] std::span<const cplx> data() const { return data_; }
  [[nodiscard]] const std::vector<cplx>& values() const { return data_; }

  // Row-major reinterpretation; element count must match.
  [[nodiscard]] CMatrix reshaped(std::size_t rows, std::size_t cols) const;

  CMatrix& operator+=(const CMatrix& other);
  CMatrix& operator-=(const CMatrix& other);
  CMatrix& operator*=(cplx s);

  friend bool operator==(const CMatrix&, const CMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

CMatrix operator+(CMatrix a, const CMatrix& b);
CMatrix operator-(CMatrix a, const CMatrix& b);
CMatrix operator*(cplx s, CMatrix a);
CMatrix operator*(CMatrix a, cplx s);

// Relative tolerance on pivots, measured against the largest diagonal entry
// (Cholesky) or the largest entry magnitude (LU).
inline constexpr double kPivotTolerance = 1e-12;

CMatrix gemm(const CMatrix& a, const CMatrix& b);
// a^H b and a b^H without materializing the adjoint.
CMatrix gemm_adj_a(const CMatrix& a, const CMatrix& b);
CMatrix gemm_adj_b(const CMatrix& a, const CMatrix& b);

CMatrix adjoint(const CMatrix& a);
CMatrix transpose(const CMatrix& a);
CMatrix conj(const CMatrix& a);

cplx trace(const CMatrix& a);
double frob_norm(const CMatrix& a);
double frob_norm_sq(const CMatrix& a);
bool all_finite(const CMatrix& a);
double max_abs_diff(const CMatrix& a, const CMatrix& b);

// Cholesky factorization with symmetric (diagonal) pivoting:
//   P A P^T = L L^H.
// Only the lower triangle of the permuted input is read, so the input must be
// Hermitian up to rounding.
class Cholesky {
 public:
  // Throws SingularityError when the next pivot falls below
  // kPivotTolerance * max diagonal, or the matrix is not positive.
  explicit Cholesky(const CMatrix& a);

  [[nodiscard]] std::size_t dim() const { return n_; }
  [[nodiscard]] CMatrix solve(const CMatrix& b) const;
  // Natural log of det(A).
  [[nodiscard]] double logdet() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> perm_;  // row k of P A P^T is row perm_[k] of A
  CMatrix l_;
};

// A = Q diag(lambda) Q^H for Hermitian A by cyclic Jacobi rotations.
// Eigenvalues ascend; Q is unitary.
struct HermitianEigen {
  std::vector<double> values;
  CMatrix vectors;

  explicit HermitianEigen(const CMatrix& a);
};

// Householder QR of a tall A (rows >= cols), kept for the Gram matrix
// A^H A = R^H R. Working from A instead of A^H A halves the condition number
// that enters the factorization. SingularityError if a column is exactly
// dependent on the previous ones or the input is not finite.
class QrGram {
 public:
  explicit QrGram(CMatrix a);

  [[nodiscard]] std::size_t dim() const { return n_; }
  [[nodiscard]] const CMatrix& r() const { return r_; }
  // Solves (A^H A) X = B.
  [[nodiscard]] CMatrix solve(const CMatrix& b) const;
  // ln det(A^H A).
  [[nodiscard]] double logdet() const;

 private:
  std::size_t n_ = 0;
  CMatrix r_;
};

// LU factorization with partial pivoting, P A = L U, for general square A.
class Lu {
 public:
  explicit Lu(const CMatrix& a);

  [[nodiscard]] std::size_t dim() const { return n_; }
  [[nodiscard]] CMatrix solve(const CMatrix& b) const;
  // Solves A^H X = B with the same factors.
  [[nodiscard]] CMatrix solve_adjoint(const CMatrix& b) const;
  [[nodiscard]] cplx det() const;

 private:
  std::size_t n_ = 0;
  std::vector<std::size_t> perm_;
  int sign_ = 1;
  CMatrix lu_;
};

// Solves A X = B for Hermitian positive definite A.
CMatrix hermitian_solve(const CMatrix& a, const CMatrix& b);
// Solves A X = B for general square A.
CMatrix solve(const CMatrix& a, const CMatrix& b);
CMatrix inverse(const CMatrix& a);
// log2 det(A) for Hermitian positive definite A; DomainError otherwise.
double logdet_cap(const CMatrix& a);

// ln det(A^H A) for A with rows >= cols, through QrGram. The Gram matrix is
// never formed, so small singular values of A keep their relative accuracy.
double logdet_gram(CMatrix a);

}  // namespace uwmmse::linalg

namespace uwmmse {
using linalg::CMatrix;
using linalg::cplx;
}  // namespace uwmmse
