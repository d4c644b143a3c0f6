#include "uwmmse/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace uwmmse::linalg {

namespace {

std::string dims(const CMatrix& a) {
  return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}

void require_same_shape(const CMatrix& a, const CMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + dims(a) + " vs " +
                     dims(b));
  }
}

}  // namespace

CMatrix::CMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("CMatrix: " + std::to_string(data_.size()) +
                     " entries for shape " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
}

CMatrix::CMatrix(std::initializer_list<std::initializer_list<cplx>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& row : rows) {
    if (row.size() != cols_) throw ShapeError("CMatrix: ragged initializer");
    data_.insert(data_.end(), row.begin(), row.end());
  }
}

CMatrix CMatrix::identity(std::size_t n) {
  CMatrix out(n, n);
  for (std::size_t k = 0; k < n; ++k) out(k, k) = 1.0;
  return out;
}

CMatrix CMatrix::diagonal(std::span<const cplx> values) {
  CMatrix out(values.size(), values.size());
  for (std::size_t k = 0; k < values.size(); ++k) out(k, k) = values[k];
  return out;
}

CMatrix CMatrix::reshaped(std::size_t rows, std::size_t cols) const {
  if (rows * cols != size()) {
    throw ShapeError("reshape: cannot view " + dims(*this) + " as " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  return CMatrix(rows, cols, data_);
}

CMatrix& CMatrix::operator+=(const CMatrix& other) {
  require_same_shape(*this, other, "add");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += other.data_[k];
  return *this;
}

CMatrix& CMatrix::operator-=(const CMatrix& other) {
  require_same_shape(*this, other, "sub");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= other.data_[k];
  return *this;
}

CMatrix& CMatrix::operator*=(cplx s) {
  for (auto& x : data_) x *= s;
  return *this;
}

CMatrix operator+(CMatrix a, const CMatrix& b) { return a += b; }
CMatrix operator-(CMatrix a, const CMatrix& b) { return a -= b; }
CMatrix operator*(cplx s, CMatrix a) { return a *= s; }
CMatrix operator*(CMatrix a, cplx s) { return a *= s; }

CMatrix gemm(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("gemm: " + dims(a) + " x " + dims(b));
  }
  CMatrix c(a.rows(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    cplx* crow = &c(i, 0);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      const cplx* brow = &b(k, 0);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

CMatrix gemm_adj_a(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("gemm_adj_a: (" + dims(a) + ")^H x " + dims(b));
  }
  CMatrix c(a.cols(), b.cols());
  const std::size_t n = b.cols();
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const cplx* brow = &b(k, 0);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const cplx aki = std::conj(a(k, i));
      cplx* crow = &c(i, 0);
      for (std::size_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

CMatrix gemm_adj_b(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("gemm_adj_b: " + dims(a) + " x (" + dims(b) + ")^H");
  }
  CMatrix c(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const cplx* arow = &a(i, 0);
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const cplx* brow = &b(j, 0);
      cplx acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * std::conj(brow[k]);
      c(i, j) = acc;
    }
  }
  return c;
}

CMatrix adjoint(const CMatrix& a) {
  CMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = std::conj(a(i, j));
  return out;
}

CMatrix transpose(const CMatrix& a) {
  CMatrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

CMatrix conj(const CMatrix& a) {
  CMatrix out = a;
  for (auto& x : out.data()) x = std::conj(x);
  return out;
}

cplx trace(const CMatrix& a) {
  if (!a.is_square()) throw ShapeError("trace: non-square " + dims(a));
  cplx t = 0.0;
  for (std::size_t k = 0; k < a.rows(); ++k) t += a(k, k);
  return t;
}

double frob_norm_sq(const CMatrix& a) {
  double s = 0.0;
  for (const auto& x : a.data()) s += std::norm(x);
  return s;
}

double frob_norm(const CMatrix& a) { return std::sqrt(frob_norm_sq(a)); }

bool all_finite(const CMatrix& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](const cplx& x) {
    return std::isfinite(x.real()) && std::isfinite(x.imag());
  });
}

double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

// ---------------------------------------------------------------- Cholesky

Cholesky::Cholesky(const CMatrix& a) : n_(a.rows()), perm_(a.rows()), l_(a.rows(), a.rows()) {
  if (!a.is_square()) throw ShapeError("cholesky: non-square " + dims(a));
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});

  CMatrix w = a;
  double max_diag = 0.0;
  for (std::size_t k = 0; k < n_; ++k) max_diag = std::max(max_diag, w(k, k).real());
  if (n_ > 0 && !(max_diag > 0.0)) throw SingularityError("cholesky: matrix is not positive definite");
  const double tol = kPivotTolerance * max_diag;

  // Right-looking elimination on the lower triangle of w, with w permuted
  // symmetrically in place.
  for (std::size_t k = 0; k < n_; ++k) {
    std::size_t p = k;
    for (std::size_t j = k + 1; j < n_; ++j)
      if (w(j, j).real() > w(p, p).real()) p = j;
    if (p != k) {
      std::swap(perm_[k], perm_[p]);
      // Swap rows/cols k and p of the Hermitian matrix stored in full.
      for (std::size_t j = 0; j < n_; ++j) std::swap(w(k, j), w(p, j));
      for (std::size_t j = 0; j < n_; ++j) std::swap(w(j, k), w(j, p));
      for (std::size_t j = 0; j < k; ++j) std::swap(l_(k, j), l_(p, j));
    }
    const double pivot = w(k, k).real();
    if (!(pivot > tol) || !std::isfinite(pivot)) {
      throw SingularityError("cholesky: pivot " + std::to_string(pivot) +
                             " below tolerance at step " + std::to_string(k));
    }
    const double lkk = std::sqrt(pivot);
    l_(k, k) = lkk;
    for (std::size_t i = k + 1; i < n_; ++i) l_(i, k) = w(i, k) / lkk;
    for (std::size_t j = k + 1; j < n_; ++j) {
      const cplx ljk = std::conj(l_(j, k));
      for (std::size_t i = j; i < n_; ++i) w(i, j) -= l_(i, k) * ljk;
      w(j, j) = w(j, j).real();
      for (std::size_t i = j + 1; i < n_; ++i) w(j, i) = std::conj(w(i, j));
    }
  }
}

CMatrix Cholesky::solve(const CMatrix& b) const {
  if (b.rows() != n_) throw ShapeError("cholesky solve: rhs " + dims(b));
  const std::size_t m = b.cols();
  CMatrix y(n_, m);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t c = 0; c < m; ++c) y(i, c) = b(perm_[i], c);
  // L y = P b
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const cplx lik = l_(i, k);
      for (std::size_t c = 0; c < m; ++c) y(i, c) -= lik * y(k, c);
    }
    const double d = l_(i, i).real();
    for (std::size_t c = 0; c < m; ++c) y(i, c) /= d;
  }
  // L^H z = y
  for (std::size_t ii = n_; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n_; ++k) {
      const cplx lki = std::conj(l_(k, ii));
      for (std::size_t c = 0; c < m; ++c) y(ii, c) -= lki * y(k, c);
    }
    const double d = l_(ii, ii).real();
    for (std::size_t c = 0; c < m; ++c) y(ii, c) /= d;
  }
  CMatrix x(n_, m);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t c = 0; c < m; ++c) x(perm_[i], c) = y(i, c);
  return x;
}

double Cholesky::logdet() const {
  double s = 0.0;
  for (std::size_t k = 0; k < n_; ++k) s += std::log(l_(k, k).real());
  return 2.0 * s;
}

// ---------------------------------------------------------------- LU

Lu::Lu(const CMatrix& a) : n_(a.rows()), perm_(a.rows()), lu_(a) {
  if (!a.is_square()) throw ShapeError("lu: non-square " + dims(a));
  std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  double scale = 0.0;
  for (const auto& x : a.data()) scale = std::max(scale, std::abs(x));
  if (n_ > 0 && !(scale > 0.0)) throw SingularityError("lu: zero matrix");
  const double tol = kPivotTolerance * scale;

  for (std::size_t k = 0; k < n_; ++k) {
    std::size_t p = k;
    double best = std::abs(lu_(k, k));
    for (std::size_t i = k + 1; i < n_; ++i) {
      const double v = std::abs(lu_(i, k));
      if (v > best) {
        best = v;
        p = i;
      }
    }
    if (!(best > tol) || !std::isfinite(best)) {
      throw SingularityError("lu: pivot below tolerance at step " + std::to_string(k));
    }
    if (p != k) {
      std::swap(perm_[k], perm_[p]);
      for (std::size_t j = 0; j < n_; ++j) std::swap(lu_(k, j), lu_(p, j));
      sign_ = -sign_;
    }
    const cplx inv_pivot = 1.0 / lu_(k, k);
    for (std::size_t i = k + 1; i < n_; ++i) {
      const cplx f = lu_(i, k) * inv_pivot;
      lu_(i, k) = f;
      for (std::size_t j = k + 1; j < n_; ++j) lu_(i, j) -= f * lu_(k, j);
    }
  }
}

CMatrix Lu::solve(const CMatrix& b) const {
  if (b.rows() != n_) throw ShapeError("lu solve: rhs " + dims(b));
  const std::size_t m = b.cols();
  CMatrix y(n_, m);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t c = 0; c < m; ++c) y(i, c) = b(perm_[i], c);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t k = 0; k < i; ++k) {
      const cplx f = lu_(i, k);
      for (std::size_t c = 0; c < m; ++c) y(i, c) -= f * y(k, c);
    }
  for (std::size_t ii = n_; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n_; ++k) {
      const cplx f = lu_(ii, k);
      for (std::size_t c = 0; c < m; ++c) y(ii, c) -= f * y(k, c);
    }
    const cplx d = lu_(ii, ii);
    for (std::size_t c = 0; c < m; ++c) y(ii, c) /= d;
  }
  return y;
}

CMatrix Lu::solve_adjoint(const CMatrix& b) const {
  // A = P^T L U, so A^H = U^H L^H P.
  if (b.rows() != n_) throw ShapeError("lu solve_adjoint: rhs " + dims(b));
  const std::size_t m = b.cols();
  CMatrix y = b;
  for (std::size_t i = 0; i < n_; ++i) {  // U^H is lower triangular
    for (std::size_t k = 0; k < i; ++k) {
      const cplx f = std::conj(lu_(k, i));
      for (std::size_t c = 0; c < m; ++c) y(i, c) -= f * y(k, c);
    }
    const cplx d = std::conj(lu_(i, i));
    for (std::size_t c = 0; c < m; ++c) y(i, c) /= d;
  }
  for (std::size_t ii = n_; ii-- > 0;) {  // L^H is unit upper triangular
    for (std::size_t k = ii + 1; k < n_; ++k) {
      const cplx f = std::conj(lu_(k, ii));
      for (std::size_t c = 0; c < m; ++c) y(ii, c) -= f * y(k, c);
    }
  }
  CMatrix x(n_, m);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t c = 0; c < m; ++c) x(perm_[i], c) = y(i, c);
  return x;
}

cplx Lu::det() const {
  cplx d = static_cast<double>(sign_);
  for (std::size_t k = 0; k < n_; ++k) d *= lu_(k, k);
  return d;
}

CMatrix hermitian_solve(const CMatrix& a, const CMatrix& b) { return Cholesky(a).solve(b); }

CMatrix solve(const CMatrix& a, const CMatrix& b) { return Lu(a).solve(b); }

CMatrix inverse(const CMatrix& a) { return Lu(a).solve(CMatrix::identity(a.rows())); }

double logdet_cap(const CMatrix& a) {
  try {
    return Cholesky(a).logdet() / std::log(2.0);
  } catch (const SingularityError& e) {
    throw DomainError(std::string("logdet_cap: matrix is not Hermitian positive definite: ") +
                      e.what());
  }
}

HermitianEigen::HermitianEigen(const CMatrix& input) {
  const std::size_t n = input.rows();
  if (input.cols() != n) throw ShapeError("eigen: matrix must be square, got " + dims(input));
  if (!all_finite(input)) throw DomainError("eigen: non-finite input");
  CMatrix a = cplx(0.5) * (input + adjoint(input));
  CMatrix q = CMatrix::identity(n);
  auto off = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) s += std::norm(a(i, j));
    return s;
  };
  const double scale = frob_norm_sq(a);
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps && off() > 1e-34 * scale; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t r = p + 1; r < n; ++r) {
        const double mag = std::abs(a(p, r));
        if (mag == 0.0) continue;
        // With a_pr = |a_pr| e^{i phi}, J = diag(1, e^{-i phi}) G makes the
        // pair real symmetric and G is the classical rotation zeroing it.
        const cplx ph = a(p, r) / mag;
        const double theta = (a(r, r).real() - a(p, p).real()) / (2.0 * mag);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const cplx jpp = c, jpr = s, jrp = -s * std::conj(ph), jrr = c * std::conj(ph);
        for (std::size_t k = 0; k < n; ++k) {  // A J and Q J
          const cplx akp = a(k, p), akr = a(k, r);
          a(k, p) = akp * jpp + akr * jrp;
          a(k, r) = akp * jpr + akr * jrr;
          const cplx qkp = q(k, p), qkr = q(k, r);
          q(k, p) = qkp * jpp + qkr * jrp;
          q(k, r) = qkp * jpr + qkr * jrr;
        }
        for (std::size_t k = 0; k < n; ++k) {  // J^H (A J)
          const cplx apk = a(p, k), ark = a(r, k);
          a(p, k) = std::conj(jpp) * apk + std::conj(jrp) * ark;
          a(r, k) = std::conj(jpr) * apk + std::conj(jrr) * ark;
        }
        a(p, r) = a(r, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(r, r) = a(r, r).real();
      }
    }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a(x, x).real() < a(y, y).real(); });
  values.resize(n);
  vectors = CMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    values[k] = a(order[k], order[k]).real();
    for (std::size_t i = 0; i < n; ++i) vectors(i, k) = q(i, order[k]);
  }
}

QrGram::QrGram(CMatrix a) : n_(a.cols()), r_(a.cols(), a.cols()) {
  const std::size_t m = a.rows(), n = n_;
  if (m < n) throw ShapeError("qr: need rows >= cols, got " + dims(a));
  for (std::size_t k = 0; k < n; ++k) {
    double norm_sq = 0.0;
    for (std::size_t r = k; r < m; ++r) norm_sq += std::norm(a(r, k));
    const double norm = std::sqrt(norm_sq);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      throw SingularityError("qr: column " + std::to_string(k) + " is dependent or not finite");
    }
    // Reflector v = x - alpha e1 with alpha = -phase(x0) |x| maps x to alpha e1.
    const cplx x0 = a(k, k);
    const cplx phase = std::abs(x0) > 0.0 ? x0 / std::abs(x0) : cplx(1.0);
    const cplx alpha = -phase * norm;
    r_(k, k) = alpha;
    a(k, k) = x0 - alpha;
    const double vnorm_sq = norm_sq - std::norm(x0) + std::norm(a(k, k));
    for (std::size_t c = k + 1; c < n; ++c) {
      cplx dot = 0.0;
      for (std::size_t r = k; r < m; ++r) dot += std::conj(a(r, k)) * a(r, c);
      const cplx f = 2.0 * dot / vnorm_sq;
      for (std::size_t r = k; r < m; ++r) a(r, c) -= f * a(r, k);
      r_(k, c) = a(k, c);
    }
  }
}

CMatrix QrGram::solve(const CMatrix& b) const {
  if (b.rows() != n_) throw ShapeError("qr solve: rhs " + dims(b));
  CMatrix y = b;
  const std::size_t m = b.cols();
  // R^H y = b
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      const cplx rki = std::conj(r_(k, i));
      for (std::size_t c = 0; c < m; ++c) y(i, c) -= rki * y(k, c);
    }
    const cplx d = std::conj(r_(i, i));
    for (std::size_t c = 0; c < m; ++c) y(i, c) /= d;
  }
  // R x = y
  for (std::size_t ii = n_; ii-- > 0;) {
    for (std::size_t k = ii + 1; k < n_; ++k) {
      const cplx rik = r_(ii, k);
      for (std::size_t c = 0; c < m; ++c) y(ii, c) -= rik * y(k, c);
    }
    const cplx d = r_(ii, ii);
    for (std::size_t c = 0; c < m; ++c) y(ii, c) /= d;
  }
  return y;
}

double QrGram::logdet() const {
  double total = 0.0;
  for (std::size_t k = 0; k < n_; ++k) total += 2.0 * std::log(std::abs(r_(k, k)));
  return total;
}

double logdet_gram(CMatrix a) { return QrGram(std::move(a)).logdet(); }

}  // namespace uwmmse::linalg
