#include "uwmmse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace uwmmse::ad {

using linalg::Cholesky;
using linalg::Lu;

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::kConstant: return "constant";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kSum: return "sum";
    case OpKind::kScale: return "scale";
    case OpKind::kScalarMul: return "scalar_mul";
    case OpKind::kGemm: return "gemm";
    case OpKind::kGemmAdjA: return "gemm_adj_a";
    case OpKind::kGemmAdjB: return "gemm_adj_b";
    case OpKind::kAdjoint: return "adjoint";
    case OpKind::kHermitianSolve: return "hermitian_solve";
    case OpKind::kSolve: return "solve";
    case OpKind::kFrobNorm: return "frob_norm";
    case OpKind::kLogDet: return "logdet_cap";
    case OpKind::kLogDetGram: return "logdet_gram";
    case OpKind::kCartesianRelu: return "cartesian_relu";
    case OpKind::kTrace: return "trace";
    case OpKind::kRealPart: return "real_part";
    case OpKind::kReciprocal: return "reciprocal";
    case OpKind::kHConcat: return "hconcat";
    case OpKind::kVConcat: return "vconcat";
    case OpKind::kReshape: return "reshape";
    case OpKind::kSlice: return "slice";
    case OpKind::kDiag: return "diag";
    case OpKind::kRowNormalize: return "row_normalize";
    case OpKind::kCount_: break;
  }
  return "unknown";
}

// ------------------------------------------------------------ GradientSet

GradientSet& GradientSet::operator+=(const GradientSet& other) {
  if (blocks.size() < other.blocks.size()) blocks.resize(other.blocks.size());
  for (std::size_t k = 0; k < other.blocks.size(); ++k) {
    if (other.blocks[k].empty()) continue;
    if (blocks[k].empty()) {
      blocks[k] = other.blocks[k];
    } else {
      blocks[k] += other.blocks[k];
    }
  }
  return *this;
}

GradientSet& GradientSet::operator*=(double s) {
  for (auto& b : blocks) b *= s;
  return *this;
}

bool GradientSet::all_finite() const {
  return std::all_of(blocks.begin(), blocks.end(),
                     [](const CMatrix& b) { return linalg::all_finite(b); });
}

double GradientSet::norm() const {
  double s = 0.0;
  for (const auto& b : blocks) s += linalg::frob_norm_sq(b);
  return std::sqrt(s);
}

// ------------------------------------------------------------ Tape

Var Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("Var does not belong to this tape");
}

const Tape::Node& Tape::node(Var v) const {
  check(v);
  return nodes_[v.id];
}

Var Tape::constant(CMatrix value) {
  Node n;
  n.op = OpKind::kConstant;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::parameter(CMatrix value, std::size_t slot) {
  Node n;
  n.op = OpKind::kParameter;
  n.needs_grad = true;
  n.i0 = slot;
  n.value = std::move(value);
  slots_ = std::max(slots_, slot + 1);
  return push(std::move(n));
}

namespace {

bool any_grad(std::initializer_list<bool> flags) {
  return std::any_of(flags.begin(), flags.end(), [](bool f) { return f; });
}

}  // namespace

#define UWMMSE_BINARY(kind, expr)                                   \
  const Node& na = node(a);                                         \
  const Node& nb = node(b);                                         \
  Node n;                                                           \
  n.op = kind;                                                      \
  n.a = a.id;                                                       \
  n.b = b.id;                                                       \
  n.needs_grad = any_grad({na.needs_grad, nb.needs_grad});          \
  n.value = (expr);                                                 \
  return push(std::move(n))

Var Tape::unary(OpKind kind, Var a, CMatrix value) {
  Node n;
  n.op = kind;
  n.a = a.id;
  n.needs_grad = node(a).needs_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) { UWMMSE_BINARY(OpKind::kAdd, na.value + nb.value); }
Var Tape::sub(Var a, Var b) { UWMMSE_BINARY(OpKind::kSub, na.value - nb.value); }
Var Tape::gemm(Var a, Var b) { UWMMSE_BINARY(OpKind::kGemm, linalg::gemm(na.value, nb.value)); }
Var Tape::gemm_adj_a(Var a, Var b) {
  UWMMSE_BINARY(OpKind::kGemmAdjA, linalg::gemm_adj_a(na.value, nb.value));
}
Var Tape::gemm_adj_b(Var a, Var b) {
  UWMMSE_BINARY(OpKind::kGemmAdjB, linalg::gemm_adj_b(na.value, nb.value));
}

Var Tape::scalar_mul(Var s, Var a) {
  const Node& ns = node(s);
  const Node& na = node(a);
  if (ns.value.rows() != 1 || ns.value.cols() != 1) {
    throw ShapeError("scalar_mul: scale operand must be 1x1");
  }
  Node n;
  n.op = OpKind::kScalarMul;
  n.a = s.id;
  n.b = a.id;
  n.needs_grad = ns.needs_grad || na.needs_grad;
  n.value = ns.value[0] * na.value;
  return push(std::move(n));
}

Var Tape::sum(std::span<const Var> terms) {
  if (terms.empty()) throw ShapeError("sum: no terms");
  Node n;
  n.op = OpKind::kSum;
  n.value = node(terms[0]).value;
  n.extra.reserve(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k) {
    const Node& t = node(terms[k]);
    if (k > 0) n.value += t.value;
    n.needs_grad = n.needs_grad || t.needs_grad;
    n.extra.push_back(terms[k].id);
  }
  return push(std::move(n));
}

Var Tape::scale(Var a, cplx s) {
  const Node& na = node(a);
  Node n;
  n.op = OpKind::kScale;
  n.a = a.id;
  n.scalar = s;
  n.needs_grad = na.needs_grad;
  n.value = s * na.value;
  return push(std::move(n));
}

Var Tape::adjoint(Var a) { return unary(OpKind::kAdjoint, a, linalg::adjoint(node(a).value)); }

Var Tape::hermitian_solve(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  Cholesky chol(na.value);
  Node n;
  n.op = OpKind::kHermitianSolve;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = chol.solve(nb.value);
  n.i0 = factors_.size();
  factors_.emplace_back(std::move(chol));
  return push(std::move(n));
}

Var Tape::solve(Var a, Var b) {
  const Node& na = node(a);
  const Node& nb = node(b);
  Lu lu(na.value);
  Node n;
  n.op = OpKind::kSolve;
  n.a = a.id;
  n.b = b.id;
  n.needs_grad = na.needs_grad || nb.needs_grad;
  n.value = lu.solve(nb.value);
  n.i0 = factors_.size();
  factors_.emplace_back(std::move(lu));
  return push(std::move(n));
}

Var Tape::frob_norm(Var a) {
  return unary(OpKind::kFrobNorm, a, CMatrix::scalar(linalg::frob_norm(node(a).value)));
}

Var Tape::logdet_cap(Var a) {
  const Node& na = node(a);
  Cholesky chol = [&] {
    try {
      return Cholesky(na.value);
    } catch (const SingularityError& e) {
      throw DomainError(std::string("logdet_cap: matrix is not Hermitian positive definite: ") +
                        e.what());
    }
  }();
  Node n;
  n.op = OpKind::kLogDet;
  n.a = a.id;
  n.needs_grad = na.needs_grad;
  n.value = CMatrix::scalar(chol.logdet() / std::log(2.0));
  n.i0 = factors_.size();
  factors_.emplace_back(std::move(chol));
  return push(std::move(n));
}

Var Tape::logdet_gram(Var a) {
  const Node& na = node(a);
  linalg::QrGram qr = [&] {
    try {
      return linalg::QrGram(na.value);
    } catch (const SingularityError& e) {
      throw DomainError(std::string("logdet_gram: factor is rank deficient: ") + e.what());
    }
  }();
  Node n;
  n.op = OpKind::kLogDetGram;
  n.a = a.id;
  n.needs_grad = na.needs_grad;
  n.value = CMatrix::scalar(qr.logdet() / std::log(2.0));
  n.i0 = factors_.size();
  factors_.emplace_back(std::move(qr));
  return push(std::move(n));
}

Var Tape::cartesian_relu(Var a) {
  const Node& na = node(a);
  CMatrix v = na.value;
  for (auto& x : v.data()) x = cplx(std::max(x.real(), 0.0), std::max(x.imag(), 0.0));
  return unary(OpKind::kCartesianRelu, a, std::move(v));
}

Var Tape::trace(Var a) { return unary(OpKind::kTrace, a, CMatrix::scalar(linalg::trace(node(a).value))); }

Var Tape::real_part(Var a) {
  const Node& na = node(a);
  CMatrix v = na.value;
  for (auto& x : v.data()) x = x.real();
  return unary(OpKind::kRealPart, a, std::move(v));
}

Var Tape::reciprocal(Var a) {
  const Node& na = node(a);
  CMatrix v = na.value;
  for (auto& x : v.data()) {
    if (x == cplx(0.0)) throw SingularityError("reciprocal of zero");
    x = 1.0 / x;
  }
  return unary(OpKind::kReciprocal, a, std::move(v));
}

Var Tape::hconcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("hconcat: no parts");
  const std::size_t rows = node(parts[0]).value.rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (node(p).value.rows() != rows) throw ShapeError("hconcat: row counts differ");
    cols += node(p).value.cols();
  }
  Node n;
  n.op = OpKind::kHConcat;
  n.value = CMatrix(rows, cols);
  std::size_t c0 = 0;
  for (Var p : parts) {
    const Node& np = node(p);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < np.value.cols(); ++c) n.value(r, c0 + c) = np.value(r, c);
    c0 += np.value.cols();
    n.needs_grad = n.needs_grad || np.needs_grad;
    n.extra.push_back(p.id);
  }
  return push(std::move(n));
}

Var Tape::vconcat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vconcat: no parts");
  const std::size_t cols = node(parts[0]).value.cols();
  std::size_t rows = 0;
  for (Var p : parts) {
    if (node(p).value.cols() != cols) throw ShapeError("vconcat: column counts differ");
    rows += node(p).value.rows();
  }
  Node n;
  n.op = OpKind::kVConcat;
  std::vector<cplx> data;
  data.reserve(rows * cols);
  for (Var p : parts) {
    const Node& np = node(p);
    data.insert(data.end(), np.value.data().begin(), np.value.data().end());
    n.needs_grad = n.needs_grad || np.needs_grad;
    n.extra.push_back(p.id);
  }
  n.value = CMatrix(rows, cols, std::move(data));
  return push(std::move(n));
}

Var Tape::reshape(Var a, std::size_t rows, std::size_t cols) {
  return unary(OpKind::kReshape, a, node(a).value.reshaped(rows, cols));
}

Var Tape::slice(Var a, std::size_t row0, std::size_t rows, std::size_t col0, std::size_t cols) {
  const Node& na = node(a);
  if (row0 + rows > na.value.rows() || col0 + cols > na.value.cols()) {
    throw ShapeError("slice: block out of range");
  }
  CMatrix v(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) v(r, c) = na.value(row0 + r, col0 + c);
  Node n;
  n.op = OpKind::kSlice;
  n.a = a.id;
  n.i0 = row0;
  n.i1 = col0;
  n.needs_grad = na.needs_grad;
  n.value = std::move(v);
  return push(std::move(n));
}

Var Tape::diag(Var a) {
  const Node& na = node(a);
  if (!na.value.is_square()) throw ShapeError("diag: non-square input");
  CMatrix v(na.value.rows(), na.value.cols());
  for (std::size_t k = 0; k < v.rows(); ++k) v(k, k) = na.value(k, k);
  return unary(OpKind::kDiag, a, std::move(v));
}

Var Tape::row_normalize(Var a, double eps) {
  const Node& na = node(a);
  CMatrix v = na.value;
  for (std::size_t r = 0; r < v.rows(); ++r) {
    double mass = eps;
    for (std::size_t c = 0; c < v.cols(); ++c) mass += std::abs(v(r, c));
    for (std::size_t c = 0; c < v.cols(); ++c) v(r, c) /= mass;
  }
  Node n;
  n.op = OpKind::kRowNormalize;
  n.a = a.id;
  n.scalar = eps;
  n.needs_grad = na.needs_grad;
  n.value = std::move(v);
  return push(std::move(n));
}

#undef UWMMSE_BINARY

Var Tape::record(OpKind op, std::span<const Var> in) {
  auto arity = [&](std::size_t k) {
    if (in.size() != k) {
      throw UnsupportedOpError(std::string(op_name(op)) + " expects " + std::to_string(k) +
                               " inputs");
    }
  };
  switch (op) {
    case OpKind::kAdd: arity(2); return add(in[0], in[1]);
    case OpKind::kSub: arity(2); return sub(in[0], in[1]);
    case OpKind::kGemm: arity(2); return gemm(in[0], in[1]);
    case OpKind::kGemmAdjA: arity(2); return gemm_adj_a(in[0], in[1]);
    case OpKind::kGemmAdjB: arity(2); return gemm_adj_b(in[0], in[1]);
    case OpKind::kScalarMul: arity(2); return scalar_mul(in[0], in[1]);
    case OpKind::kHermitianSolve: arity(2); return hermitian_solve(in[0], in[1]);
    case OpKind::kSolve: arity(2); return solve(in[0], in[1]);
    case OpKind::kAdjoint: arity(1); return adjoint(in[0]);
    case OpKind::kFrobNorm: arity(1); return frob_norm(in[0]);
    case OpKind::kLogDet: arity(1); return logdet_cap(in[0]);
    case OpKind::kLogDetGram: arity(1); return logdet_gram(in[0]);
    case OpKind::kCartesianRelu: arity(1); return cartesian_relu(in[0]);
    case OpKind::kTrace: arity(1); return trace(in[0]);
    case OpKind::kRealPart: arity(1); return real_part(in[0]);
    case OpKind::kReciprocal: arity(1); return reciprocal(in[0]);
    case OpKind::kDiag: arity(1); return diag(in[0]);
    case OpKind::kSum: return sum(in);
    case OpKind::kHConcat: return hconcat(in);
    case OpKind::kVConcat: return vconcat(in);
    default:
      throw UnsupportedOpError(std::string("unsupported primitive for record(): ") +
                               op_name(op));
  }
}

// ------------------------------------------------------------ backward

GradientSet Tape::backward(Var loss, double seed) const {
  const Node& out = node(loss);
  if (out.value.rows() != 1 || out.value.cols() != 1 || out.value[0].imag() != 0.0) {
    throw std::logic_error("backward: loss must be a real 1x1 value");
  }

  GradientSet result;
  result.blocks.resize(slots_);
  if (!out.needs_grad) {
    for (const auto& n : nodes_)
      if (n.op == OpKind::kParameter && result.blocks[n.i0].empty())
        result.blocks[n.i0] = CMatrix(n.value.rows(), n.value.cols());
    return result;
  }

  std::vector<CMatrix> grads(loss.id + 1);
  grads[loss.id] = CMatrix::scalar(seed);

  auto accumulate = [&](std::uint32_t id, CMatrix g) {
    if (!nodes_[id].needs_grad) return;
    if (grads[id].empty()) {
      grads[id] = std::move(g);
    } else {
      grads[id] += g;
    }
  };

  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    const Node& n = nodes_[id];
    if (!n.needs_grad || grads[id].empty()) continue;
    const CMatrix& g = grads[id];

    switch (n.op) {
      case OpKind::kConstant:
        break;
      case OpKind::kParameter: {
        auto& slot = result.blocks[n.i0];
        if (slot.empty()) {
          slot = g;
        } else {
          slot += g;
        }
        break;
      }
      case OpKind::kAdd:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case OpKind::kSub:
        accumulate(n.a, g);
        accumulate(n.b, -1.0 * g);
        break;
      case OpKind::kSum:
        for (auto t : n.extra) accumulate(t, g);
        break;
      case OpKind::kScale:
        accumulate(n.a, std::conj(n.scalar) * g);
        break;
      case OpKind::kScalarMul: {
        const CMatrix& s = nodes_[n.a].value;
        const CMatrix& x = nodes_[n.b].value;
        if (nodes_[n.a].needs_grad) {
          cplx gs = 0.0;
          for (std::size_t k = 0; k < x.size(); ++k) gs += g[k] * std::conj(x[k]);
          accumulate(n.a, CMatrix::scalar(gs));
        }
        accumulate(n.b, std::conj(s[0]) * g);
        break;
      }
      case OpKind::kGemm:
        if (nodes_[n.a].needs_grad) accumulate(n.a, linalg::gemm_adj_b(g, nodes_[n.b].value));
        if (nodes_[n.b].needs_grad) accumulate(n.b, linalg::gemm_adj_a(nodes_[n.a].value, g));
        break;
      case OpKind::kGemmAdjA:  // y = a^H b
        if (nodes_[n.a].needs_grad) accumulate(n.a, linalg::gemm_adj_b(nodes_[n.b].value, g));
        if (nodes_[n.b].needs_grad) accumulate(n.b, linalg::gemm(nodes_[n.a].value, g));
        break;
      case OpKind::kGemmAdjB:  // y = a b^H
        if (nodes_[n.a].needs_grad) accumulate(n.a, linalg::gemm(g, nodes_[n.b].value));
        if (nodes_[n.b].needs_grad) accumulate(n.b, linalg::gemm_adj_a(g, nodes_[n.a].value));
        break;
      case OpKind::kAdjoint:
        accumulate(n.a, linalg::adjoint(g));
        break;
      case OpKind::kHermitianSolve:
      case OpKind::kSolve: {
        // x = A^{-1} b:  g_b = A^{-H} g,  g_A = -g_b x^H.
        const auto& f = factors_[n.i0];
        CMatrix gb = n.op == OpKind::kSolve ? std::get<Lu>(f).solve_adjoint(g)
                                            : std::get<Cholesky>(f).solve(g);
        if (nodes_[n.a].needs_grad) accumulate(n.a, -1.0 * linalg::gemm_adj_b(gb, n.value));
        accumulate(n.b, std::move(gb));
        break;
      }
      case OpKind::kFrobNorm: {
        const double nrm = n.value[0].real();
        if (nrm > 0.0) accumulate(n.a, (g[0].real() / nrm) * nodes_[n.a].value);
        break;
      }
      case OpKind::kLogDet: {
        const auto& chol = std::get<Cholesky>(factors_[n.i0]);
        CMatrix inv = chol.solve(CMatrix::identity(chol.dim()));
        accumulate(n.a, (g[0].real() / std::log(2.0)) * linalg::adjoint(inv));
        break;
      }
      case OpKind::kLogDetGram: {
        // d ln det(A^H A) = 2 Re tr((A^H A)^{-1} A^H dA)
        const auto& qr = std::get<linalg::QrGram>(factors_[n.i0]);
        const CMatrix y = qr.solve(linalg::adjoint(nodes_[n.a].value));
        accumulate(n.a, (2.0 * g[0].real() / std::log(2.0)) * linalg::adjoint(y));
        break;
      }
      case OpKind::kCartesianRelu: {
        const CMatrix& x = nodes_[n.a].value;
        CMatrix ga(x.rows(), x.cols());
        for (std::size_t k = 0; k < x.size(); ++k) {
          ga[k] = cplx(x[k].real() > 0.0 ? g[k].real() : 0.0, x[k].imag() > 0.0 ? g[k].imag() : 0.0);
        }
        accumulate(n.a, std::move(ga));
        break;
      }
      case OpKind::kTrace: {
        const CMatrix& x = nodes_[n.a].value;
        CMatrix ga(x.rows(), x.cols());
        for (std::size_t k = 0; k < x.rows(); ++k) ga(k, k) = g[0];
        accumulate(n.a, std::move(ga));
        break;
      }
      case OpKind::kRealPart: {
        CMatrix ga = g;
        for (auto& x : ga.data()) x = x.real();
        accumulate(n.a, std::move(ga));
        break;
      }
      case OpKind::kReciprocal: {
        const CMatrix& x = nodes_[n.a].value;
        CMatrix ga(x.rows(), x.cols());
        for (std::size_t k = 0; k < x.size(); ++k) {
          const cplx cx = std::conj(x[k]);
          ga[k] = -g[k] / (cx * cx);
        }
        accumulate(n.a, std::move(ga));
        break;
      }
      case OpKind::kHConcat: {
        std::size_t c0 = 0;
        for (auto t : n.extra) {
          const CMatrix& part = nodes_[t].value;
          if (nodes_[t].needs_grad) {
            CMatrix gp(part.rows(), part.cols());
            for (std::size_t r = 0; r < part.rows(); ++r)
              for (std::size_t c = 0; c < part.cols(); ++c) gp(r, c) = g(r, c0 + c);
            accumulate(t, std::move(gp));
          }
          c0 += part.cols();
        }
        break;
      }
      case OpKind::kVConcat: {
        std::size_t offset = 0;
        for (auto t : n.extra) {
          const CMatrix& part = nodes_[t].value;
          if (nodes_[t].needs_grad) {
            std::vector<cplx> chunk(g.data().begin() + static_cast<std::ptrdiff_t>(offset),
                                    g.data().begin() +
                                        static_cast<std::ptrdiff_t>(offset + part.size()));
            accumulate(t, CMatrix(part.rows(), part.cols(), std::move(chunk)));
          }
          offset += part.size();
        }
        break;
      }
      case OpKind::kReshape: {
        const CMatrix& x = nodes_[n.a].value;
        accumulate(n.a, g.reshaped(x.rows(), x.cols()));
        break;
      }
      case OpKind::kSlice: {
        const CMatrix& x = nodes_[n.a].value;
        CMatrix ga(x.rows(), x.cols());
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < g.cols(); ++c) ga(n.i0 + r, n.i1 + c) = g(r, c);
        accumulate(n.a, std::move(ga));
        break;
      }
      case OpKind::kDiag: {
        CMatrix ga(g.rows(), g.cols());
        for (std::size_t k = 0; k < g.rows(); ++k) ga(k, k) = g(k, k);
        accumulate(n.a, std::move(ga));
        break;
      }
      case OpKind::kRowNormalize: {
        // y_ij = x_ij / r_i, r_i = eps + sum_k |x_ik|.
        const CMatrix& x = nodes_[n.a].value;
        const double eps = n.scalar.real();
        CMatrix ga(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          double mass = eps;
          for (std::size_t c = 0; c < x.cols(); ++c) mass += std::abs(x(r, c));
          double proj = 0.0;
          for (std::size_t c = 0; c < x.cols(); ++c) proj += (std::conj(g(r, c)) * x(r, c)).real();
          proj /= mass * mass;
          for (std::size_t c = 0; c < x.cols(); ++c) {
            const double mag = std::abs(x(r, c));
            ga(r, c) = g(r, c) / mass;
            if (mag > 0.0) ga(r, c) -= proj * x(r, c) / mag;
          }
        }
        accumulate(n.a, std::move(ga));
        break;
      }
      case OpKind::kCount_:
        throw std::logic_error("backward: corrupt tape");
    }
  }

  for (const auto& n : nodes_) {
    if (n.op == OpKind::kParameter && result.blocks[n.i0].empty()) {
      result.blocks[n.i0] = CMatrix(n.value.rows(), n.value.cols());
    }
  }
  return result;
}

// ------------------------------------------------------------ helpers

Recording record_forward(const Program& program, std::span<const CMatrix> params) {
  Recording rec;
  rec.params.reserve(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    rec.params.push_back(rec.tape.parameter(params[k], k));
  }
  rec.output = program(rec.tape, rec.params);
  return rec;
}

double GradientCheckReport::fraction_within(double tol) const {
  if (entries.empty()) return 1.0;
  const auto ok = std::count_if(entries.begin(), entries.end(),
                                [tol](const GradientCheckEntry& e) { return e.rel_error <= tol; });
  return static_cast<double>(ok) / static_cast<double>(entries.size());
}

GradientCheckReport check_gradients(const Program& program, std::span<const CMatrix> params,
                                    const GradientCheckOptions& options) {
  if (!(options.h >= 1e-8 && options.h <= 1e-4)) {
    throw std::invalid_argument("check_gradients: h must lie in [1e-8, 1e-4]");
  }
  GradientCheckReport report;

  struct Coord {
    std::size_t block, index;
    bool imag;
  };
  std::vector<Coord> coords;
  for (std::size_t b = 0; b < params.size(); ++b)
    for (std::size_t k = 0; k < params[b].size(); ++k) {
      coords.push_back({b, k, false});
      coords.push_back({b, k, true});
    }
  if (coords.empty()) return report;

  if (options.sample_coordinates > 0 && options.sample_coordinates < coords.size()) {
    std::vector<Coord> picked;
    std::mt19937_64 rng(options.seed);
    std::sample(coords.begin(), coords.end(), std::back_inserter(picked),
                options.sample_coordinates, rng);
    coords = std::move(picked);
  }

  Recording base = record_forward(program, params);
  const double loss = base.tape.value(base.output)[0].real();
  const GradientSet grad = base.tape.backward(base.output);
  const double floor = options.abs_floor * std::max(1.0, std::abs(loss));

  std::vector<CMatrix> work(params.begin(), params.end());
  auto eval = [&]() {
    Recording r = record_forward(program, work);
    return r.tape.value(r.output)[0].real();
  };

  double total = 0.0;
  for (const auto& c : coords) {
    cplx& p = work[c.block][c.index];
    const cplx saved = p;
    const cplx step = c.imag ? cplx(0.0, options.h) : cplx(options.h, 0.0);
    p = saved + step;
    const double up = eval();
    p = saved - step;
    const double down = eval();
    p = saved;

    GradientCheckEntry e;
    e.block = c.block;
    e.index = c.index;
    e.imaginary = c.imag;
    const cplx g = grad.blocks[c.block][c.index];
    e.analytic = c.imag ? g.imag() : g.real();
    e.numeric = (up - down) / (2.0 * options.h);
    const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
    e.rel_error = std::abs(e.analytic - e.numeric) / denom;
    report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
    total += e.rel_error;
    report.entries.push_back(e);
  }
  report.mean_rel_error = total / static_cast<double>(report.entries.size());
  return report;
}

}  // namespace uwmmse::ad
