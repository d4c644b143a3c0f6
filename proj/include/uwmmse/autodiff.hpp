#pragma once

// Reverse-mode differentiation over a tape of complex matrix primitives.
//
// Gradients follow the stacked real/imaginary convention: for a real loss L
// and complex entry p, the stored adjoint is dL/dRe(p) + i dL/dIm(p), which
// equals 2 dL/d(conj p). With this convention a first-order change of L is
// Re(sum(conj(G) .* dP)).

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "uwmmse/linalg.hpp"

namespace uwmmse::ad {

enum class OpKind : std::uint8_t {
  kConstant,
  kParameter,
  kAdd,
  kSub,
  kSum,
  kScale,         // constant complex scalar times matrix
  kScalarMul,     // 1x1 variable times matrix
  kGemm,
  kGemmAdjA,      // a^H b
  kGemmAdjB,      // a b^H
  kAdjoint,
  kHermitianSolve,
  kSolve,
  kFrobNorm,
  kLogDet,        // log2 det of an HPD matrix, real 1x1
  kLogDetGram,    // log2 det(A^H A) of a full-column-rank A, real 1x1
  kCartesianRelu,
  kTrace,
  kRealPart,
  kReciprocal,    // elementwise
  kHConcat,
  kVConcat,
  kReshape,
  kSlice,
  kDiag,          // diagonal matrix holding the diagonal of a square input
  kRowNormalize,  // x_ij / (eps + sum_k |x_ik|)
  kCount_,
};

const char* op_name(OpKind op);

class UnsupportedOpError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Handle to a node on a specific tape.
struct Var {
  std::uint32_t id = 0;
};

// Gradient blocks, one per parameter slot, shape-congruent with the
// parameters they differentiate.
struct GradientSet {
  std::vector<CMatrix> blocks;

  GradientSet& operator+=(const GradientSet& other);
  GradientSet& operator*=(double s);
  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] double norm() const;
};

class Tape {
 public:
  Tape() = default;

  // Leaves.
  Var constant(CMatrix value);
  // Parameter leaf whose gradient lands in GradientSet::blocks[slot].
  Var parameter(CMatrix value, std::size_t slot);

  // Primitives.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var sum(std::span<const Var> terms);
  Var scale(Var a, cplx s);
  Var scalar_mul(Var s, Var a);
  Var gemm(Var a, Var b);
  Var gemm_adj_a(Var a, Var b);
  Var gemm_adj_b(Var a, Var b);
  Var adjoint(Var a);
  Var hermitian_solve(Var a, Var b);
  Var solve(Var a, Var b);
  Var frob_norm(Var a);
  Var logdet_cap(Var a);
  // Square-root form of logdet_cap(A^H A); never forms the Gram matrix.
  Var logdet_gram(Var a);
  Var cartesian_relu(Var a);
  Var trace(Var a);
  Var real_part(Var a);
  Var reciprocal(Var a);
  Var hconcat(std::span<const Var> parts);
  Var vconcat(std::span<const Var> parts);
  Var reshape(Var a, std::size_t rows, std::size_t cols);
  Var slice(Var a, std::size_t row0, std::size_t rows, std::size_t col0, std::size_t cols);
  Var diag(Var a);
  Var row_normalize(Var a, double eps);

  // Generic entry point by kind, for programs assembled at run time. Only
  // unary/binary primitives without extra arguments are accepted here;
  // anything else raises UnsupportedOpError.
  Var record(OpKind op, std::span<const Var> inputs);

  [[nodiscard]] const CMatrix& value(Var v) const { return nodes_.at(v.id).value; }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] OpKind kind(Var v) const { return nodes_.at(v.id).op; }
  [[nodiscard]] bool depends_on_parameters(Var v) const { return nodes_.at(v.id).needs_grad; }
  [[nodiscard]] std::size_t parameter_slots() const { return slots_; }

  // Reverse sweep from a real 1x1 output. Throws std::logic_error when the
  // output is not a real scalar.
  [[nodiscard]] GradientSet backward(Var loss, double seed = 1.0) const;

 private:
  struct Node {
    OpKind op = OpKind::kConstant;
    bool needs_grad = false;
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    std::vector<std::uint32_t> extra;  // inputs of n-ary ops
    cplx scalar = 0.0;                 // scale factor / eps
    std::size_t i0 = 0, i1 = 0;        // slice offsets, parameter slot, factor index
    CMatrix value;
  };

  Var push(Node node);
  Var unary(OpKind kind, Var a, CMatrix value);
  const Node& node(Var v) const;
  void check(Var v) const;

  std::vector<Node> nodes_;
  std::vector<std::variant<linalg::Cholesky, linalg::Lu, linalg::QrGram>> factors_;
  std::size_t slots_ = 0;
};

// A differentiable program: builds its output on the tape from parameter
// leaves (one per parameter block, in order).
using Program = std::function<Var(Tape&, std::span<const Var> params)>;

struct Recording {
  Tape tape;
  std::vector<Var> params;
  Var output;
};

Recording record_forward(const Program& program, std::span<const CMatrix> params);

struct GradientCheckEntry {
  std::size_t block = 0;
  std::size_t index = 0;
  bool imaginary = false;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double max_rel_error = 0.0;
  double mean_rel_error = 0.0;

  // Fraction of entries whose relative error is at most `tol`.
  [[nodiscard]] double fraction_within(double tol) const;
};

struct GradientCheckOptions {
  double h = 1e-6;
  // Check this many randomly drawn real coordinates; 0 checks all of them.
  std::size_t sample_coordinates = 0;
  std::uint64_t seed = 0;
  // Relative errors are measured against max(|analytic|, |numeric|, floor)
  // with floor = abs_floor * max(1, |L|).
  double abs_floor = 1e-8;
};

// Compares backward() against central differences on each sampled real and
// imaginary coordinate. Throws std::invalid_argument for h outside
// [1e-8, 1e-4].
GradientCheckReport check_gradients(const Program& program, std::span<const CMatrix> params,
                                    const GradientCheckOptions& options = {});

}  // namespace uwmmse::ad
