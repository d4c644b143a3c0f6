#pragma once

// Classical WMMSE: block-coordinate descent over receivers U, MSE weights W
// and transmit beamformers V, with a per-node bisection on the power
// multiplier.

#include <cstddef>
#include <optional>
#include <vector>

#include "uwmmse/channel.hpp"
#include "uwmmse/linalg.hpp"

namespace uwmmse::wmmse {

using channel::CsiTensor;
using channel::NetworkConfig;
using channel::VConvention;

// One complex matrix per network node. The tag keeps beamformers, receivers
// and weights from being mixed up.
template <class Tag>
struct NodeSet {
  std::vector<CMatrix> nodes;

  NodeSet() = default;
  explicit NodeSet(std::vector<CMatrix> n) : nodes(std::move(n)) {}
  NodeSet(std::size_t count, const CMatrix& fill) : nodes(count, fill) {}

  [[nodiscard]] std::size_t size() const { return nodes.size(); }
  CMatrix& operator[](std::size_t i) { return nodes[i]; }
  const CMatrix& operator[](std::size_t i) const { return nodes[i]; }
  auto begin() { return nodes.begin(); }
  auto end() { return nodes.end(); }
  auto begin() const { return nodes.begin(); }
  auto end() const { return nodes.end(); }

  friend bool operator==(const NodeSet&, const NodeSet&) = default;
};

using BeamformerSet = NodeSet<struct BeamformerTag>;  // V_i, T x d
using ReceiverSet = NodeSet<struct ReceiverTag>;      // U_i, R x d
using WeightSet = NodeSet<struct WeightTag>;          // W_i, d x d

struct SolverOptions {
  std::size_t max_iters = 100;
  double bisection_tol = 1e-12;
  std::size_t bisection_max_steps = 200;
  bool objective_trace = false;
  bool early_exit = true;

  void validate() const;
};

// v_init = sqrt(Pmax / (2 T d)) (1 + i); every entry of V_i^(0) equals it so
// that Tr(V V^H) = Pmax.
cplx v_init(const NetworkConfig& config);
BeamformerSet initial_beamformers(const NetworkConfig& config);

double node_power(const CMatrix& v);  // Tr(V V^H)
double max_power(const BeamformerSet& v);
// Frobenius distance summed over nodes.
double distance(const BeamformerSet& a, const BeamformerSet& b);

// U_i = (sum_j H_ij V_j V_j^H H_ij^H + sigma^2 I_R)^{-1} H_ii V_i.
ReceiverSet update_u(const CsiTensor& h, const BeamformerSet& v, double sigma);

// W^_i = (I_d - U_i^H H_ii V_i)^{-1}.
WeightSet update_w_hat(const CsiTensor& h, const ReceiverSet& u, const BeamformerSet& v);

// The same weights for the MMSE receivers of V, evaluated without the
// cancellation in I - U^H H V: W^_i = I + X^H B_i^{-1} X with X = H_ii V_i and
// B_i the interference-plus-noise covariance. Equal to update_w_hat(h,
// update_u(h, v, sigma), v) in exact arithmetic; used by all solvers.
WeightSet mmse_weights(const CsiTensor& h, const BeamformerSet& v, double sigma);

// E_i, the d x d MSE matrix of node i.
CMatrix mse_matrix(const CsiTensor& h, const ReceiverSet& u, const BeamformerSet& v,
                   double sigma, std::size_t i);

// sum_i Tr(W_i E_i) - ln det W_i. Throws DomainError if some W_i is not HPD.
double surrogate_objective(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                           const BeamformerSet& v, double sigma);

// The surrogate minimized over (U, W) for fixed V: there W_i = E_i^{-1}, so
// the value is sum_i d - ln det W_i, i.e. d M minus the sum-rate in nats.
double block_minimum_objective(const CsiTensor& h, const BeamformerSet& v, double sigma);

// Transmit-side matrix of node i, sum over j of G^H U_j W_j U_j^H G with
// G = H_ij (paper) or H_ji (transposed).
CMatrix transmit_covariance(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                            std::size_t i, VConvention convention);

struct VUpdate {
  BeamformerSet v;
  std::vector<double> mu;  // multiplier chosen per node
};

// Exact constrained minimizer per node: mu_i = 0 if the unconstrained solution
// is feasible, otherwise bisection on mu_i > 0 until the power is within
// bisection_tol below Pmax.
VUpdate update_v_classical(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                           const NetworkConfig& config, const SolverOptions& opts = {});

// Raw update with a fixed (possibly complex) multiplier, no projection:
// (S_i + mu I_T)^{-1} H_ii^H U_i W_i.
BeamformerSet update_v_fixed_mu(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                                cplx mu, VConvention convention);

// Gain c such that (V / ||V||_F) c has power at most pmax; c is sqrt(pmax)
// nudged down by a few ulps when rounding would land just above the budget.
double saturation_gain(const CMatrix& v, double pmax);

// Scales every V_i with Tr(V_i V_i^H) > Pmax back onto the power sphere as
// (V_i / ||V_i||_F) c. Idempotent.
BeamformerSet project_power(const BeamformerSet& v, double pmax);

// sum_i alpha_i log2 det(I + H_ii V_i V_i^H H_ii^H B_i^{-1}), where B_i is the
// interference-plus-noise covariance. Evaluated as log det(B_i + X X^H) -
// log det B_i with X = H_ii V_i, both from QR factors of square roots of the
// covariances. Throws DomainError if some B_i is singular.
double sum_rate(const CsiTensor& h, const BeamformerSet& v, double sigma,
                const std::vector<double>& alpha = {});
std::vector<double> node_rates(const CsiTensor& h, const BeamformerSet& v, double sigma);

struct SweepState {
  ReceiverSet u;
  WeightSet w_hat;
  BeamformerSet v;
};

struct WmmseResult {
  BeamformerSet v;
  std::vector<double> objective;  // surrogate after each sweep, when traced
  std::size_t iterations = 0;
  std::vector<SweepState> sweeps;  // filled when record_sweeps is set
};

WmmseResult run_wmmse(const CsiTensor& h, const NetworkConfig& config,
                      const SolverOptions& opts = {}, bool record_sweeps = false);

// run_wmmse with max_iters = k.
WmmseResult run_truncated(const CsiTensor& h, const NetworkConfig& config, std::size_t k,
                          SolverOptions opts = {}, bool record_sweeps = false);

// k sweeps with the multiplier pinned to mu (no bisection); each sweep ends
// with project_power. This is the reference trajectory of the unfolded
// network when its learned correction is switched off.
std::vector<SweepState> run_pinned(const CsiTensor& h, const NetworkConfig& config,
                                   std::size_t k, cplx mu);

}  // namespace uwmmse::wmmse
