#pragma once

// Unfolded WMMSE network. Each layer runs the classical receiver and weight
// updates, then corrects the weights with a per-node complex MLP whose
// parameters come out of a complex graph convolution over a learned
// compression of the channel tensor. The beamformer update uses a learned
// multiplier mu and ends with a power saturation.
//
// All parameters are shared across layers, so the layer count K is a call
// argument. The model supports d = 1 only.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uwmmse/autodiff.hpp"
#include "uwmmse/channel.hpp"
#include "uwmmse/wmmse.hpp"

namespace uwmmse::model {

using channel::CsiTensor;
using channel::NetworkConfig;
using wmmse::BeamformerSet;
using wmmse::ReceiverSet;
using wmmse::WeightSet;

inline constexpr double kRowNormEps = 1e-12;
inline constexpr cplx kMuInit{0.1, 0.0};

// P for a single-hidden-layer MLP with biases acting on vec(W), d x d.
constexpr std::size_t mlp_parameter_count(std::size_t G, std::size_t d) {
  return G * d * d + G + d * d * G + d * d;
}

struct Hyper {
  std::size_t F = 32;  // graph-convolution hidden width
  std::size_t G = 16;  // MLP hidden width
  std::size_t Fp = 8;  // input feature width, R + T
  std::size_t P = 49;  // MLP parameter count
  std::size_t K_train = 1;

  static Hyper for_network(const NetworkConfig& config, std::size_t F = 32, std::size_t G = 16);
  friend bool operator==(const Hyper&, const Hyper&) = default;
};

struct ModelParams {
  CMatrix theta11;  // F x F'
  CMatrix theta12;  // F x F'
  CMatrix theta21;  // P x F
  CMatrix theta22;  // P x F
  CMatrix omega;    // R x T
  cplx mu = kMuInit;
  Hyper hyper;

  static constexpr std::size_t kBlockCount = 6;
  static const std::vector<std::string>& block_names();

  // The six blocks in checkpoint / gradient-slot order; mu as a 1x1 block.
  [[nodiscard]] std::vector<CMatrix> blocks() const;
  void set_blocks(std::span<const CMatrix> blocks);

  // Throws ShapeError on inconsistent shapes and DomainError on non-finite
  // entries.
  void validate(const NetworkConfig& config) const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Glorot-style complex initialization of theta and omega; mu = 0.1.
ModelParams init_params(const NetworkConfig& config, const Hyper& hyper, std::uint64_t seed);

// Same shapes with theta = 0 (the learned weight correction vanishes).
ModelParams zero_theta(ModelParams params);

struct ParameterCount {
  std::size_t theta = 0;
  std::size_t omega = 0;
  std::size_t mu = 0;
  std::size_t total = 0;
};
ParameterCount count_parameters(const ModelParams& params);

struct NodeMlpParams {
  CMatrix w1;  // G x d^2
  CMatrix b1;  // G x 1
  CMatrix w2;  // d^2 x G
  CMatrix b2;  // d^2 x 1

  // Layout: w1 row-major, b1, w2 row-major, b2.
  [[nodiscard]] std::vector<cplx> flatten() const;
  static NodeMlpParams unflatten(std::span<const cplx> xi, std::size_t G, std::size_t d);
  friend bool operator==(const NodeMlpParams&, const NodeMlpParams&) = default;
};

// S_ij = sum_pq omega_pq H_ij[p, q], unnormalized.
CMatrix gamma_raw(const CsiTensor& h, const CMatrix& omega);
// Row-normalized: S_ij / (eps + sum_k |S_ik|).
CMatrix gamma_transform(const CsiTensor& h, const CMatrix& omega);

// Row i = [U_i^T, V_i^T]. Throws ConfigError for d > 1.
CMatrix build_features(const ReceiverSet& u, const BeamformerSet& v);

// Z = relu(diag(S) Q theta11^H + S Q theta12^H)
// Xi = relu(diag(S) Z theta21^H + S Z theta22^H)
struct GcnOutput {
  CMatrix z;
  CMatrix xi;
};
GcnOutput psi_gcn(const CMatrix& s, const CMatrix& q, const ModelParams& params);

struct PhiOutput {
  CMatrix phi;  // d x d
  CMatrix w;    // phi + W^
};
PhiOutput phi_mlp(const NodeMlpParams& xi, const CMatrix& w_hat);

// (S_i + mu I)^{-1} H_ii^H U_i W_i without projection.
BeamformerSet update_v_unfolded(const CsiTensor& h, const ReceiverSet& u, const WeightSet& w,
                                cplx mu, channel::VConvention convention);

// Rescales any V_i above the power budget onto the power sphere.
BeamformerSet beta_saturate(const BeamformerSet& v_bar, double pmax);

struct LayerTrace {
  CMatrix s;
  CMatrix q;
  CMatrix z;
  CMatrix xi;
  ReceiverSet u;
  WeightSet w_hat;
  WeightSet phi;
  WeightSet w;
  BeamformerSet v_bar;
  BeamformerSet v;
};

struct ForwardResult {
  BeamformerSet v;
  std::vector<LayerTrace> layers;  // empty unless traced
};

ForwardResult forward(const CsiTensor& h, const ModelParams& params, const NetworkConfig& config,
                      std::size_t K, bool trace = false);

// Tape form of the network, used for training and gradient checks.
struct ParamVars {
  ad::Var theta11, theta12, theta21, theta22, omega, mu;
};

// Binds the parameters as leaves in slots 0..5 (block order).
ParamVars bind_parameters(ad::Tape& tape, const ModelParams& params);
ParamVars bind_parameters(std::span<const ad::Var> leaves);

struct LayerVars {
  ad::Var s, q, z, xi;
  std::vector<ad::Var> u, w_hat, phi, w, v_bar, v;
};

// Builds K layers on the tape; returns the final V_i per node.
std::vector<ad::Var> forward_graph(ad::Tape& tape, const CsiTensor& h, const ParamVars& p,
                                   const ModelParams& params, const NetworkConfig& config,
                                   std::size_t K, std::vector<LayerVars>* trace = nullptr);

// Sum-rate of the beamformers on the tape (real 1x1).
ad::Var sum_rate_graph(ad::Tape& tape, const CsiTensor& h, std::span<const ad::Var> v,
                       const NetworkConfig& config);

struct ResidualOptions {
  bool include_mu = true;  // add mu I to A_i and C_i
};

// Necessary-condition residual per layer and node,
//   || A_i^{-1} [sum_{j != i} G_ij^H U_j (w*_j phi_i - w*_i phi_j) U_j^H G_ij] C_i^{-1} B_i ||_F
// with starred quantities from the final layer. Entries are empty when A_i
// or C_i is singular.
using ResidualTable = std::vector<std::vector<std::optional<double>>>;  // [layer][node]
ResidualTable necessary_condition_residual(const std::vector<LayerTrace>& trace, const CsiTensor& h,
                                const ModelParams& params, const NetworkConfig& config,
                                const ResidualOptions& options = {});

}  // namespace uwmmse::model
