#pragma once

// Experiment harness: algorithm comparison, size / spatial generalization,
// convergence F1, robustness to CSI distortion, timing, permutation
// equivariance and gradient checks.
//
// Every experiment returns per-sample rows plus a JSON object of aggregates,
// and audits the power of every beamformer it produced (all algorithms, all
// layers / sweeps).

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwmmse/channel.hpp"
#include "uwmmse/model.hpp"
#include "uwmmse/wmmse.hpp"

namespace uwmmse::eval {

using channel::CsiTensor;
using channel::NetworkConfig;
using model::ModelParams;

struct EvalConfig {
  std::size_t test_size = 500;
  std::size_t sweep_samples = 100;  // per point of every sweep
  std::size_t wmmse_iters = 100;
  std::size_t tr_iters = 3;
  std::size_t histogram_bins = 30;

  std::vector<std::size_t> sizes{10, 20, 30, 40, 50};
  channel::FadingSpec sweep_fading;  // test fading of the size sweep

  std::vector<double> stddevs{0.5, 1.0, 2.0, 4.0, 8.0};

  std::vector<double> rates{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  double sigma_r = 1e-3;

  double w_threshold = 1.0;
  std::optional<double> p_threshold;  // default sqrt(Pmax) / 2
  std::vector<std::size_t> f1_iterations{1, 2, 3, 50, 100};

  std::size_t timing_M = 20;
  std::size_t timing_samples = 50;

  std::size_t equivariance_M = 10;
  std::size_t equivariance_trials = 100;

  std::size_t gradcheck_M = 4;
  std::size_t gradcheck_batch = 2;
  std::size_t gradcheck_inits = 3;
  std::size_t gradcheck_coordinates = 50;
  double gradcheck_h = 1e-6;

  std::size_t residual_K = 10;

  void validate() const;
  [[nodiscard]] double p_threshold_for(double pmax) const;
};

struct Row {
  std::string experiment;
  std::size_t sample = 0;
  std::string algorithm;
  std::size_t M = 0;
  std::string fading;
  double param = 0.0;
  double sum_rate = 0.0;
  double normalized_sum_rate = 0.0;  // sum_rate / WMMSE sum_rate on the same sample
  double wall_time = 0.0;            // seconds
};

// Largest Tr(V V^H) / Pmax over every beamformer checked.
struct PowerAudit {
  std::size_t checked = 0;
  std::size_t violations = 0;  // above Pmax (1 + tol)
  double max_ratio = 0.0;

  static constexpr double kTolerance = 1e-9;
  void record(const wmmse::BeamformerSet& v, double pmax);
  void merge(const PowerAudit& other);
};

struct ExperimentResult {
  std::string experiment;
  std::vector<Row> rows;
  nlohmann::json aggregates = nlohmann::json::object();
  PowerAudit power;
  std::size_t missing = 0;  // samples whose solver failed

  [[nodiscard]] std::string to_csv() const;
  [[nodiscard]] nlohmann::json summary(const nlohmann::json& config_echo) const;
};

std::string csv_header();

// A fixed set of CSI draws and the network they belong to.
struct TestSet {
  NetworkConfig network;
  channel::FadingSpec fading;
  std::vector<CsiTensor> samples;
};

TestSet make_testset(const channel::ChannelSource& source, std::size_t count);

struct MeanStderr {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n = 0;
};
MeanStderr mean_stderr(const std::vector<double>& xs);

// Solver entry points shared by the experiments. Each records the power of
// every emitted iterate into `audit`.
wmmse::BeamformerSet solve_wmmse(const CsiTensor& h, const NetworkConfig& net, std::size_t iters,
                                 PowerAudit& audit);
wmmse::BeamformerSet solve_uwmmse(const CsiTensor& h, const ModelParams& params,
                                  const NetworkConfig& net, std::size_t K, PowerAudit& audit);

ExperimentResult compare_algorithms(const TestSet& test, const ModelParams& params, std::size_t K,
                                    const EvalConfig& cfg, std::size_t threads = 1);

ExperimentResult generalization_sweep(const ModelParams& params, const channel::ChannelSource& base,
                                      std::size_t K, const EvalConfig& cfg,
                                      std::size_t threads = 1);

ExperimentResult spatial_generalization(const ModelParams& params,
                                        const channel::ChannelSource& base, std::size_t K,
                                        const EvalConfig& cfg, std::size_t threads = 1);

// F1 of the binarized weight norms against each algorithm's own binarized
// final allocation. F1 = 0 when precision + recall = 0.
double f1_score(const std::vector<bool>& predicted, const std::vector<bool>& truth);

ExperimentResult convergence_f1(const TestSet& test, const ModelParams& params, std::size_t K,
                                const EvalConfig& cfg, std::size_t threads = 1);

// Both algorithms run on distorted CSI; sum-rates are taken on the clean CSI
// and normalized by WMMSE on the clean CSI. A sample keeps its distortion
// seed across rates, so the distorted coefficient sets are nested.
ExperimentResult robustness_sweep(const TestSet& test, const ModelParams& params, std::size_t K,
                                  const EvalConfig& cfg, std::uint64_t seed,
                                  std::size_t threads = 1);

// Single-threaded mean wall time per sample of WMMSE, Tr-WMMSE and UWMMSE(K);
// the first sample is a warm-up and not counted. Needs at least 2 samples.
ExperimentResult timing_benchmark(const TestSet& test, const ModelParams& params, std::size_t K,
                                  const EvalConfig& cfg);

// max over trials of ||f(P H P^T) - P f(H)||_F / ||f(H)||_F with a random
// permutation P per trial.
ExperimentResult equivariance_test(const ModelParams& params, const channel::ChannelSource& base,
                                   std::size_t K, const EvalConfig& cfg, std::uint64_t seed);

// Gradient check of the full training loss at fresh random initializations.
ExperimentResult gradcheck_experiment(const channel::ChannelSource& base, const ModelParams& like,
                                      std::size_t K, const EvalConfig& cfg, std::uint64_t seed);

// Per-layer necessary-condition residuals of a deep forward pass.
ExperimentResult residual_curves(const TestSet& test, const ModelParams& params,
                                 const EvalConfig& cfg, const model::ResidualOptions& opts = {});

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"compare",    "generalize", "spatial",
                                              "convergence", "robustness", "timing",
                                              "equivariance", "gradcheck"};
  return names;
}

}  // namespace uwmmse::eval
