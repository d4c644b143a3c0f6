#pragma once

// Unsupervised training of the unfolded network: minimize the negative mean
// sum-rate over sampled CSI batches.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "uwmmse/autodiff.hpp"
#include "uwmmse/channel.hpp"
#include "uwmmse/model.hpp"

namespace uwmmse::train {

using channel::CsiTensor;
using channel::NetworkConfig;
using model::ModelParams;

enum class OptimizerKind { kAdam, kNovoGrad };
std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& name);

struct EarlyStop {
  std::size_t eval_every = 100;
  std::size_t patience = 10;  // evaluations without improvement
  std::size_t val_size = 128;
};

struct TrainConfig {
  std::size_t K_train = 1;
  std::size_t K_infer = 3;
  std::size_t batch_size = 16;
  std::size_t max_steps = 2000;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  EarlyStop early_stop;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // 0 = all cores
  std::size_t hidden_F = 32;
  std::size_t hidden_G = 16;

  void validate() const;
};

struct TrainHistory {
  std::vector<double> train_loss;  // one entry per executed step; NaN if every sample dropped
  struct Eval {
    std::size_t step = 0;
    double val_sum_rate = 0.0;
  };
  std::vector<Eval> evals;
  std::size_t best_step = 0;
  double best_val = 0.0;
  std::size_t dropped_samples = 0;
  bool diverged = false;
  bool stopped_early = false;

  // step, train_loss, val_sum_rate; empty cells where a value does not exist.
  [[nodiscard]] std::string to_csv() const;
};

struct LossResult {
  double loss = 0.0;           // -mean sum-rate over kept samples
  ad::GradientSet gradient;    // of `loss`
  std::size_t used = 0;        // samples kept
  std::vector<std::size_t> dropped;  // indices of samples whose forward failed
};

// Per-sample tapes, reduced in sample order so the result does not depend on
// the thread count. Throws SolverError when every sample is dropped.
LossResult loss_and_gradient(const std::vector<CsiTensor>& batch, const ModelParams& params,
                             const NetworkConfig& config, std::size_t K, std::size_t threads = 1);

// Loss value only.
double loss(const std::vector<CsiTensor>& batch, const ModelParams& params,
            const NetworkConfig& config, std::size_t K);

// The whole loss as one differentiable program over the parameter blocks,
// for gradient checking.
ad::Program loss_program(const std::vector<CsiTensor>& batch, const ModelParams& params,
                         const NetworkConfig& config, std::size_t K);

// Mean sum-rate of forward(., K) over the samples; samples whose forward fails
// count as zero.
double mean_sum_rate(const std::vector<CsiTensor>& samples, const ModelParams& params,
                     const NetworkConfig& config, std::size_t K, std::size_t threads = 1);

// Adam on stacked real/imaginary coordinates, or a NovoGrad-style variant with
// one second moment per parameter block.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate, const ModelParams& shape);
  void step(ModelParams& params, const ad::GradientSet& gradient);

 private:
  OptimizerKind kind_;
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  std::size_t t_ = 0;
  std::vector<CMatrix> m_;
  std::vector<CMatrix> v_;          // Adam: componentwise (re^2, im^2) moments
  std::vector<double> block_v_;     // NovoGrad: per-block moment
};

using LogFn = std::function<void(const std::string&)>;

struct TrainResult {
  ModelParams params;  // best validation parameters
  TrainHistory history;
};

TrainResult train(const TrainConfig& config, const channel::ChannelSource& source,
                  const LogFn& log = {});

// Same, continuing from given parameters.
TrainResult train_from(ModelParams init, const TrainConfig& config,
                       const channel::ChannelSource& source, const LogFn& log = {});

}  // namespace uwmmse::train
