#include "uwmmse/train.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "uwmmse/errors.hpp"
#include "uwmmse/parallel.hpp"
#include "uwmmse/seeding.hpp"

namespace uwmmse::train {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "novograd"; }

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "novograd") return OptimizerKind::kNovoGrad;
  throw ConfigError("unknown optimizer '" + name + "' (expected adam|novograd)");
}

void TrainConfig::validate() const {
  if (K_train < 1 || K_infer < 1) throw ConfigError("K_train and K_infer must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be >= 0");
  }
  if (early_stop.eval_every < 1) throw ConfigError("eval_every must be >= 1");
  if (early_stop.patience < 1) throw ConfigError("patience must be >= 1");
  if (early_stop.val_size < 1) throw ConfigError("val_size must be >= 1");
  if (hidden_F < 1 || hidden_G < 1) throw ConfigError("hidden widths must be >= 1");
}

std::string TrainHistory::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "step,train_loss,val_sum_rate\n";
  std::size_t e = 0;
  auto eval_at = [&](std::size_t step) -> std::optional<double> {
    while (e < evals.size() && evals[e].step < step) ++e;
    if (e < evals.size() && evals[e].step == step) return evals[e].val_sum_rate;
    return std::nullopt;
  };
  for (std::size_t step = 0; step <= train_loss.size(); ++step) {
    const auto val = eval_at(step);
    if (step == 0 && !val) continue;
    out << step << ',';
    if (step > 0 && std::isfinite(train_loss[step - 1])) out << train_loss[step - 1];
    out << ',';
    if (val) out << *val;
    out << '\n';
  }
  return out.str();
}

namespace {

struct SampleGrad {
  bool ok = false;
  double rate = 0.0;
  ad::GradientSet grad;
};

SampleGrad sample_gradient(const CsiTensor& h, const ModelParams& params,
                           const NetworkConfig& config, std::size_t K) {
  SampleGrad out;
  try {
    ad::Tape tape;
    const auto pv = model::bind_parameters(tape, params);
    const auto v = model::forward_graph(tape, h, pv, params, config, K);
    const ad::Var rate = model::sum_rate_graph(tape, h, v, config);
    out.rate = tape.value(rate)[0].real();
    if (!std::isfinite(out.rate)) return out;
    out.grad = tape.backward(rate);
    out.ok = out.grad.all_finite();
  } catch (const SingularityError&) {
  } catch (const DomainError&) {
  }
  return out;
}

}  // namespace

LossResult loss_and_gradient(const std::vector<CsiTensor>& batch, const ModelParams& params,
                             const NetworkConfig& config, std::size_t K, std::size_t threads) {
  if (batch.empty()) throw ConfigError("loss: empty batch");
  std::vector<SampleGrad> parts(batch.size());
  parallel_for(batch.size(), threads,
               [&](std::size_t s) { parts[s] = sample_gradient(batch[s], params, config, K); });

  LossResult r;
  double total = 0.0;
  for (std::size_t s = 0; s < parts.size(); ++s) {
    if (!parts[s].ok) {
      r.dropped.push_back(s);
      continue;
    }
    total += parts[s].rate;
    if (r.used == 0) {
      r.gradient = std::move(parts[s].grad);
    } else {
      r.gradient += parts[s].grad;
    }
    ++r.used;
  }
  if (r.used == 0) throw SolverError("loss: every sample in the batch was dropped");
  const double n = static_cast<double>(r.used);
  r.loss = -total / n;
  r.gradient *= -1.0 / n;
  return r;
}

double loss(const std::vector<CsiTensor>& batch, const ModelParams& params,
            const NetworkConfig& config, std::size_t K) {
  if (batch.empty()) throw ConfigError("loss: empty batch");
  double total = 0.0;
  std::size_t used = 0;
  for (const auto& h : batch) {
    try {
      const auto f = model::forward(h, params, config, K);
      total += wmmse::sum_rate(h, f.v, config.sigma, config.alpha);
      ++used;
    } catch (const SingularityError&) {
    } catch (const DomainError&) {
    }
  }
  if (used == 0) throw SolverError("loss: every sample in the batch was dropped");
  return -total / static_cast<double>(used);
}

ad::Program loss_program(const std::vector<CsiTensor>& batch, const ModelParams& params,
                         const NetworkConfig& config, std::size_t K) {
  return [batch, params, config, K](ad::Tape& tape, std::span<const ad::Var> leaves) {
    const auto pv = model::bind_parameters(leaves);
    std::vector<ad::Var> rates;
    for (const auto& h : batch) {
      const auto v = model::forward_graph(tape, h, pv, params, config, K);
      rates.push_back(model::sum_rate_graph(tape, h, v, config));
    }
    return tape.scale(tape.sum(rates), -1.0 / static_cast<double>(batch.size()));
  };
}

double mean_sum_rate(const std::vector<CsiTensor>& samples, const ModelParams& params,
                     const NetworkConfig& config, std::size_t K, std::size_t threads) {
  if (samples.empty()) return 0.0;
  std::vector<double> rates(samples.size(), 0.0);
  parallel_for(samples.size(), threads, [&](std::size_t s) {
    try {
      const auto f = model::forward(samples[s], params, config, K);
      rates[s] = wmmse::sum_rate(samples[s], f.v, config.sigma, config.alpha);
    } catch (const SingularityError&) {
    } catch (const DomainError&) {
    }
  });
  double total = 0.0;
  for (double r : rates) total += r;
  return total / static_cast<double>(samples.size());
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, const ModelParams& shape)
    : kind_(kind), lr_(learning_rate) {
  for (const auto& b : shape.blocks()) {
    m_.emplace_back(b.rows(), b.cols());
    v_.emplace_back(b.rows(), b.cols());
  }
  block_v_.assign(m_.size(), 0.0);
}

void Optimizer::step(ModelParams& params, const ad::GradientSet& gradient) {
  if (gradient.blocks.size() != m_.size()) throw ShapeError("optimizer: gradient block count");
  ++t_;
  auto blocks = params.blocks();
  const double t = static_cast<double>(t_);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const CMatrix& g = gradient.blocks[b];
    if (g.size() != blocks[b].size()) throw ShapeError("optimizer: gradient block shape");
    if (kind_ == OptimizerKind::kAdam) {
      const double c1 = 1.0 - std::pow(beta1_, t);
      const double c2 = 1.0 - std::pow(beta2_, t);
      for (std::size_t k = 0; k < g.size(); ++k) {
        cplx& m = m_[b][k];
        cplx& v = v_[b][k];
        m = beta1_ * m + (1.0 - beta1_) * g[k];
        v = cplx(beta2_ * v.real() + (1.0 - beta2_) * g[k].real() * g[k].real(),
                 beta2_ * v.imag() + (1.0 - beta2_) * g[k].imag() * g[k].imag());
        const double step_re = (m.real() / c1) / (std::sqrt(v.real() / c2) + eps_);
        const double step_im = (m.imag() / c1) / (std::sqrt(v.imag() / c2) + eps_);
        blocks[b][k] -= lr_ * cplx(step_re, step_im);
      }
    } else {
      const double norm_sq = linalg::frob_norm_sq(g);
      block_v_[b] = t_ == 1 ? norm_sq : beta2_ * block_v_[b] + (1.0 - beta2_) * norm_sq;
      const double denom = std::sqrt(block_v_[b]) + eps_;
      for (std::size_t k = 0; k < g.size(); ++k) {
        cplx& m = m_[b][k];
        m = beta1_ * m + g[k] / denom;
        blocks[b][k] -= lr_ * m;
      }
    }
  }
  params.set_blocks(blocks);
}

TrainResult train(const TrainConfig& config, const channel::ChannelSource& source,
                  const LogFn& log) {
  const auto hyper = model::Hyper::for_network(source.config, config.hidden_F, config.hidden_G);
  ModelParams init = model::init_params(source.config, hyper, config.seed);
  init.hyper.K_train = config.K_train;
  return train_from(std::move(init), config, source, log);
}

TrainResult train_from(ModelParams init, const TrainConfig& config,
                       const channel::ChannelSource& source, const LogFn& log) {
  config.validate();
  const NetworkConfig& net = source.config;
  init.validate(net);
  init.hyper.K_train = config.K_train;

  channel::ChannelSource train_src = source;
  train_src.seed = derive_seed(config.seed, "train-data");
  channel::ChannelSource val_src = source;
  val_src.seed = derive_seed(config.seed, "validation");
  const auto val_set = val_src.batch(0, config.early_stop.val_size);

  TrainResult result;
  result.params = init;
  TrainHistory& hist = result.history;
  ModelParams params = std::move(init);
  Optimizer opt(config.optimizer, config.learning_rate, params);

  auto evaluate = [&](std::size_t step) {
    const double val = mean_sum_rate(val_set, params, net, config.K_train, config.threads);
    hist.evals.push_back({step, val});
    if (hist.evals.size() == 1 || val > hist.best_val) {
      hist.best_val = val;
      hist.best_step = step;
      result.params = params;
    }
    if (log) {
      std::ostringstream msg;
      msg << "step " << step << " val_sum_rate " << val;
      log(msg.str());
    }
  };

  evaluate(0);
  std::size_t since_best = 0;
  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    const auto batch =
        train_src.batch(static_cast<std::uint64_t>(step - 1) * config.batch_size, config.batch_size);
    LossResult lr;
    try {
      lr = loss_and_gradient(batch, params, net, config.K_train, config.threads);
    } catch (const SolverError& e) {
      hist.train_loss.push_back(std::numeric_limits<double>::quiet_NaN());
      hist.dropped_samples += batch.size();
      if (log) log("step " + std::to_string(step) + ": " + e.what());
      continue;
    }
    hist.dropped_samples += lr.dropped.size();
    if (!lr.dropped.empty() && log) {
      log("step " + std::to_string(step) + ": dropped " + std::to_string(lr.dropped.size()) +
          " sample(s) after a singular system");
    }
    hist.train_loss.push_back(lr.loss);
    if (!std::isfinite(lr.loss) || !lr.gradient.all_finite()) {
      hist.diverged = true;
      if (log) log("step " + std::to_string(step) + ": non-finite loss, stopping");
      break;
    }
    ModelParams next = params;
    opt.step(next, lr.gradient);
    bool finite = true;
    for (const auto& b : next.blocks()) finite = finite && linalg::all_finite(b);
    if (!finite) {
      hist.diverged = true;
      if (log) log("step " + std::to_string(step) + ": non-finite parameters, stopping");
      break;
    }
    params = std::move(next);

    if (step % config.early_stop.eval_every == 0 || step == config.max_steps) {
      const std::size_t best_before = hist.best_step;
      evaluate(step);
      since_best = hist.best_step == best_before ? since_best + 1 : 0;
      if (since_best >= config.early_stop.patience) {
        hist.stopped_early = true;
        if (log) log("early stop at step " + std::to_string(step));
        break;
      }
    }
  }
  return result;
}

}  // namespace uwmmse::train
