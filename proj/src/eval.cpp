#include "uwmmse/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "uwmmse/errors.hpp"
#include "uwmmse/parallel.hpp"
#include "uwmmse/seeding.hpp"
#include "uwmmse/train.hpp"

namespace uwmmse::eval {

using json = nlohmann::json;

void EvalConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v < 1) throw ConfigError(std::string("eval.") + name + " must be >= 1");
  };
  positive(test_size, "test_size");
  positive(sweep_samples, "sweep_samples");
  positive(wmmse_iters, "wmmse_iters");
  positive(tr_iters, "tr_iters");
  positive(histogram_bins, "histogram_bins");
  positive(timing_M, "timing_M");
  positive(equivariance_M, "equivariance_M");
  positive(equivariance_trials, "equivariance_trials");
  positive(gradcheck_M, "gradcheck_M");
  positive(gradcheck_batch, "gradcheck_batch");
  positive(gradcheck_inits, "gradcheck_inits");
  positive(residual_K, "residual_K");
  if (timing_samples < 2) throw ConfigError("eval.timing_samples must be >= 2");
  if (sizes.empty()) throw ConfigError("eval.sizes must not be empty");
  for (auto m : sizes) positive(m, "sizes entries");
  for (double s : stddevs) {
    if (!(s > 0.0)) throw ConfigError("eval.stddevs entries must be > 0");
  }
  for (double r : rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("eval.rates entries must lie in [0, 1]");
  }
  if (!(sigma_r >= 0.0)) throw ConfigError("eval.sigma_r must be >= 0");
  if (!(w_threshold >= 0.0)) throw ConfigError("eval.w_threshold must be >= 0");
  if (p_threshold && !(*p_threshold >= 0.0)) throw ConfigError("eval.p_threshold must be >= 0");
  if (f1_iterations.empty()) throw ConfigError("eval.f1_iterations must not be empty");
  for (auto t : f1_iterations) positive(t, "f1_iterations entries");
  if (!(gradcheck_h >= 1e-8 && gradcheck_h <= 1e-4)) {
    throw ConfigError("eval.gradcheck_h must lie in [1e-8, 1e-4]");
  }
  sweep_fading.validate();
}

double EvalConfig::p_threshold_for(double pmax) const {
  return p_threshold ? *p_threshold : std::sqrt(pmax) / 2.0;
}

void PowerAudit::record(const wmmse::BeamformerSet& v, double pmax) {
  for (const auto& vi : v) {
    const double ratio = wmmse::node_power(vi) / pmax;
    ++checked;
    max_ratio = std::max(max_ratio, ratio);
    if (!(ratio <= 1.0 + kTolerance)) ++violations;
  }
}

void PowerAudit::merge(const PowerAudit& other) {
  checked += other.checked;
  violations += other.violations;
  max_ratio = std::max(max_ratio, other.max_ratio);
}

std::string csv_header() {
  return "experiment,sample,algorithm,M,fading,param,sum_rate,normalized_sum_rate,wall_time";
}

std::string ExperimentResult::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << csv_header() << '\n';
  for (const Row& r : rows) {
    out << r.experiment << ',' << r.sample << ',' << r.algorithm << ',' << r.M << ',' << r.fading
        << ',' << r.param << ',' << r.sum_rate << ',' << r.normalized_sum_rate << ','
        << r.wall_time << '\n';
  }
  return out.str();
}

json ExperimentResult::summary(const json& config_echo) const {
  return json{{"experiment", experiment},
              {"config", config_echo},
              {"aggregates", aggregates},
              {"rows", rows.size()},
              {"missing", missing},
              {"power",
               {{"checked", power.checked},
                {"violations", power.violations},
                {"max_ratio", power.max_ratio}}}};
}

TestSet make_testset(const channel::ChannelSource& source, std::size_t count) {
  return {source.config, source.fading, source.batch(0, count)};
}

MeanStderr mean_stderr(const std::vector<double>& xs) {
  MeanStderr r;
  r.n = xs.size();
  if (xs.empty()) return r;
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  }
  return r;
}

namespace {

using Clock = std::chrono::steady_clock;

// Wall time of fn() in seconds, never reported as zero.
template <class Fn>
double timed(Fn&& fn) {
  const auto t0 = Clock::now();
  fn();
  const double s = std::chrono::duration<double>(Clock::now() - t0).count();
  return std::max(s, 1e-9);
}

json stats_json(const std::vector<double>& xs) {
  const auto s = mean_stderr(xs);
  return {{"mean", s.mean}, {"stderr", s.stderr_}, {"n", s.n}};
}

std::string alg_name(const char* base, std::size_t k) {
  return std::string(base) + "(" + std::to_string(k) + ")";
}

std::string fading_name(const channel::FadingSpec& f) { return channel::to_string(f.kind); }

// Solver failures on one sample become a missing row instead of aborting.
template <class Fn>
bool guarded(Fn&& fn) {
  try {
    fn();
    return true;
  } catch (const SingularityError&) {
  } catch (const DomainError&) {
  } catch (const SolverError&) {
  }
  return false;
}

double safe_ratio(double num, double den) {
  return den != 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

}  // namespace

wmmse::BeamformerSet solve_wmmse(const CsiTensor& h, const NetworkConfig& net, std::size_t iters,
                                 PowerAudit& audit) {
  wmmse::SolverOptions opts;
  opts.max_iters = iters;
  auto r = wmmse::run_wmmse(h, net, opts, /*record_sweeps=*/true);
  for (const auto& s : r.sweeps) audit.record(s.v, net.pmax);
  audit.record(r.v, net.pmax);
  return std::move(r.v);
}

wmmse::BeamformerSet solve_uwmmse(const CsiTensor& h, const ModelParams& params,
                                  const NetworkConfig& net, std::size_t K, PowerAudit& audit) {
  auto f = model::forward(h, params, net, K, /*trace=*/true);
  for (const auto& layer : f.layers) audit.record(layer.v, net.pmax);
  audit.record(f.v, net.pmax);
  return std::move(f.v);
}

ExperimentResult compare_algorithms(const TestSet& test, const ModelParams& params, std::size_t K,
                                    const EvalConfig& cfg, std::size_t threads) {
  if (test.samples.empty()) throw ConfigError("compare: empty test set");
  const auto& net = test.network;
  const std::string names[3] = {alg_name("WMMSE", cfg.wmmse_iters),
                                alg_name("Tr-WMMSE", cfg.tr_iters), alg_name("UWMMSE", K)};
  struct Sample {
    bool ok = false;
    double rate[3]{};
    double time[3]{};
    PowerAudit audit;
  };
  std::vector<Sample> per(test.samples.size());
  parallel_for(per.size(), threads, [&](std::size_t s) {
    const auto& h = test.samples[s];
    Sample& out = per[s];
    out.ok = guarded([&] {
      wmmse::BeamformerSet v;
      out.time[0] = timed([&] { v = solve_wmmse(h, net, cfg.wmmse_iters, out.audit); });
      out.rate[0] = wmmse::sum_rate(h, v, net.sigma, net.alpha);
      out.time[1] = timed([&] { v = solve_wmmse(h, net, cfg.tr_iters, out.audit); });
      out.rate[1] = wmmse::sum_rate(h, v, net.sigma, net.alpha);
      out.time[2] = timed([&] { v = solve_uwmmse(h, params, net, K, out.audit); });
      out.rate[2] = wmmse::sum_rate(h, v, net.sigma, net.alpha);
    });
  });

  ExperimentResult res;
  res.experiment = "compare";
  std::vector<double> rates[3], times[3];
  for (std::size_t s = 0; s < per.size(); ++s) {
    res.power.merge(per[s].audit);
    if (!per[s].ok) {
      ++res.missing;
      continue;
    }
    for (int a = 0; a < 3; ++a) {
      res.rows.push_back({res.experiment, s, names[a], net.M, fading_name(test.fading),
                          static_cast<double>(K), per[s].rate[a],
                          per[s].rate[a] / per[s].rate[0], per[s].time[a]});
      rates[a].push_back(per[s].rate[a]);
      times[a].push_back(per[s].time[a]);
    }
  }

  json means = json::object(), walls = json::object(), normalized = json::object();
  for (int a = 0; a < 3; ++a) {
    means[names[a]] = stats_json(rates[a]);
    walls[names[a]] = mean_stderr(times[a]).mean;
    std::vector<double> norm;
    for (std::size_t k = 0; k < rates[a].size(); ++k) norm.push_back(rates[a][k] / rates[0][k]);
    normalized[names[a]] = stats_json(norm);
  }
  const double m_w = mean_stderr(rates[0]).mean;
  const double m_tr = mean_stderr(rates[1]).mean;
  const double m_uw = mean_stderr(rates[2]).mean;

  // Histogram over the common range of all three algorithms.
  json hist = json::object();
  if (!rates[0].empty()) {
    double lo = rates[0].front(), hi = lo;
    for (const auto& v : rates) {
      for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
      }
    }
    if (hi == lo) hi = lo + 1.0;
    const std::size_t bins = cfg.histogram_bins;
    std::vector<double> edges(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) {
      edges[b] = lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(bins);
    }
    json counts = json::object();
    for (int a = 0; a < 3; ++a) {
      std::vector<std::size_t> c(bins, 0);
      for (double x : rates[a]) {
        auto b = static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins));
        ++c[std::min(b, bins - 1)];
      }
      counts[names[a]] = c;
    }
    hist = {{"edges", edges}, {"counts", counts}};
  }

  res.aggregates = {{"K", K},
                    {"sum_rate", means},
                    {"normalized_sum_rate", normalized},
                    {"mean_wall_time", walls},
                    {"ratio_uwmmse_over_tr_wmmse", safe_ratio(m_uw, m_tr)},
                    {"ratio_uwmmse_over_wmmse", safe_ratio(m_uw, m_w)},
                    {"histogram", hist}};
  return res;
}

ExperimentResult generalization_sweep(const ModelParams& params, const channel::ChannelSource& base,
                                      std::size_t K, const EvalConfig& cfg, std::size_t threads) {
  ExperimentResult res;
  res.experiment = "generalize";
  json per_size = json::array();
  for (std::size_t M : cfg.sizes) {
    channel::ChannelSource src = base;
    src.config.M = M;
    src.fading = cfg.sweep_fading;
    src.seed = split_seed(derive_seed(base.seed, "generalize"), M);
    const auto samples = src.batch(0, cfg.sweep_samples);
    struct Sample {
      bool ok = false;
      double w = 0, tr = 0, uw = 0, t_tr = 0, t_uw = 0;
      PowerAudit audit;
    };
    std::vector<Sample> per(samples.size());
    parallel_for(per.size(), threads, [&](std::size_t s) {
      const auto& h = samples[s];
      Sample& o = per[s];
      o.ok = guarded([&] {
        o.w = wmmse::sum_rate(h, solve_wmmse(h, src.config, cfg.wmmse_iters, o.audit),
                              src.config.sigma, src.config.alpha);
        wmmse::BeamformerSet v;
        o.t_tr = timed([&] { v = solve_wmmse(h, src.config, cfg.tr_iters, o.audit); });
        o.tr = wmmse::sum_rate(h, v, src.config.sigma, src.config.alpha);
        o.t_uw = timed([&] { v = solve_uwmmse(h, params, src.config, K, o.audit); });
        o.uw = wmmse::sum_rate(h, v, src.config.sigma, src.config.alpha);
      });
    });
    std::vector<double> n_uw, n_tr;
    for (std::size_t s = 0; s < per.size(); ++s) {
      res.power.merge(per[s].audit);
      if (!per[s].ok) {
        ++res.missing;
        continue;
      }
      const auto& o = per[s];
      const auto fading = fading_name(src.fading);
      res.rows.push_back({res.experiment, s, alg_name("UWMMSE", K), M, fading,
                          static_cast<double>(M), o.uw, o.uw / o.w, o.t_uw});
      res.rows.push_back({res.experiment, s, alg_name("Tr-WMMSE", cfg.tr_iters), M, fading,
                          static_cast<double>(M), o.tr, o.tr / o.w, o.t_tr});
      n_uw.push_back(o.uw / o.w);
      n_tr.push_back(o.tr / o.w);
    }
    per_size.push_back({{"M", M}, {"uwmmse", stats_json(n_uw)}, {"tr_wmmse", stats_json(n_tr)}});
  }
  res.aggregates = {{"K", K}, {"fading", fading_name(cfg.sweep_fading)}, {"sizes", per_size}};
  return res;
}

ExperimentResult spatial_generalization(const ModelParams& params,
                                        const channel::ChannelSource& base, std::size_t K,
                                        const EvalConfig& cfg, std::size_t threads) {
  ExperimentResult res;
  res.experiment = "spatial";
  const std::uint64_t root = derive_seed(base.seed, "spatial");

  // One point per placement; index 0 is the uniform reference.
  std::vector<std::optional<double>> points{std::nullopt};
  for (double s : cfg.stddevs) points.emplace_back(s);

  json curve = json::array();
  json uniform_ref;
  for (std::size_t p = 0; p < points.size(); ++p) {
    channel::ChannelSource src = base;
    src.spatial = points[p] ? channel::SpatialSpec::gaussian(*points[p])
                            : channel::SpatialSpec::uniform();
    src.seed = split_seed(root, p);
    const auto samples = src.batch(0, cfg.sweep_samples);
    struct Sample {
      bool ok = false;
      double w = 0, uw = 0, t = 0;
      PowerAudit audit;
    };
    std::vector<Sample> per(samples.size());
    parallel_for(per.size(), threads, [&](std::size_t s) {
      const auto& h = samples[s];
      Sample& o = per[s];
      o.ok = guarded([&] {
        o.w = wmmse::sum_rate(h, solve_wmmse(h, src.config, cfg.wmmse_iters, o.audit),
                              src.config.sigma, src.config.alpha);
        wmmse::BeamformerSet v;
        o.t = timed([&] { v = solve_uwmmse(h, params, src.config, K, o.audit); });
        o.uw = wmmse::sum_rate(h, v, src.config.sigma, src.config.alpha);
      });
    });
    std::vector<double> norm;
    for (std::size_t s = 0; s < per.size(); ++s) {
      res.power.merge(per[s].audit);
      if (!per[s].ok) {
        ++res.missing;
        continue;
      }
      norm.push_back(per[s].uw / per[s].w);
      if (points[p]) {
        res.rows.push_back({res.experiment, s, alg_name("UWMMSE", K), src.config.M,
                            fading_name(src.fading), *points[p], per[s].uw, norm.back(),
                            per[s].t});
      }
    }
    if (points[p]) {
      curve.push_back({{"stddev", *points[p]}, {"uwmmse", stats_json(norm)}});
    } else {
      uniform_ref = stats_json(norm);
    }
  }
  res.aggregates = {{"K", K}, {"stddevs", curve}, {"uniform_reference", uniform_ref}};
  return res;
}

double f1_score(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  if (predicted.size() != truth.size()) throw ShapeError("f1_score: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    if (predicted[k] && truth[k]) ++tp;
    if (predicted[k] && !truth[k]) ++fp;
    if (!predicted[k] && truth[k]) ++fn;
  }
  const double precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  const double recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

namespace {

std::vector<bool> above(const std::vector<CMatrix>& mats, double threshold) {
  std::vector<bool> out;
  out.reserve(mats.size());
  for (const auto& m : mats) out.push_back(linalg::frob_norm(m) > threshold);
  return out;
}

}  // namespace

ExperimentResult convergence_f1(const TestSet& test, const ModelParams& params, std::size_t K,
                                const EvalConfig& cfg, std::size_t threads) {
  if (test.samples.empty()) throw ConfigError("convergence: empty test set");
  const auto& net = test.network;
  if (net.d != 1) throw ConfigError("convergence: requires d = 1");
  const double p_thr = cfg.p_threshold_for(net.pmax);
  const std::size_t last_iter =
      *std::max_element(cfg.f1_iterations.begin(), cfg.f1_iterations.end());

  struct Sample {
    bool ok = false;
    double w_ref = 0, t_uw = 0, t_w = 0;
    std::vector<double> f1_uw, rate_uw;  // per layer
    std::vector<double> f1_w, rate_w;    // per requested iteration
    PowerAudit audit;
  };
  std::vector<Sample> per(test.samples.size());
  parallel_for(per.size(), threads, [&](std::size_t s) {
    const auto& h = test.samples[s];
    Sample& o = per[s];
    o.ok = guarded([&] {
      model::ForwardResult f;
      o.t_uw = timed([&] { f = model::forward(h, params, net, K, /*trace=*/true); });
      const auto truth_uw = above(f.v.nodes, p_thr);
      for (const auto& layer : f.layers) {
        o.audit.record(layer.v, net.pmax);
        o.f1_uw.push_back(f1_score(above(layer.w.nodes, cfg.w_threshold), truth_uw));
        o.rate_uw.push_back(wmmse::sum_rate(h, layer.v, net.sigma, net.alpha));
      }
      wmmse::SolverOptions opts;
      opts.max_iters = last_iter;
      opts.early_exit = false;
      wmmse::WmmseResult r;
      o.t_w = timed([&] { r = wmmse::run_wmmse(h, net, opts, /*record_sweeps=*/true); });
      for (const auto& sw : r.sweeps) o.audit.record(sw.v, net.pmax);
      const auto truth_w = above(r.v.nodes, p_thr);
      o.w_ref = wmmse::sum_rate(h, r.v, net.sigma, net.alpha);
      for (std::size_t t : cfg.f1_iterations) {
        const auto& sw = r.sweeps.at(t - 1);
        o.f1_w.push_back(f1_score(above(sw.w_hat.nodes, cfg.w_threshold), truth_w));
        o.rate_w.push_back(wmmse::sum_rate(h, sw.v, net.sigma, net.alpha));
      }
    });
  });

  ExperimentResult res;
  res.experiment = "convergence";
  std::vector<std::vector<double>> f1_uw(K), f1_w(cfg.f1_iterations.size());
  for (std::size_t s = 0; s < per.size(); ++s) {
    res.power.merge(per[s].audit);
    if (!per[s].ok) {
      ++res.missing;
      continue;
    }
    const auto& o = per[s];
    for (std::size_t k = 0; k < K; ++k) {
      f1_uw[k].push_back(o.f1_uw[k]);
      res.rows.push_back({res.experiment, s, "UWMMSE", net.M, fading_name(test.fading),
                          static_cast<double>(k + 1), o.rate_uw[k], o.rate_uw[k] / o.w_ref,
                          o.t_uw});
    }
    for (std::size_t t = 0; t < cfg.f1_iterations.size(); ++t) {
      f1_w[t].push_back(o.f1_w[t]);
      res.rows.push_back({res.experiment, s, "WMMSE", net.M, fading_name(test.fading),
                          static_cast<double>(cfg.f1_iterations[t]), o.rate_w[t],
                          o.rate_w[t] / o.w_ref, o.t_w});
    }
  }
  json layers = json::array(), iters = json::array();
  for (std::size_t k = 0; k < K; ++k) layers.push_back({{"layer", k + 1}, {"f1", stats_json(f1_uw[k])}});
  for (std::size_t t = 0; t < cfg.f1_iterations.size(); ++t) {
    iters.push_back({{"iteration", cfg.f1_iterations[t]}, {"f1", stats_json(f1_w[t])}});
  }
  res.aggregates = {{"K", K},
                    {"w_threshold", cfg.w_threshold},
                    {"p_threshold", p_thr},
                    {"uwmmse_layers", layers},
                    {"wmmse_iterations", iters}};
  return res;
}

ExperimentResult robustness_sweep(const TestSet& test, const ModelParams& params, std::size_t K,
                                  const EvalConfig& cfg, std::uint64_t seed, std::size_t threads) {
  if (test.samples.empty()) throw ConfigError("robustness: empty test set");
  const auto& net = test.network;
  const std::uint64_t root = derive_seed(seed, "robustness");
  const std::size_t R = cfg.rates.size();

  struct Sample {
    bool ok = false;
    double w_clean = 0, uw_clean = 0;
    std::vector<double> uw, w, t_uw, t_w;  // per rate, rates on the clean CSI
    PowerAudit audit;
  };
  std::vector<Sample> per(test.samples.size());
  parallel_for(per.size(), threads, [&](std::size_t s) {
    const auto& h = test.samples[s];
    Sample& o = per[s];
    o.ok = guarded([&] {
      o.w_clean = wmmse::sum_rate(h, solve_wmmse(h, net, cfg.wmmse_iters, o.audit), net.sigma,
                                  net.alpha);
      o.uw_clean =
          wmmse::sum_rate(h, solve_uwmmse(h, params, net, K, o.audit), net.sigma, net.alpha);
      const std::uint64_t sample_seed = split_seed(root, s);
      for (double rate : cfg.rates) {
        const auto hd = channel::distort_csi(h, rate, cfg.sigma_r, sample_seed);
        wmmse::BeamformerSet v;
        o.t_uw.push_back(timed([&] { v = solve_uwmmse(hd, params, net, K, o.audit); }));
        o.uw.push_back(wmmse::sum_rate(h, v, net.sigma, net.alpha));
        o.t_w.push_back(timed([&] { v = solve_wmmse(hd, net, cfg.wmmse_iters, o.audit); }));
        o.w.push_back(wmmse::sum_rate(h, v, net.sigma, net.alpha));
      }
    });
  });

  ExperimentResult res;
  res.experiment = "robustness";
  std::vector<std::vector<double>> n_uw(R), n_w(R);
  std::vector<double> n_uw_clean;
  bool rate0_identical = true;
  for (std::size_t s = 0; s < per.size(); ++s) {
    res.power.merge(per[s].audit);
    if (!per[s].ok) {
      ++res.missing;
      continue;
    }
    const auto& o = per[s];
    n_uw_clean.push_back(o.uw_clean / o.w_clean);
    for (std::size_t r = 0; r < R; ++r) {
      if (cfg.rates[r] == 0.0 && o.uw[r] != o.uw_clean) rate0_identical = false;
      n_uw[r].push_back(o.uw[r] / o.w_clean);
      n_w[r].push_back(o.w[r] / o.w_clean);
      res.rows.push_back({res.experiment, s, alg_name("UWMMSE", K), net.M,
                          fading_name(test.fading), cfg.rates[r], o.uw[r], n_uw[r].back(),
                          o.t_uw[r]});
      res.rows.push_back({res.experiment, s, alg_name("WMMSE", cfg.wmmse_iters), net.M,
                          fading_name(test.fading), cfg.rates[r], o.w[r], n_w[r].back(),
                          o.t_w[r]});
    }
  }
  json curve = json::array();
  for (std::size_t r = 0; r < R; ++r) {
    curve.push_back(
        {{"rate", cfg.rates[r]}, {"uwmmse", stats_json(n_uw[r])}, {"wmmse", stats_json(n_w[r])}});
  }
  res.aggregates = {{"K", K},
                    {"sigma_r", cfg.sigma_r},
                    {"uwmmse_clean", stats_json(n_uw_clean)},
                    {"rate0_identical_to_clean", rate0_identical},
                    {"rates", curve}};
  return res;
}

ExperimentResult timing_benchmark(const TestSet& test, const ModelParams& params, std::size_t K,
                                  const EvalConfig& cfg) {
  if (test.samples.size() < 2) {
    throw ConfigError("timing: need at least 2 samples (the first one is a warm-up)");
  }
  const auto& net = test.network;
  const std::string names[3] = {alg_name("WMMSE", cfg.wmmse_iters),
                                alg_name("Tr-WMMSE", cfg.tr_iters), alg_name("UWMMSE", K)};
  ExperimentResult res;
  res.experiment = "timing";
  std::vector<double> times[3];
  for (std::size_t s = 0; s < test.samples.size(); ++s) {
    const auto& h = test.samples[s];
    double rate[3]{}, t[3]{};
    // Timed runs keep no traces; the power audit reruns them untimed.
    const bool ok = guarded([&] {
      wmmse::SolverOptions opts;
      wmmse::BeamformerSet v;
      opts.max_iters = cfg.wmmse_iters;
      t[0] = timed([&] { v = wmmse::run_wmmse(h, net, opts).v; });
      rate[0] = wmmse::sum_rate(h, v, net.sigma, net.alpha);
      opts.max_iters = cfg.tr_iters;
      t[1] = timed([&] { v = wmmse::run_wmmse(h, net, opts).v; });
      rate[1] = wmmse::sum_rate(h, v, net.sigma, net.alpha);
      t[2] = timed([&] { v = model::forward(h, params, net, K).v; });
      rate[2] = wmmse::sum_rate(h, v, net.sigma, net.alpha);
      solve_wmmse(h, net, cfg.wmmse_iters, res.power);
      solve_wmmse(h, net, cfg.tr_iters, res.power);
      solve_uwmmse(h, params, net, K, res.power);
    });
    if (!ok) {
      ++res.missing;
      continue;
    }
    if (s == 0) continue;  // warm-up
    for (int a = 0; a < 3; ++a) {
      times[a].push_back(t[a]);
      res.rows.push_back({res.experiment, s, names[a], net.M, fading_name(test.fading),
                          static_cast<double>(K), rate[a], rate[a] / rate[0], t[a]});
    }
  }
  json walls = json::object();
  for (int a = 0; a < 3; ++a) walls[names[a]] = stats_json(times[a]);
  const double w = mean_stderr(times[0]).mean;
  res.aggregates = {{"K", K},
                    {"M", net.M},
                    {"mean_wall_time", walls},
                    {"ratio_uwmmse_over_wmmse", safe_ratio(mean_stderr(times[2]).mean, w)},
                    {"ratio_tr_wmmse_over_wmmse", safe_ratio(mean_stderr(times[1]).mean, w)}};
  return res;
}

ExperimentResult equivariance_test(const ModelParams& params, const channel::ChannelSource& base,
                                   std::size_t K, const EvalConfig& cfg, std::uint64_t seed) {
  channel::ChannelSource src = base;
  src.config.M = cfg.equivariance_M;
  src.seed = derive_seed(seed, "equivariance-csi");
  std::mt19937_64 rng(derive_seed(seed, "equivariance-perm"));
  const auto& net = src.config;

  ExperimentResult res;
  res.experiment = "equivariance";
  double worst = 0.0;
  std::vector<std::size_t> perm(net.M);
  for (std::size_t t = 0; t < cfg.equivariance_trials; ++t) {
    const auto h = src.sample(t);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    double dev = 0.0, rate = 0.0, wall = 0.0;
    const bool ok = guarded([&] {
      wmmse::BeamformerSet v, vp;
      wall = timed([&] { v = solve_uwmmse(h, params, net, K, res.power); });
      vp = solve_uwmmse(h.permuted(perm), params, net, K, res.power);
      double num = 0.0, den = 0.0;
      for (std::size_t a = 0; a < net.M; ++a) {
        num += linalg::frob_norm_sq(vp[a] - v[perm[a]]);
        den += linalg::frob_norm_sq(v[a]);
      }
      dev = std::sqrt(num) / std::sqrt(den);
      rate = wmmse::sum_rate(h, v, net.sigma, net.alpha);
    });
    if (!ok) {
      ++res.missing;
      continue;
    }
    worst = std::max(worst, dev);
    res.rows.push_back({res.experiment, t, alg_name("UWMMSE", K), net.M, fading_name(src.fading),
                        dev, rate, 1.0, wall});
  }
  res.aggregates = {{"K", K}, {"trials", cfg.equivariance_trials}, {"max_rel_deviation", worst},
                    {"missing", res.missing}};
  return res;
}

ExperimentResult gradcheck_experiment(const channel::ChannelSource& base, const ModelParams& like,
                                      std::size_t K, const EvalConfig& cfg, std::uint64_t seed) {
  channel::ChannelSource src = base;
  src.config.M = cfg.gradcheck_M;
  src.seed = derive_seed(seed, "gradcheck-csi");
  const auto& net = src.config;
  const std::uint64_t init_root = derive_seed(seed, "gradcheck-init");

  ExperimentResult res;
  res.experiment = "gradcheck";
  json inits = json::array();
  double min_fraction = 1.0;
  for (std::size_t i = 0; i < cfg.gradcheck_inits; ++i) {
    const auto params = model::init_params(net, like.hyper, split_seed(init_root, i));
    const auto batch = src.batch(i * cfg.gradcheck_batch, cfg.gradcheck_batch);
    const auto program = train::loss_program(batch, params, net, K);
    const auto blocks = params.blocks();
    ad::GradientCheckOptions opts;
    opts.h = cfg.gradcheck_h;
    opts.sample_coordinates = cfg.gradcheck_coordinates;
    opts.seed = split_seed(derive_seed(seed, "gradcheck-coords"), i);
    const auto report = ad::check_gradients(program, blocks, opts);
    const double frac = report.fraction_within(1e-4);
    min_fraction = std::min(min_fraction, frac);
    inits.push_back({{"init", i},
                     {"fraction_within_1e-4", frac},
                     {"max_rel_error", report.max_rel_error},
                     {"mean_rel_error", report.mean_rel_error},
                     {"coordinates", report.entries.size()}});
  }
  res.aggregates = {{"M", net.M},
                    {"K", K},
                    {"batch", cfg.gradcheck_batch},
                    {"h", cfg.gradcheck_h},
                    {"inits", inits},
                    {"min_fraction_within_1e-4", min_fraction}};
  return res;
}

ExperimentResult residual_curves(const TestSet& test, const ModelParams& params,
                                 const EvalConfig& cfg, const model::ResidualOptions& opts) {
  const auto& net = test.network;
  const std::size_t K = cfg.residual_K;
  std::vector<std::vector<double>> values(K);
  std::vector<std::size_t> singular(K, 0);
  ExperimentResult res;
  res.experiment = "residual";
  for (const auto& h : test.samples) {
    model::ResidualTable table;
    const bool ok = guarded([&] {
      const auto f = model::forward(h, params, net, K, /*trace=*/true);
      for (const auto& layer : f.layers) res.power.record(layer.v, net.pmax);
      table = model::necessary_condition_residual(f.layers, h, params, net, opts);
    });
    if (!ok) {
      ++res.missing;
      continue;
    }
    for (std::size_t k = 0; k < table.size(); ++k) {
      for (const auto& r : table[k]) {
        if (r) {
          values[k].push_back(*r);
        } else {
          ++singular[k];
        }
      }
    }
  }
  json layers = json::array();
  for (std::size_t k = 0; k < K; ++k) {
    const double mx = values[k].empty() ? 0.0 : *std::max_element(values[k].begin(), values[k].end());
    layers.push_back({{"layer", k + 1},
                      {"residual", stats_json(values[k])},
                      {"max", mx},
                      {"singular", singular[k]}});
  }
  res.aggregates = {{"K", K}, {"include_mu", opts.include_mu}, {"layers", layers}};
  return res;
}

}  // namespace uwmmse::eval
