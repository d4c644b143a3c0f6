// uwmmse: dataset generation, training and evaluation.
//
// Exit codes: 0 success, 2 usage, 3 runtime failure or divergence, 4 I/O.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "uwmmse/checkpoint.hpp"
#include "uwmmse/config.hpp"
#include "uwmmse/dataset.hpp"
#include "uwmmse/errors.hpp"
#include "uwmmse/eval.hpp"
#include "uwmmse/parallel.hpp"
#include "uwmmse/plot.hpp"
#include "uwmmse/train.hpp"
#include "uwmmse/version.hpp"

namespace fs = std::filesystem;
using namespace uwmmse;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kUsage = 2, kRuntime = 3, kIo = 4 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::size_t threads = 0;
  std::vector<std::string> overrides;
  std::string checkpoint;
  std::string experiment;
  std::optional<std::size_t> count;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::ios_base::failure("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw std::ios_base::failure("write failed for " + path.string());
}

config::RunConfig resolve(const Options& opt, const std::vector<std::string>& extras) {
  config::RunConfig cfg;
  if (!opt.config_path.empty()) cfg = config::load(opt.config_path);
  for (const auto& o : opt.overrides) {
    const auto [k, v] = config::split_assignment(o);
    cfg.set(k, v);
  }
  // --key=value forms left over by the parser.
  for (const auto& x : extras) {
    if (x.rfind("--", 0) != 0 || x.find('=') == std::string::npos) {
      throw UsageError("unrecognized argument '" + x + "'");
    }
    const auto [k, v] = config::split_assignment(x.substr(2));
    cfg.set(k, v);
  }
  if (opt.seed) cfg.seed = *opt.seed;
  cfg.train.seed = cfg.seed;
  cfg.train.threads = resolve_threads(opt.threads);
  cfg.validate();
  return cfg;
}

// Every output directory gets the resolved configuration and the version.
fs::path prepare_out(const Options& opt, const config::RunConfig& cfg) {
  const fs::path dir(opt.out);
  fs::create_directories(dir);
  write_file(dir / "config.txt", cfg.echo());
  write_file(dir / "VERSION", std::string(kVersion) + "\n");
  return dir;
}

int cmd_generate(const Options& opt, const config::RunConfig& cfg) {
  const auto dir = prepare_out(opt, cfg);
  const std::size_t n = opt.count.value_or(cfg.eval.test_size);
  channel::Dataset ds{cfg.network.M, cfg.network.R, cfg.network.T, cfg.network.d,
                      cfg.source("test").batch(0, n)};
  channel::save_dataset(dir / "dataset.bin", ds);
  std::cout << "wrote " << n << " samples to " << (dir / "dataset.bin").string() << "\n";
  return kOk;
}

int cmd_train(const Options& opt, const config::RunConfig& cfg) {
  const auto dir = prepare_out(opt, cfg);
  const auto src = cfg.source("train");
  const auto result = train::train(cfg.train, src, [](const std::string& m) {
    std::cerr << m << "\n";
  });
  checkpoint::save(dir / "checkpoint.txt", result.params, cfg.network);
  const auto& h = result.history;
  write_file(dir / "history.csv", h.to_csv());

  plot::Series val{"validation", {}, {}, {}};
  for (const auto& e : h.evals) {
    val.x.push_back(static_cast<double>(e.step));
    val.y.push_back(e.val_sum_rate);
  }
  write_file(dir / "history.svg",
             plot::line_chart({"Validation sum-rate", "step", "mean sum-rate (bit/s/Hz)"}, {val}));

  std::cout << "steps " << h.train_loss.size() << " best_step " << h.best_step << " best_val "
            << h.best_val << " dropped " << h.dropped_samples
            << (h.stopped_early ? " early_stop" : "") << (h.diverged ? " DIVERGED" : "") << "\n";
  return h.diverged ? kRuntime : kOk;
}

std::vector<double> field(const json& arr, const char* a, const char* b = nullptr) {
  std::vector<double> out;
  for (const auto& x : arr) out.push_back(b ? x.at(a).at(b).get<double>() : x.at(a).get<double>());
  return out;
}

// Plot for the experiments that have a natural curve.
std::optional<std::string> plot_for(const eval::ExperimentResult& r) {
  const auto& a = r.aggregates;
  if (r.experiment == "compare") {
    const auto& hist = a.at("histogram");
    if (hist.empty()) return std::nullopt;
    std::vector<plot::Series> s;
    for (auto it = hist.at("counts").begin(); it != hist.at("counts").end(); ++it) {
      s.push_back({it.key(), {}, it.value().get<std::vector<double>>(), {}});
    }
    return plot::histogram({"Sum-rate histogram", "sum-rate (bit/s/Hz)", "samples"},
                           hist.at("edges").get<std::vector<double>>(), s);
  }
  auto curve = [&](const json& arr, const char* xkey, std::vector<std::string> names,
                   const plot::Axes& axes) {
    std::vector<plot::Series> s;
    for (const auto& n : names) {
      s.push_back({n, field(arr, xkey), field(arr, n.c_str(), "mean"),
                   field(arr, n.c_str(), "stderr")});
    }
    return plot::line_chart(axes, s);
  };
  if (r.experiment == "generalize") {
    return curve(a.at("sizes"), "M", {"uwmmse", "tr_wmmse"},
                 {"Size generalization", "M", "normalized sum-rate"});
  }
  if (r.experiment == "spatial") {
    return curve(a.at("stddevs"), "stddev", {"uwmmse"},
                 {"Spatial generalization", "placement stddev", "normalized sum-rate"});
  }
  if (r.experiment == "robustness") {
    return curve(a.at("rates"), "rate", {"uwmmse", "wmmse"},
                 {"Robustness to CSI distortion", "distortion rate", "normalized sum-rate"});
  }
  if (r.experiment == "convergence") {
    plot::Series uw{"UWMMSE layer", field(a.at("uwmmse_layers"), "layer"),
                    field(a.at("uwmmse_layers"), "f1", "mean"), {}};
    plot::Series w{"WMMSE iteration", field(a.at("wmmse_iterations"), "iteration"),
                   field(a.at("wmmse_iterations"), "f1", "mean"), {}};
    return plot::line_chart({"Weight / power agreement", "layer or iteration", "mean F1"},
                            {uw, w});
  }
  return std::nullopt;
}

int cmd_eval(const Options& opt, const config::RunConfig& cfg) {
  const auto& names = eval::experiment_names();
  if (std::find(names.begin(), names.end(), opt.experiment) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    throw UsageError("unknown experiment '" + opt.experiment + "'; valid names: " + list);
  }
  model::ModelParams params;
  if (!opt.checkpoint.empty()) {
    const auto ck = checkpoint::load(opt.checkpoint);
    if (ck.network.R != cfg.network.R || ck.network.T != cfg.network.T) {
      throw ConfigError("checkpoint was trained for R=" + std::to_string(ck.network.R) +
                        ", T=" + std::to_string(ck.network.T) + "; config has R=" +
                        std::to_string(cfg.network.R) + ", T=" + std::to_string(cfg.network.T));
    }
    params = ck.params;
  } else if (opt.experiment == "gradcheck") {
    params = model::init_params(
        cfg.network, model::Hyper::for_network(cfg.network, cfg.train.hidden_F, cfg.train.hidden_G),
        cfg.seed);
  } else {
    throw UsageError("experiment '" + opt.experiment + "' needs --checkpoint");
  }

  const auto dir = prepare_out(opt, cfg);
  const std::size_t K = cfg.train.K_infer;
  const std::size_t threads = cfg.train.threads;
  const auto& e = cfg.eval;
  const auto src = cfg.source("test");
  eval::ExperimentResult r;
  if (opt.experiment == "compare") {
    r = eval::compare_algorithms(eval::make_testset(src, e.test_size), params, K, e, threads);
  } else if (opt.experiment == "generalize") {
    r = eval::generalization_sweep(params, src, K, e, threads);
  } else if (opt.experiment == "spatial") {
    r = eval::spatial_generalization(params, src, K, e, threads);
  } else if (opt.experiment == "convergence") {
    r = eval::convergence_f1(eval::make_testset(src, e.sweep_samples), params, K, e, threads);
  } else if (opt.experiment == "robustness") {
    r = eval::robustness_sweep(eval::make_testset(src, e.sweep_samples), params, K, e, cfg.seed,
                               threads);
  } else if (opt.experiment == "timing") {
    auto tsrc = src;
    tsrc.config.M = e.timing_M;
    r = eval::timing_benchmark(eval::make_testset(tsrc, e.timing_samples + 1), params, K, e);
  } else if (opt.experiment == "equivariance") {
    r = eval::equivariance_test(params, src, K, e, cfg.seed);
  } else {
    r = eval::gradcheck_experiment(src, params, cfg.train.K_train, e, cfg.seed);
  }

  write_file(dir / (r.experiment + ".csv"), r.to_csv());
  const json summary = r.summary(cfg.to_json());
  write_file(dir / (r.experiment + ".json"), summary.dump(2) + "\n");
  if (auto svg = plot_for(r)) write_file(dir / (r.experiment + ".svg"), *svg);

  if (r.experiment == "equivariance") {
    std::cout << "max relative deviation " << r.aggregates.at("max_rel_deviation") << "\n";
  }
  json brief = r.aggregates;
  brief.erase("histogram");  // full bins are in the JSON file
  std::cout << brief.dump(2) << "\n";
  std::cout << "power: " << r.power.checked << " beamformers checked, " << r.power.violations
            << " above budget, max ratio " << r.power.max_ratio << "\n";
  if (r.missing > 0) std::cerr << "warning: " << r.missing << " samples missing (solver failed)\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unfolded WMMSE beamforming: generate, train, eval"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  Options opt;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "key=value configuration file");
    sub->add_option("--seed", opt.seed, "global seed");
    sub->add_option("--out", opt.out, "output directory (created if missing)");
    sub->add_option("--threads", opt.threads, "worker cap (0 = all cores)");
    sub->add_option("--override", opt.overrides, "key=value, repeatable");
    sub->allow_extras();
  };
  auto* gen = app.add_subcommand("generate", "write a CSI dataset file");
  common(gen);
  gen->add_option("--count", opt.count, "number of samples (default eval.test_size)");
  auto* tr = app.add_subcommand("train", "train and write a checkpoint plus history");
  common(tr);
  auto* ev = app.add_subcommand("eval", "run an experiment");
  common(ev);
  ev->add_option("--checkpoint", opt.checkpoint, "checkpoint file");
  ev->add_option("--experiment", opt.experiment, "experiment name")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    const auto cfg = resolve(opt, sub->remaining());
    if (sub == gen) return cmd_generate(opt, cfg);
    if (sub == tr) return cmd_train(opt, cfg);
    return cmd_eval(opt, cfg);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
}
