#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "support.hpp"
#include "uwmmse/eval.hpp"

using namespace uwmmse;
using namespace uwmmse::eval;

namespace {

EvalConfig tiny() {
  EvalConfig c;
  c.wmmse_iters = 20;
  c.sweep_samples = 2;
  c.sizes = {4, 6};
  c.stddevs = {1.0};
  c.rates = {0.0, 0.5};
  c.f1_iterations = {1, 3};
  c.timing_samples = 3;
  c.timing_M = 4;
  c.equivariance_M = 5;
  c.equivariance_trials = 3;
  c.residual_K = 4;
  return c;
}

struct Fixture {
  channel::ChannelSource src = test::rayleigh_source(4, 31);
  ModelParams params = model::init_params(src.config, model::Hyper::for_network(src.config), 2);
  TestSet test = make_testset(src, 2);
  EvalConfig cfg = tiny();
};

std::size_t count_rows(const ExperimentResult& r, const std::string& algorithm) {
  return static_cast<std::size_t>(std::count_if(r.rows.begin(), r.rows.end(),
                                                [&](const Row& x) { return x.algorithm.rfind(algorithm, 0) == 0; }));
}

}  // namespace

TEST_CASE("F1 score examples") {
  CHECK(f1_score({true, false, true}, {true, false, false}) == doctest::Approx(2.0 / 3.0));
  CHECK(f1_score({false, false}, {false, false}) == 0.0);
  CHECK(f1_score({true, true}, {true, true}) == 1.0);
  CHECK_THROWS_AS(f1_score({true}, {true, false}), ShapeError);
}

TEST_CASE("mean and standard error") {
  const auto m = mean_stderr({1.0, 2.0, 3.0, 4.0});
  CHECK(m.mean == 2.5);
  CHECK(m.stderr_ == doctest::Approx(std::sqrt(1.25 * 4.0 / 3.0 / 4.0)));
  CHECK(m.n == 4);
  CHECK(mean_stderr({7.0}).stderr_ == 0.0);
}

TEST_CASE("config validation and threshold default") {
  EvalConfig c;
  CHECK(c.p_threshold_for(4.0) == 1.0);
  c.p_threshold = 0.3;
  CHECK(c.p_threshold_for(4.0) == 0.3);
  c.tr_iters = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("power audit tracks the worst ratio") {
  PowerAudit a;
  a.record(wmmse::BeamformerSet(2, CMatrix(2, 1, 0.5)), 1.0);
  CHECK(a.checked == 2);
  CHECK(a.violations == 0);
  CHECK(a.max_ratio == doctest::Approx(0.5));
  PowerAudit b;
  b.record(wmmse::BeamformerSet(1, CMatrix(1, 1, 2.0)), 1.0);
  a.merge(b);
  CHECK(a.violations == 1);
  CHECK(a.max_ratio == doctest::Approx(4.0));
}

TEST_CASE("comparison emits one row per sample and algorithm") {
  Fixture f;
  const auto r = compare_algorithms(f.test, f.params, 3, f.cfg);
  CHECK(r.rows.size() == 6);
  CHECK(count_rows(r, "WMMSE") == 2);
  for (const auto& row : r.rows)
    if (row.algorithm == "WMMSE(20)") CHECK(row.normalized_sum_rate == 1.0);
  CHECK(r.power.violations == 0);
  CHECK(r.power.checked > 0);
  CHECK(r.aggregates.contains("histogram"));

  std::istringstream csv(r.to_csv());
  std::string line;
  std::getline(csv, line);
  CHECK(line == csv_header());
  std::size_t n = 0;
  while (std::getline(csv, line)) ++n;
  CHECK(n == 6);
  CHECK(r.summary(nlohmann::json::object()).contains("aggregates"));
}

TEST_CASE("size sweep covers every size") {
  Fixture f;
  const auto r = generalization_sweep(f.params, f.src, 3, f.cfg);
  CHECK(r.rows.size() == 2 * 2 * 2);
  CHECK(r.aggregates["sizes"].size() == 2);
}

TEST_CASE("robustness at rate zero equals the clean run") {
  Fixture f;
  const auto r = robustness_sweep(f.test, f.params, 3, f.cfg, 5);
  CHECK(r.aggregates["rate0_identical_to_clean"].get<bool>());
  CHECK(r.aggregates["rates"].size() == 2);
}

TEST_CASE("convergence F1 reports every iteration count") {
  Fixture f;
  const auto r = convergence_f1(f.test, f.params, 3, f.cfg);
  CHECK(r.aggregates["wmmse_iterations"].size() == 2);
  for (const auto& e : r.aggregates["uwmmse_layers"]) {
    CHECK(e["f1"]["mean"].get<double>() >= 0.0);
    CHECK(e["f1"]["mean"].get<double>() <= 1.0);
  }
}

TEST_CASE("timing needs a warm-up plus one sample") {
  Fixture f;
  TestSet one = f.test;
  one.samples.resize(1);
  CHECK_THROWS_AS(timing_benchmark(one, f.params, 3, f.cfg), ConfigError);
  const auto r = timing_benchmark(f.test, f.params, 3, f.cfg);
  CHECK(r.aggregates["ratio_uwmmse_over_wmmse"].get<double>() > 0.0);
}

TEST_CASE("the model is permutation equivariant") {
  Fixture f;
  const auto r = equivariance_test(f.params, f.src, 3, f.cfg, 9);
  CHECK(r.aggregates["max_rel_deviation"].get<double>() <= 1e-6);
}

TEST_CASE("residual curves have one entry per layer") {
  Fixture f;
  const auto r = residual_curves(f.test, f.params, f.cfg);
  CHECK(r.aggregates["layers"].size() == f.cfg.residual_K);
}
