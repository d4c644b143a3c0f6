#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "support.hpp"
#include "uwmmse/train.hpp"
#include "uwmmse/wmmse.hpp"

using namespace uwmmse;
using namespace uwmmse::train;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.batch_size = 4;
  c.max_steps = 6;
  c.early_stop.eval_every = 2;
  c.early_stop.val_size = 4;
  c.early_stop.patience = 100;
  c.seed = 3;
  return c;
}

}  // namespace

TEST_CASE("optimizer names round trip") {
  CHECK(parse_optimizer(to_string(OptimizerKind::kNovoGrad)) == OptimizerKind::kNovoGrad);
  CHECK(parse_optimizer("adam") == OptimizerKind::kAdam);
  CHECK_THROWS_AS(parse_optimizer("sgd"), ConfigError);
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("zero-theta loss is minus the mean pinned sum-rate") {
  const auto src = test::rayleigh_source(5, 4);
  const auto batch = src.batch(0, 3);
  const auto p0 = model::zero_theta(model::init_params(src.config, model::Hyper::for_network(src.config), 1));
  double mean = 0;
  for (const auto& h : batch) mean += wmmse::sum_rate(h, wmmse::run_pinned(h, src.config, 2, p0.mu).back().v, src.config.sigma);
  mean /= 3.0;
  CHECK(loss(batch, p0, src.config, 2) == doctest::Approx(-mean).epsilon(1e-10));
}

TEST_CASE("loss and gradient are consistent and batch-order reduced") {
  const auto src = test::rayleigh_source(4, 5);
  const auto params = model::init_params(src.config, model::Hyper::for_network(src.config), 2);
  const auto batch = src.batch(0, 3);
  const auto a = loss_and_gradient(batch, params, src.config, 1, 1);
  const auto b = loss_and_gradient(batch, params, src.config, 1, 3);
  CHECK(a.used == 3);
  CHECK(a.loss == b.loss);
  for (std::size_t k = 0; k < a.gradient.blocks.size(); ++k) CHECK(a.gradient.blocks[k] == b.gradient.blocks[k]);
  CHECK(a.loss == doctest::Approx(loss(batch, params, src.config, 1)).epsilon(1e-12));

  // Duplicating the batch leaves the mean unchanged.
  auto twice = batch;
  twice.insert(twice.end(), batch.begin(), batch.end());
  CHECK(loss(twice, params, src.config, 1) == doctest::Approx(loss(batch, params, src.config, 1)).epsilon(1e-13));
}

TEST_CASE("zero learning rate leaves the parameters unchanged") {
  const auto src = test::rayleigh_source(4, 6);
  const auto params = model::init_params(src.config, model::Hyper::for_network(src.config), 3);
  const auto g = loss_and_gradient(src.batch(0, 2), params, src.config, 1).gradient;
  for (auto kind : {OptimizerKind::kAdam, OptimizerKind::kNovoGrad}) {
    auto p = params;
    Optimizer opt(kind, 0.0, p);
    opt.step(p, g);
    CHECK(p == params);
    Optimizer moving(kind, 1e-2, p);
    moving.step(p, g);
    CHECK_FALSE(p == params);
  }
}

TEST_CASE("training is deterministic and returns the best validation point") {
  const auto src = test::rayleigh_source(4, 7);
  const auto cfg = small_config();
  const auto a = train::train(cfg, src);
  const auto b = train::train(cfg, src);
  CHECK(a.params == b.params);
  CHECK(a.history.train_loss == b.history.train_loss);
  CHECK(a.history.train_loss.size() == 6);
  REQUIRE_FALSE(a.history.evals.empty());
  const auto best = std::max_element(a.history.evals.begin(), a.history.evals.end(),
                                     [](const auto& x, const auto& y) { return x.val_sum_rate < y.val_sum_rate; });
  CHECK(a.history.best_val == best->val_sum_rate);
  CHECK(a.history.best_step == best->step);

  auto threaded = cfg;
  threaded.threads = 3;
  CHECK(train::train(threaded, src).params == a.params);
}

TEST_CASE("no steps returns the initialization") {
  const auto src = test::rayleigh_source(4, 8);
  auto cfg = small_config();
  cfg.max_steps = 0;
  const auto init = model::init_params(src.config, model::Hyper::for_network(src.config), 11);
  const auto r = train_from(init, cfg, src);
  CHECK(r.params == init);
  CHECK(r.history.train_loss.empty());
}

TEST_CASE("history CSV has one row per step") {
  TrainHistory h;
  h.train_loss = {-1.5, -2.0};
  h.evals.push_back({2, 3.25});
  std::istringstream in(h.to_csv());
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,train_loss,val_sum_rate");
  std::getline(in, line);
  CHECK(line.rfind("1,-1.5,", 0) == 0);
  std::getline(in, line);
  CHECK(line == "2,-2,3.25");
}
