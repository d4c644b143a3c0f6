#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "support.hpp"
#include "uwmmse/checkpoint.hpp"
#include "uwmmse/config.hpp"
#include "uwmmse/plot.hpp"
#include "uwmmse/seeding.hpp"

using namespace uwmmse;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(UWMMSE_BIN) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  TempDir() : path(fs::temp_directory_path() / ("uwmmse_cli_" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config echo parses back to the same configuration") {
  auto c = config::parse("# comment\nseed = 9\nnetwork.M = 12\neval.p_threshold = 0.25\n"
                         "train.optimizer = novograd\neval.sizes = 10, 30\n");
  CHECK(c.seed == 9);
  CHECK(c.network.M == 12);
  CHECK(c.eval.p_threshold == 0.25);
  CHECK(c.eval.sizes == std::vector<std::size_t>{10, 30});
  const auto again = config::parse(c.echo());
  CHECK(again.echo() == c.echo());
  CHECK(config::known_keys().size() > 40);
}

TEST_CASE("config errors name the line") {
  CHECK_THROWS_AS(config::parse("network.nope = 1"), ConfigError);
  CHECK_THROWS_AS(config::parse("network.M = ten"), ConfigError);
  CHECK_THROWS_AS(config::parse("network.M"), ConfigError);
  try {
    (void)config::parse("seed = 1\n\nnetwork.fading = nakagami\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  CHECK(config::split_assignment("  a.b =  c ") == std::pair<std::string, std::string>{"a.b", "c"});
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto src = test::rayleigh_source(4, 1);
  const auto p = model::init_params(src.config, model::Hyper::for_network(src.config), 7);
  const auto text = checkpoint::encode(p, src.config);
  const auto back = checkpoint::decode(text);
  CHECK(back.params == p);
  CHECK(back.network.R == src.config.R);
  const auto h = src.sample(0);
  CHECK(model::forward(h, back.params, src.config, 3).v == model::forward(h, p, src.config, 3).v);

  TempDir dir;
  checkpoint::save(dir.path / "c.txt", p, src.config);
  CHECK(checkpoint::load(dir.path / "c.txt").params == p);
  CHECK_THROWS_AS(checkpoint::load(dir.path / "missing.txt"), std::ios_base::failure);
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto src = test::rayleigh_source(4, 1);
  const auto p = model::init_params(src.config, model::Hyper::for_network(src.config), 7);
  const auto text = checkpoint::encode(p, src.config);
  CHECK_THROWS_AS(checkpoint::decode(text.substr(0, text.size() / 2)), FormatError);

  auto flipped = text;
  flipped[text.find("block") + 20] ^= 1;
  CHECK_THROWS_AS(checkpoint::decode(flipped), FormatError);

  // A future version with a valid hash.
  auto body = text.substr(0, text.rfind("hash "));
  body.replace(body.find(" 1\n"), 3, " 2\n");
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(fnv1a64(body)));
  try {
    (void)checkpoint::decode(body + "hash " + hex + "\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
}

TEST_CASE("charts are well-formed SVG") {
  const auto svg = plot::line_chart({"t", "x", "y"}, {{"a", {1, 2, 3}, {1, 4, 9}, {0.1, 0.2, 0.3}},
                                                     {"b & c", {1, 2}, {2, 2}, {}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("b &amp; c") != std::string::npos);
  const auto hist = plot::histogram({"h", "x", "n"}, {0, 1, 2}, {{"a", {}, {3, 5}, {}}});
  CHECK(hist.find("</svg>") != std::string::npos);
}

TEST_CASE("command line end to end") {
  TempDir dir;
  const auto out = dir.path.string();
  CHECK(run("--version") == 0);
  CHECK(run("") == 2);
  CHECK(run("generate --out " + out + " --count 2 --network.M=3") == 0);
  CHECK(fs::file_size(dir.path / "dataset.bin") == 32 + 2 * 9 * 15 * 16);
  CHECK(fs::exists(dir.path / "config.txt"));
  CHECK(fs::exists(dir.path / "VERSION"));

  const std::string small = " --network.M=3 --train.max_steps=2 --train.batch_size=2 "
                            "--train.eval_every=1 --train.val_size=2 --eval.test_size=2";
  CHECK(run("train --out " + out + small) == 0);
  CHECK(fs::exists(dir.path / "checkpoint.txt"));
  CHECK(slurp(dir.path / "history.csv").rfind("step,train_loss,val_sum_rate", 0) == 0);

  const auto ckpt = (dir.path / "checkpoint.txt").string();
  CHECK(run("eval --out " + out + " --checkpoint " + ckpt + " --experiment compare" + small +
            " --eval.wmmse_iters=5") == 0);
  CHECK(fs::exists(dir.path / "compare.csv"));
  CHECK(fs::exists(dir.path / "compare.json"));
  CHECK(fs::exists(dir.path / "compare.svg"));

  CHECK(run("eval --out " + out + " --checkpoint " + ckpt + " --experiment bogus") == 2);
  CHECK(run("eval --out " + out + " --experiment compare") == 2);
  CHECK(run("eval --out " + out + " --checkpoint " + out + "/none.txt --experiment compare") == 4);
  CHECK(run("train --out " + out + " --network.fading=nakagami") == 2);
  CHECK(run("train --out " + out + " --override nonsense") == 2);
}
