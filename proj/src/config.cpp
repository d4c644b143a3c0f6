#include "uwmmse/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "uwmmse/errors.hpp"
#include "uwmmse/seeding.hpp"

namespace uwmmse::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError("bad value '" + text + "' for " + key);
  }
  return v;
}

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (trim(text).empty()) return out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(key, trim(item)));
  return out;
}

std::string fmt(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
std::string fmt(std::size_t v) { return std::to_string(v); }

template <class T>
std::string fmt_list(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (k) out += ',';
    out += fmt(xs[k]);
  }
  return out;
}

std::string spatial_name(const channel::SpatialSpec& s) {
  return s.kind == channel::SpatialSpec::Kind::kUniform ? "uniform" : "gaussian";
}

struct Entry {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Binds a key to a size_t / double member reached through `field`.
template <class Field>
Entry size_entry(std::string key, Field field) {
  return {key,
          [key, field](RunConfig& c, const std::string& v) {
            field(c) = parse_number<std::size_t>(key, v);
          },
          [field](const RunConfig& c) { return fmt(field(c)); }};
}

template <class Field>
Entry double_entry(std::string key, Field field) {
  return {key,
          [key, field](RunConfig& c, const std::string& v) { field(c) = parse_number<double>(key, v); },
          [field](const RunConfig& c) { return fmt(field(c)); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"seed",
                 [](RunConfig& c, const std::string& v) {
                   c.seed = parse_number<std::uint64_t>("seed", v);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});

    t.push_back(size_entry("network.M", [](auto& c) -> auto& { return c.network.M; }));
    t.push_back(size_entry("network.R", [](auto& c) -> auto& { return c.network.R; }));
    t.push_back(size_entry("network.T", [](auto& c) -> auto& { return c.network.T; }));
    t.push_back(size_entry("network.d", [](auto& c) -> auto& { return c.network.d; }));
    t.push_back(double_entry("network.sigma", [](auto& c) -> auto& { return c.network.sigma; }));
    t.push_back(double_entry("network.pmax", [](auto& c) -> auto& { return c.network.pmax; }));
    t.push_back({"network.alpha",
                 [](RunConfig& c, const std::string& v) {
                   c.network.alpha = parse_list<double>("network.alpha", v);
                 },
                 [](const RunConfig& c) { return fmt_list(c.network.alpha); }});
    t.push_back({"network.v_convention",
                 [](RunConfig& c, const std::string& v) {
                   c.network.v_convention = channel::parse_v_convention(v);
                 },
                 [](const RunConfig& c) { return channel::to_string(c.network.v_convention); }});
    t.push_back({"network.fading",
                 [](RunConfig& c, const std::string& v) {
                   c.fading = channel::parse_fading(v, c.fading.k_factor);
                 },
                 [](const RunConfig& c) { return channel::to_string(c.fading.kind); }});
    t.push_back(double_entry("network.k_factor", [](auto& c) -> auto& { return c.fading.k_factor; }));
    t.push_back({"network.spatial",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "uniform") {
                     c.spatial.kind = channel::SpatialSpec::Kind::kUniform;
                   } else if (v == "gaussian") {
                     c.spatial.kind = channel::SpatialSpec::Kind::kGaussian;
                   } else {
                     throw ConfigError("unknown spatial '" + v + "' (expected uniform|gaussian)");
                   }
                 },
                 [](const RunConfig& c) { return spatial_name(c.spatial); }});
    t.push_back(double_entry("network.spatial_stddev",
                             [](auto& c) -> auto& { return c.spatial.stddev; }));

    t.push_back(size_entry("train.K_train", [](auto& c) -> auto& { return c.train.K_train; }));
    t.push_back(size_entry("train.K_infer", [](auto& c) -> auto& { return c.train.K_infer; }));
    t.push_back(size_entry("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
    t.push_back(size_entry("train.max_steps", [](auto& c) -> auto& { return c.train.max_steps; }));
    t.push_back(double_entry("train.learning_rate",
                             [](auto& c) -> auto& { return c.train.learning_rate; }));
    t.push_back({"train.optimizer",
                 [](RunConfig& c, const std::string& v) { c.train.optimizer = train::parse_optimizer(v); },
                 [](const RunConfig& c) { return train::to_string(c.train.optimizer); }});
    t.push_back(size_entry("train.eval_every",
                           [](auto& c) -> auto& { return c.train.early_stop.eval_every; }));
    t.push_back(size_entry("train.patience",
                           [](auto& c) -> auto& { return c.train.early_stop.patience; }));
    t.push_back(size_entry("train.val_size",
                           [](auto& c) -> auto& { return c.train.early_stop.val_size; }));
    t.push_back(size_entry("train.hidden_F", [](auto& c) -> auto& { return c.train.hidden_F; }));
    t.push_back(size_entry("train.hidden_G", [](auto& c) -> auto& { return c.train.hidden_G; }));

    t.push_back(size_entry("eval.test_size", [](auto& c) -> auto& { return c.eval.test_size; }));
    t.push_back(size_entry("eval.sweep_samples", [](auto& c) -> auto& { return c.eval.sweep_samples; }));
    t.push_back(size_entry("eval.wmmse_iters", [](auto& c) -> auto& { return c.eval.wmmse_iters; }));
    t.push_back(size_entry("eval.tr_iters", [](auto& c) -> auto& { return c.eval.tr_iters; }));
    t.push_back(size_entry("eval.histogram_bins",
                           [](auto& c) -> auto& { return c.eval.histogram_bins; }));
    t.push_back({"eval.sizes",
                 [](RunConfig& c, const std::string& v) {
                   c.eval.sizes = parse_list<std::size_t>("eval.sizes", v);
                 },
                 [](const RunConfig& c) { return fmt_list(c.eval.sizes); }});
    t.push_back({"eval.sweep_fading",
                 [](RunConfig& c, const std::string& v) {
                   c.eval.sweep_fading = channel::parse_fading(v, c.eval.sweep_fading.k_factor);
                 },
                 [](const RunConfig& c) { return channel::to_string(c.eval.sweep_fading.kind); }});
    t.push_back(double_entry("eval.sweep_k_factor",
                             [](auto& c) -> auto& { return c.eval.sweep_fading.k_factor; }));
    t.push_back({"eval.stddevs",
                 [](RunConfig& c, const std::string& v) {
                   c.eval.stddevs = parse_list<double>("eval.stddevs", v);
                 },
                 [](const RunConfig& c) { return fmt_list(c.eval.stddevs); }});
    t.push_back({"eval.rates",
                 [](RunConfig& c, const std::string& v) { c.eval.rates = parse_list<double>("eval.rates", v); },
                 [](const RunConfig& c) { return fmt_list(c.eval.rates); }});
    t.push_back(double_entry("eval.sigma_r", [](auto& c) -> auto& { return c.eval.sigma_r; }));
    t.push_back(double_entry("eval.w_threshold", [](auto& c) -> auto& { return c.eval.w_threshold; }));
    t.push_back({"eval.p_threshold",
                 [](RunConfig& c, const std::string& v) {
                   if (v == "auto") {
                     c.eval.p_threshold.reset();
                   } else {
                     c.eval.p_threshold = parse_number<double>("eval.p_threshold", v);
                   }
                 },
                 [](const RunConfig& c) {
                   return c.eval.p_threshold ? fmt(*c.eval.p_threshold) : std::string("auto");
                 }});
    t.push_back({"eval.f1_iterations",
                 [](RunConfig& c, const std::string& v) {
                   c.eval.f1_iterations = parse_list<std::size_t>("eval.f1_iterations", v);
                 },
                 [](const RunConfig& c) { return fmt_list(c.eval.f1_iterations); }});
    t.push_back(size_entry("eval.timing_M", [](auto& c) -> auto& { return c.eval.timing_M; }));
    t.push_back(size_entry("eval.timing_samples",
                           [](auto& c) -> auto& { return c.eval.timing_samples; }));
    t.push_back(size_entry("eval.equivariance_M",
                           [](auto& c) -> auto& { return c.eval.equivariance_M; }));
    t.push_back(size_entry("eval.equivariance_trials",
                           [](auto& c) -> auto& { return c.eval.equivariance_trials; }));
    t.push_back(size_entry("eval.gradcheck_M", [](auto& c) -> auto& { return c.eval.gradcheck_M; }));
    t.push_back(size_entry("eval.gradcheck_batch",
                           [](auto& c) -> auto& { return c.eval.gradcheck_batch; }));
    t.push_back(size_entry("eval.gradcheck_inits",
                           [](auto& c) -> auto& { return c.eval.gradcheck_inits; }));
    t.push_back(size_entry("eval.gradcheck_coordinates",
                           [](auto& c) -> auto& { return c.eval.gradcheck_coordinates; }));
    t.push_back(double_entry("eval.gradcheck_h", [](auto& c) -> auto& { return c.eval.gradcheck_h; }));
    t.push_back(size_entry("eval.residual_K", [](auto& c) -> auto& { return c.eval.residual_K; }));
    return t;
  }();
  return table;
}

}  // namespace

const std::vector<std::string>& known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.push_back(e.key);
    return k;
  }();
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (e.key == key) {
      e.set(*this, trim(value));
      return;
    }
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void RunConfig::validate() const {
  network.validate();
  fading.validate();
  if (spatial.kind == channel::SpatialSpec::Kind::kGaussian && !(spatial.stddev > 0.0)) {
    throw ConfigError("network.spatial_stddev must be > 0");
  }
  train.validate();
  if (!(train.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  eval.validate();
}

std::string RunConfig::echo() const {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(*this) + "\n";
  return out;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& e : entries()) j[e.key] = e.get(*this);
  return j;
}

channel::ChannelSource RunConfig::source(const std::string& purpose) const {
  return {network, fading, spatial, derive_seed(seed, purpose)};
}

std::pair<std::string, std::string> split_assignment(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + text + "'");
  return {trim(text.substr(0, eq)), trim(text.substr(eq + 1))};
}

RunConfig parse(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    try {
      const auto [key, value] = split_assignment(t);
      base.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(n) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load(const std::filesystem::path& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw std::ios_base::failure("cannot open config " + path.string());
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse(buf.str(), std::move(base));
}

}  // namespace uwmmse::config
