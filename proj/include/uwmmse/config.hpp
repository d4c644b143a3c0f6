#pragma once

// Run configuration: flat `key = value` text with section prefixes
// (network., train., eval.) plus the top-level `seed`. Lines starting with '#'
// are comments. Lists are comma separated. The same keys are accepted as
// command-line overrides.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "uwmmse/channel.hpp"
#include "uwmmse/eval.hpp"
#include "uwmmse/train.hpp"

namespace uwmmse::config {

struct RunConfig {
  channel::NetworkConfig network;
  channel::FadingSpec fading;
  channel::SpatialSpec spatial;
  train::TrainConfig train;
  eval::EvalConfig eval;
  std::uint64_t seed = 0;

  // Throws ConfigError for an unknown key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  // Validates every section; throws ConfigError.
  void validate() const;

  // Every key with its resolved value, one `key = value` per line, in a fixed
  // order. Parsing the echo reproduces the configuration.
  [[nodiscard]] std::string echo() const;
  [[nodiscard]] nlohmann::json to_json() const;

  // Channel stream for the given purpose, seeded from the global seed.
  [[nodiscard]] channel::ChannelSource source(const std::string& purpose) const;
};

// All recognized keys, in echo order.
const std::vector<std::string>& known_keys();

// Applies the lines of `text` on top of `base`.
RunConfig parse(const std::string& text, RunConfig base = {});
// Throws std::ios_base::failure if the file cannot be read.
RunConfig load(const std::filesystem::path& path, RunConfig base = {});

// Splits "key=value" (whitespace around both trimmed); ConfigError if there
// is no '='.
std::pair<std::string, std::string> split_assignment(const std::string& text);

}  // namespace uwmmse::config
