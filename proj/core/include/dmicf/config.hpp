#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dmicf/model.hpp"
#include "dmicf/trainer.hpp"

namespace dmicf {

/// Everything a CLI run needs. Text form is `dotted.key = value` per line,
/// optionally grouped under `[section]` headers that prefix the keys.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::size_t> cutoffs = {20, 40};
  std::string data_train;
  std::string data_test;
  std::string output_dir = "run";
  std::size_t threads = 1;

  /// Throws ConfigError naming the key for unknown keys or bad values.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;

  /// Checks cross-field constraints (model, train, cutoffs).
  void validate() const;

  /// Every key, one `key = value` line each, in table order.
  std::string to_string() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Recognised keys in table order.
const std::vector<ConfigKey>& config_keys();

/// Applies `text` on top of `base`. `origin` prefixes error messages.
RunConfig parse_config(std::string_view text, const std::string& origin, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

std::vector<std::size_t> parse_cutoffs(std::string_view text);

}  // namespace dmicf
