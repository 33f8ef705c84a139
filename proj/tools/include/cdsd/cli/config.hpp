#pragma once

// Flat key/value configuration.
//
//   ; comment
//   [train]
//   lambda_s = 0.005
//   model.d_z = 5        ; dotted keys work at top level too
//
// Command-line `--section.key=value` flags override file values, and the
// CDSD_SEED environment variable overrides gen.seed and train.seed.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdsd/baseline.hpp"
#include "cdsd/model.hpp"
#include "cdsd/optim.hpp"
#include "cdsd/synth.hpp"

namespace cdsd::cli {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config parse_file(const std::filesystem::path& path);
  static Config parse_string(const std::string& text);

  /// Applies `--key=value` arguments. Anything else is a ConfigError.
  void apply_overrides(const std::vector<std::string>& args);
  /// Reads CDSD_SEED (if set) into gen.seed and train.seed.
  void apply_environment();

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::optional<std::string> raw(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  std::vector<std::size_t> get_sizes(const std::string& key, const std::vector<std::size_t>& fallback) const;
  std::size_t require_size(const std::string& key) const;

  /// Throws ConfigError naming every key that was never read.
  void check_all_used() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> used_;
};

synth::GenConfig gen_config(const Config& c);

/// d_x comes from the data; d_z and tau must be present in the config.
model::ModelConfig model_config(const Config& c, std::size_t d_x);

optim::TrainConfig train_config(const Config& c);

struct EvalOptions {
  double single_parent_threshold = 0.1;
  double edge_threshold = 0.5;
};

EvalOptions eval_options(const Config& c);

struct BaselineOptions {
  std::size_t d_z = 0;
  std::size_t tau = 1;
  double alpha = 0.05;
  baseline::VarimaxOptions varimax;
};

BaselineOptions baseline_options(const Config& c);

}  // namespace cdsd::cli
