#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lassode/model_config.hpp"
#include "lassode/training.hpp"

namespace lassode {

/// Everything a command-line run can set. Model and training fields are
/// flattened into one key namespace (see run_config_keys()).
struct RunConfig {
  std::string preset = "desk";
  ModelConfig model = ModelConfig::desk();
  TrainConfig train;

  std::string data;  // training dataset directory
  std::string test;  // evaluation dataset directory
  std::string out = "runs";
  std::string checkpoint;

  // generate
  std::vector<std::string> systems{"harmonic_oscillator", "van_der_pol_mu1", "pendulum_damped"};
  std::size_t per_system = 32;

  // eval
  std::vector<double> eval_ratios{0.3, 0.6, 0.9};
  bool svg = false;
  std::size_t plots = 3;

  // finetune
  std::size_t lora_rank = 4;
  double lora_alpha = 8.0;
  double finetune_lr = 5e-3;
  std::size_t finetune_epochs = 30;

  // bench
  std::vector<std::size_t> bench_d_z{15};
  std::vector<std::size_t> bench_d_model{256};
  std::vector<std::size_t> bench_n_step{20};
  std::size_t bench_k_width = 256;
  std::size_t bench_layers = 2;
  std::size_t bench_k_token = 40;
  std::size_t bench_repeats = 7;

  // ablate
  std::vector<std::string> variants;  // empty: every toggle
  double ablation_ratio = 0.6;

  // introspect
  std::size_t sample = 6;

  /// Named preset: "desk" (small CPU model, 200 epochs) or "full" (reference
  /// widths, 1500 epochs). Throws ConfigError for any other name.
  static RunConfig from_preset(const std::string& name);
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;  // JSON text of the current value
  std::function<void(RunConfig&, const std::string& json_value)> set;
};

/// Every settable key, in help order.
const std::vector<ConfigKey>& run_config_keys();

/// Applies one value. `text` is JSON, or for convenience a bare string or a
/// comma-separated list. Throws ConfigError naming the key.
void set_config_value(RunConfig& rc, const std::string& key, const std::string& text);

/// Applies a JSON object of keys. Unknown keys and bad values raise
/// ConfigError naming the key and its line in `text`.
void apply_config_json(RunConfig& rc, const std::string& text, const std::string& source);

/// Resolution order: flag > config file > preset default. The preset comes
/// from `preset_flag`, else the file's "preset" key, else "desk". When no
/// seed is given, LASSODE_SEED is used if set.
RunConfig resolve_run_config(const std::optional<std::string>& preset_flag,
                             const std::optional<std::string>& config_file,
                             const std::map<std::string, std::string>& flags);

/// One line per key with its desk and full preset defaults.
std::string describe_config_keys();

}  // namespace lassode
