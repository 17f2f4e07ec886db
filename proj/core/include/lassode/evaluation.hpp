#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lassode/model.hpp"
#include "lassode/ode_decoder.hpp"
#include "lassode/pipeline.hpp"
#include "lassode/training.hpp"

namespace lassode {

inline const std::vector<double> kEvalRatios{0.3, 0.6, 0.9};

/// Per-system, per-ratio MSE in normalized units. `mse[s][r]` is the mean
/// over the trajectories of `systems[s]` at `ratios[r]`.
struct EvalReport {
  std::vector<double> ratios;
  std::vector<std::string> systems;  // sorted
  std::vector<std::size_t> counts;   // trajectories per system
  std::vector<std::vector<double>> mse;
  double seconds_per_trajectory = 0.0;  // one prefix, one full decode
  std::string fingerprint;              // model configuration hash, empty for baselines

  /// Arithmetic mean over the ratio rows for one system.
  double average(std::size_t system) const;
  /// Mean over systems at one ratio.
  double system_mean(std::size_t ratio) const;
  std::size_t system_index(const std::string& system) const;
};

/// Mean of squared differences over every entry.
double mse(const Tensor& prediction, const Tensor& target);

/// Maps a trajectory and prefix length to a full (N+1) x d_x prediction.
using Predictor = std::function<Tensor(const NormalizedTrajectory&, std::size_t prefix_len)>;

/// Scores `predict` on every trajectory and ratio. Trajectories are spread
/// over `workers` threads; the result does not depend on the worker count.
EvalReport evaluate_predictor(const std::vector<NormalizedTrajectory>& data,
                              const std::vector<double>& ratios, const Predictor& predict,
                              std::size_t workers = 1);

/// Conditions on each prefix and decodes the full trajectory from the
/// posterior mean. Throws ShapeError when a trajectory has more channels than
/// the model supports.
EvalReport evaluate(const ParamStore& params, const ModelConfig& cfg,
                    const std::vector<NormalizedTrajectory>& data,
                    const std::vector<double>& ratios = kEvalRatios, std::size_t workers = 1);
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<NormalizedTrajectory>& data,
                    const std::vector<double>& ratios = kEvalRatios, std::size_t workers = 1);

/// Prefix values copied, then the last observed value held constant.
Tensor persistence_forecast(const NormalizedTrajectory& nt, std::size_t prefix_len);
EvalReport persistence_baseline(const std::vector<NormalizedTrajectory>& data,
                                const std::vector<double>& ratios = kEvalRatios);

/// 64-bit FNV-1a of the configuration JSON, as 16 hex digits.
std::string config_fingerprint(const ModelConfig& cfg);

// Ablation harness.

struct AblationVariant {
  std::string name;                  // "baseline" for the full model
  std::vector<std::string> toggles;  // AblationToggles names
};

/// "baseline" followed by one variant per toggle.
std::vector<AblationVariant> default_ablation_variants();

struct AblationResult {
  std::string variant;
  std::vector<std::string> systems;
  std::vector<double> mse;  // per system at the ablation ratio
  double mean_mse = 0.0;
  double train_seconds = 0.0;
  std::size_t parameters = 0;
};

/// Trains every variant from the same seed and configuration and scores it
/// on `test` at `ratio`.
std::vector<AblationResult> run_ablation(const std::vector<AblationVariant>& variants,
                                         const ModelConfig& base, const TrainConfig& tc,
                                         const std::vector<NormalizedTrajectory>& train_set,
                                         const std::vector<NormalizedTrajectory>& test,
                                         std::uint64_t init_seed, double ratio = 0.6);

/// Columns: variant, one MSE column per system, mean_mse, train_seconds, parameters.
void write_ablation_csv(const std::filesystem::path& file,
                        const std::vector<AblationResult>& results);

// Integration cost benchmark.

struct BenchOptions {
  std::vector<std::size_t> d_z{15};
  std::vector<std::size_t> d_model{256};
  std::vector<std::size_t> n_step{20};
  std::size_t k_width = 256;
  std::size_t layers = 2;
  std::size_t k_token = 40;
  std::size_t repeats = 7;
  std::size_t warmup = 1;
  std::uint64_t seed = 0;
};

struct BenchCell {
  std::size_t d_z = 0;
  std::size_t d_model = 0;
  std::size_t n_step = 0;
  double param_seconds = 0.0;   // f_param on every token
  double linear_seconds = 0.0;  // solve_piecewise alone
  double mlp_seconds = 0.0;     // solve_mlp_field
  IntegrationCost cost;

  double linear_total() const { return param_seconds + linear_seconds; }
  double measured_ratio() const { return mlp_seconds / linear_total(); }
};

/// Times one trajectory channel through both latent derivatives on random
/// fields of the requested widths (median of `repeats` after `warmup`).
std::vector<BenchCell> bench_integration(const BenchOptions& options);

void write_bench_csv(const std::filesystem::path& file, const std::vector<BenchCell>& cells);

// Introspection.

struct Introspection {
  Tensor csh;                             // K_CSH x d_model (first hub)
  Tensor tokens;                          // tokenizer output rows of every sample
  std::vector<std::string> token_system;  // system label per token row
  std::vector<std::string> token_id;      // trajectory id per token row
  std::vector<std::size_t> token_channel;
  std::vector<std::size_t> token_index;
  Tensor attention;                    // head-averaged first-layer attention, first sample
  std::vector<std::string> attn_rows;  // "token:c<j>k<k>" then "csh:<i>"
};

Introspection introspect(const ParamStore& params, const ModelConfig& cfg,
                         const std::vector<NormalizedTrajectory>& sample, double ratio = 0.6);

/// Writes csh.csv, tokens.csv and attention.csv into `dir`.
void write_introspection(const std::filesystem::path& dir, const Introspection& intro);

}  // namespace lassode
