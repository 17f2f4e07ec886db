#pragma once

#include <cstdint>
#include <vector>

#include "lassode/autodiff.hpp"
#include "lassode/backbone.hpp"
#include "lassode/checkpoint.hpp"
#include "lassode/encoder.hpp"
#include "lassode/model_config.hpp"
#include "lassode/ode_decoder.hpp"
#include "lassode/param_store.hpp"
#include "lassode/pipeline.hpp"

namespace lassode {

struct ForwardOptions {
  LatentMode mode = LatentMode::Mean;
  Rng* rng = nullptr;           // required for LatentMode::Sample unless `eps` is set
  const Tensor* eps = nullptr;  // fixed reparameterization noise, d_x x d_z
  bool capture = false;         // record attention and routing
  std::size_t n_step = 0;       // 0 aligns the grid with the observation times
};

struct ForwardResult {
  ad::Var prediction;  // (N+1) x d_x normalized values
  LatentPosterior posterior;
  ad::Var z0;
  ad::Var tokens;        // tokenizer output
  ad::Var final_tokens;  // backbone output
  ad::Var coeffs;        // token-wise field coefficients (empty for the MLP field)
  ChannelSummary summary;
  BackboneTrace trace;
  StepPlan plan;
};

/// Registers every parameter of `cfg` with a seeded initialization.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Full pass on one trajectory: encode the prefix, tokenize all tokens, run
/// the backbone, integrate each channel's latent flow on [0, 1] and read out
/// every timestamp.
ForwardResult forward(ParamScope& scope, const ModelConfig& cfg, const Tensor& values,
                      const std::vector<double>& times, std::size_t prefix_len,
                      const ForwardOptions& options = {});

/// Mean-mode prediction without gradient tracking, (N+1) x d_x.
Tensor predict(const ParamStore& params, const ModelConfig& cfg, const NormalizedTrajectory& nt,
               std::size_t prefix_len);

/// Mean squared error over every entry.
ad::Var mse_loss(const ad::Var& prediction, const Tensor& target);
/// Mean over channels of sum_i 0.5 (mu_i^2 + sigma_i^2 - 1 - ln sigma_i^2).
ad::Var kl_divergence(const LatentPosterior& post);

Checkpoint make_checkpoint(const ModelConfig& cfg, const ParamStore& params);
/// Parses the embedded configuration; throws LoadError when it is missing.
ModelConfig checkpoint_config(const Checkpoint& ckpt);

}  // namespace lassode
