#pragma once

#include <cstddef>
#include <vector>

#include "lassode/autodiff.hpp"
#include "lassode/model_config.hpp"
#include "lassode/nn.hpp"
#include "lassode/param_store.hpp"

namespace lassode {

inline constexpr double kGruUpdateBias = 2.0;

/// Registers a stacked GRU under `<prefix>.l{i}` with tensors w_ih (in x 3H),
/// w_hh (H x 3H), b_ih and b_hh (1 x 3H). Gate blocks are ordered r, z, n.
/// Weights are U(+-1/sqrt(H)); the z block of b_hh is shifted by kGruUpdateBias.
void add_gru(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
             std::size_t layers, Rng& rng);

/// One GRU layer over precomputed input projections `xi` (T*batch x 3H, time
/// major: row t*batch + b). The initial hidden state is zero. Returns every
/// hidden state in the same row layout.
ad::Var gru_recurrence(const ad::Var& xi, std::size_t batch, const ad::Var& w_hh,
                       const ad::Var& b_hh);

/// Full stacked GRU; returns the last layer's hidden states (T*batch x H).
ad::Var gru_sequence(ParamScope& scope, const std::string& prefix, const ad::Var& x,
                     std::size_t batch, std::size_t layers);

struct ChannelSummary {
  ad::Var h;              // d_x x gru_hidden, one row per channel
  ad::Var hidden_states;  // T*d_x x gru_hidden, time major (empty for MLP summaries)
  std::size_t prefix_end = 0;
};

/// Builds the per-channel GRU input rows [x_j(t_i), dt_i] in time-major order.
/// dt_0 repeats the first interval.
Tensor encoder_inputs(const Tensor& values, const std::vector<double>& times);

/// Runs the GRU once over the whole trajectory and keeps the hidden state at
/// index prefix_len - 1 for every channel. Honors the encoder ablations.
ChannelSummary encode_channels(ParamScope& scope, const ModelConfig& cfg, const Tensor& values,
                               const std::vector<double>& times, std::size_t prefix_len);

struct LatentPosterior {
  ad::Var mu;     // d_x x d_z
  ad::Var sigma;  // d_x x d_z, clamped to [kSigmaMin, kSigmaMax]
};

inline constexpr double kSigmaMin = 1e-4;
inline constexpr double kSigmaMax = 1e2;

LatentPosterior posterior(ParamScope& scope, const ad::Var& h);

enum class LatentMode { Sample, Mean };

/// mu + sigma * eps with eps ~ N(0, I) drawn from `rng`; Mean returns mu.
ad::Var sample_z0(const LatentPosterior& post, LatentMode mode, Rng& rng);
/// Reparameterized sample with a caller-supplied noise tensor.
ad::Var sample_z0(const LatentPosterior& post, const Tensor& eps);

/// Registers every encoder tensor (`encoder.*`) the configuration needs.
void add_encoder_params(ParamStore& store, const ModelConfig& cfg, Rng& rng);

}  // namespace lassode
