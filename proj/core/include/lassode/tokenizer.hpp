#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "lassode/autodiff.hpp"
#include "lassode/model_config.hpp"
#include "lassode/nn.hpp"
#include "lassode/param_store.hpp"

namespace lassode {

class ChannelOutOfRange : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Uniform partition of [0, 1] into `size` tokens.
struct TokenGrid {
  std::size_t size = 0;

  static TokenGrid uniform(std::size_t k);
  double start(std::size_t k) const;
  double end(std::size_t k) const;
  std::vector<double> starts() const;
  /// Token index holding time t; t = 1 belongs to the last token.
  std::size_t token_of(double t) const;
};

struct RbfBank {
  std::vector<double> centers;
  double sigma = 0.25;

  /// `k` centers evenly spaced on [0, 1], endpoints included.
  static RbfBank uniform(std::size_t k, double sigma);
};

std::vector<double> rbf_embed(double t, const RbfBank& bank);
/// [sin(2 pi l t), cos(2 pi l t)] for l = 1 .. width/2.
std::vector<double> fourier_embed(double t, std::size_t width);

/// K_token x K_rbf matrix of time features at every token start.
Tensor time_features(const ModelConfig& cfg, const TokenGrid& grid);

struct Modulation {
  ad::Var gamma;  // K_token x d_model
  ad::Var beta;   // K_token x d_model
};

/// (gamma; beta) = MLP_mod(LN(features)).
Modulation time_modulation(ParamScope& scope, const ModelConfig& cfg, const Tensor& features);

/// e_jk = gamma_k * proj_j + beta_k for every channel row j of `proj`, stacked
/// channel major (row j*K + k).
ad::Var modulate(const ad::Var& proj, const Modulation& mod);

/// Adds C^(j) to every token row of channel j. Throws ChannelOutOfRange when
/// d_x exceeds the table height.
ad::Var add_channel_encoding(const ad::Var& tokens, const ad::Var& table, std::size_t d_x,
                             std::size_t k_token);

/// Token matrix for all K_token tokens of every channel, (K_token*d_x) x d_model.
ad::Var tokenize(ParamScope& scope, const ModelConfig& cfg, const ad::Var& h);

void add_tokenizer_params(ParamStore& store, const ModelConfig& cfg, Rng& rng);

}  // namespace lassode
