#include "lassode/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lassode/ops.hpp"

namespace lassode {

TokenGrid TokenGrid::uniform(std::size_t k) {
  if (k == 0) throw std::invalid_argument("TokenGrid: need at least one token");
  return TokenGrid{k};
}

double TokenGrid::start(std::size_t k) const {
  return static_cast<double>(k) / static_cast<double>(size);
}

double TokenGrid::end(std::size_t k) const {
  return k + 1 == size ? 1.0 : static_cast<double>(k + 1) / static_cast<double>(size);
}

std::vector<double> TokenGrid::starts() const {
  std::vector<double> s(size);
  for (std::size_t k = 0; k < size; ++k) s[k] = start(k);
  return s;
}

std::size_t TokenGrid::token_of(double t) const {
  const auto k = static_cast<std::size_t>(std::max(0.0, std::floor(t * static_cast<double>(size))));
  return std::min(k, size - 1);
}

RbfBank RbfBank::uniform(std::size_t k, double sigma) {
  if (k == 0 || !(sigma > 0.0)) throw std::invalid_argument("RbfBank: need k >= 1 and sigma > 0");
  RbfBank b;
  b.sigma = sigma;
  b.centers.resize(k);
  for (std::size_t l = 0; l < k; ++l) {
    b.centers[l] = k == 1 ? 0.5 : static_cast<double>(l) / static_cast<double>(k - 1);
  }
  return b;
}

std::vector<double> rbf_embed(double t, const RbfBank& bank) {
  std::vector<double> out(bank.centers.size());
  const double inv = 1.0 / (2.0 * bank.sigma * bank.sigma);
  for (std::size_t l = 0; l < out.size(); ++l) {
    const double d = t - bank.centers[l];
    out[l] = std::exp(-d * d * inv);
  }
  return out;
}

std::vector<double> fourier_embed(double t, std::size_t width) {
  std::vector<double> out(width, 0.0);
  for (std::size_t l = 0; 2 * l + 1 < width; ++l) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(l + 1);
    out[2 * l] = std::sin(w * t);
    out[2 * l + 1] = std::cos(w * t);
  }
  return out;
}

Tensor time_features(const ModelConfig& cfg, const TokenGrid& grid) {
  Tensor f(grid.size, cfg.k_rbf);
  const RbfBank bank = RbfBank::uniform(cfg.k_rbf, cfg.rbf_sigma);
  for (std::size_t k = 0; k < grid.size; ++k) {
    const double t = grid.start(k);
    const auto row = cfg.ablation.fourier_time ? fourier_embed(t, cfg.k_rbf) : rbf_embed(t, bank);
    std::copy(row.begin(), row.end(), f.row_span(k).begin());
  }
  return f;
}

namespace {

ad::Var normalized_features(ParamScope& scope, const ModelConfig& cfg, const Tensor& features) {
  ad::Var gain;
  ad::Var bias;
  if (cfg.ln_affine) {
    gain = scope.get("tokenizer.ln.g");
    bias = scope.get("tokenizer.ln.b");
  }
  return ad::layer_norm_rows(ad::constant(features), gain, bias);
}

std::vector<std::size_t> channel_rows(std::size_t d_x, std::size_t k_token) {
  std::vector<std::size_t> idx(d_x * k_token);
  for (std::size_t j = 0; j < d_x; ++j)
    for (std::size_t k = 0; k < k_token; ++k) idx[j * k_token + k] = j;
  return idx;
}

std::vector<std::size_t> token_rows(std::size_t d_x, std::size_t k_token) {
  std::vector<std::size_t> idx(d_x * k_token);
  for (std::size_t j = 0; j < d_x; ++j)
    for (std::size_t k = 0; k < k_token; ++k) idx[j * k_token + k] = k;
  return idx;
}

// Rotates feature pairs (2i, 2i+1) of the row for token k by k * 10000^(-2i/d).
ad::Var rotary(const ad::Var& x, std::size_t d_x, std::size_t k_token) {
  const std::size_t d = x.cols();
  Tensor cosv(x.rows(), d);
  Tensor sinv(x.rows(), d);
  for (std::size_t j = 0; j < d_x; ++j) {
    for (std::size_t k = 0; k < k_token; ++k) {
      const std::size_t row = j * k_token + k;
      for (std::size_t i = 0; 2 * i + 1 < d; ++i) {
        const double theta =
            static_cast<double>(k) * std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        cosv(row, 2 * i) = cosv(row, 2 * i + 1) = std::cos(theta);
        sinv(row, 2 * i) = sinv(row, 2 * i + 1) = std::sin(theta);
      }
    }
  }
  // swap(x)[2i] = -x[2i+1], swap(x)[2i+1] = x[2i]
  Tensor perm(d, d);
  for (std::size_t i = 0; 2 * i + 1 < d; ++i) {
    perm(2 * i + 1, 2 * i) = -1.0;
    perm(2 * i, 2 * i + 1) = 1.0;
  }
  const ad::Var swapped = ad::matmul(x, ad::constant(perm));
  return ad::add(ad::mul(x, ad::constant(cosv)), ad::mul(swapped, ad::constant(sinv)));
}

}  // namespace

Modulation time_modulation(ParamScope& scope, const ModelConfig& cfg, const Tensor& features) {
  const ad::Var out = mlp(scope, "tokenizer.mod", normalized_features(scope, cfg, features), 2,
                          Activation::Tanh);
  return {ad::slice_cols(out, 0, cfg.d_model), ad::slice_cols(out, cfg.d_model, 2 * cfg.d_model)};
}

ad::Var modulate(const ad::Var& proj, const Modulation& mod) {
  const std::size_t d_x = proj.rows();
  const std::size_t k = mod.gamma.rows();
  const auto ch = channel_rows(d_x, k);
  const auto tok = token_rows(d_x, k);
  const ad::Var p = ad::gather_rows(proj, ch);
  return ad::add(ad::mul(ad::gather_rows(mod.gamma, tok), p), ad::gather_rows(mod.beta, tok));
}

ad::Var add_channel_encoding(const ad::Var& tokens, const ad::Var& table, std::size_t d_x,
                             std::size_t k_token) {
  if (d_x > table.rows()) {
    throw ChannelOutOfRange("channel " + std::to_string(d_x) + " exceeds the channel table size " +
                            std::to_string(table.rows()));
  }
  return ad::add(tokens, ad::gather_rows(table, channel_rows(d_x, k_token)));
}

ad::Var tokenize(ParamScope& scope, const ModelConfig& cfg, const ad::Var& h) {
  const std::size_t d_x = h.rows();
  if (d_x > cfg.d_x_max) {
    throw ChannelOutOfRange("system has " + std::to_string(d_x) + " channels, at most " +
                            std::to_string(cfg.d_x_max) + " are supported");
  }
  const TokenGrid grid = TokenGrid::uniform(cfg.k_token);
  const ad::Var proj = mlp(scope, "tokenizer.h_proj", h, 2, Activation::Tanh);

  ad::Var e;
  if (cfg.ablation.rope_time) {
    e = rotary(ad::gather_rows(proj, channel_rows(d_x, cfg.k_token)), d_x, cfg.k_token);
  } else if (cfg.ablation.mlp_tokenizer) {
    const Tensor feats = time_features(cfg, grid);
    const ad::Var code =
        mlp(scope, "tokenizer.add", normalized_features(scope, cfg, feats), 2, Activation::Tanh);
    e = ad::add(ad::gather_rows(proj, channel_rows(d_x, cfg.k_token)),
                ad::gather_rows(code, token_rows(d_x, cfg.k_token)));
  } else {
    e = modulate(proj, time_modulation(scope, cfg, time_features(cfg, grid)));
  }
  if (cfg.ablation.no_channel_encoding) return e;
  return add_channel_encoding(e, scope.get("tokenizer.channel_table"), d_x, cfg.k_token);
}

void add_tokenizer_params(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model;
  add_mlp(store, "tokenizer.h_proj", {cfg.gru_hidden, cfg.mod_hidden, d}, rng);
  const bool uses_time_code = !cfg.ablation.rope_time;
  if (uses_time_code && cfg.ln_affine) {
    store.add("tokenizer.ln.g", Tensor(1, cfg.k_rbf, 1.0));
    store.add("tokenizer.ln.b", Tensor(1, cfg.k_rbf));
  }
  if (cfg.ablation.mlp_tokenizer) {
    add_mlp(store, "tokenizer.add", {cfg.k_rbf, cfg.mod_hidden, d}, rng);
  } else if (uses_time_code) {
    // Starts near the identity modulation: small weights, gamma bias 1.
    add_mlp(store, "tokenizer.mod", {cfg.k_rbf, cfg.mod_hidden, 2 * d}, rng, 0.1);
    Tensor& b = store.mutable_value("tokenizer.mod.l1.b");
    for (std::size_t i = 0; i < d; ++i) b(0, i) = 1.0;
  }
  if (!cfg.ablation.no_channel_encoding) {
    store.add("tokenizer.channel_table", normal_tensor(cfg.d_x_max, d, 0.02, rng));
  }
}

}  // namespace lassode
