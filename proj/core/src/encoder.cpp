#include "lassode/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <utility>

#include "eigen_view.hpp"
#include "lassode/ops.hpp"

namespace lassode {

using detail::Map;
using detail::MapC;
using detail::RowMat;
using detail::view;

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct GruCache {
  Tensor r, z, n, ghn;  // T*B x H each
};

std::string layer_path(const std::string& prefix, std::size_t l) {
  return prefix + ".l" + std::to_string(l);
}

}  // namespace

void add_gru(ParamStore& store, const std::string& prefix, std::size_t input, std::size_t hidden,
             std::size_t layers, Rng& rng) {
  const double a = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> u(-a, a);
  auto draw = [&](std::size_t r, std::size_t c) {
    Tensor t(r, c);
    for (double& v : t.values()) v = u(rng);
    return t;
  };
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = layer_path(prefix, l);
    const std::size_t in = l == 0 ? input : hidden;
    store.add(p + ".w_ih", draw(in, 3 * hidden));
    store.add(p + ".w_hh", draw(hidden, 3 * hidden));
    store.add(p + ".b_ih", draw(1, 3 * hidden));
    store.add(p + ".b_hh", draw(1, 3 * hidden));
    // Update-gate bias starts high so the state is carried across long prefixes.
    Tensor& b = store.mutable_value(p + ".b_hh");
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b(0, i) += kGruUpdateBias;
  }
}

ad::Var gru_recurrence(const ad::Var& xi, std::size_t batch, const ad::Var& w_hh,
                       const ad::Var& b_hh) {
  const std::size_t H = w_hh.rows();
  if (w_hh.cols() != 3 * H || b_hh.rows() != 1 || b_hh.cols() != 3 * H || xi.cols() != 3 * H ||
      batch == 0 || xi.rows() % batch != 0) {
    throw ShapeError("gru_recurrence: inputs " + xi.value().shape_string() + ", w_hh " +
                     w_hh.value().shape_string() + ", b_hh " + b_hh.value().shape_string());
  }
  const std::size_t B = batch;
  const std::size_t T = xi.rows() / B;
  const auto Bi = static_cast<Eigen::Index>(B);
  const auto Hi = static_cast<Eigen::Index>(H);

  auto cache = std::make_shared<GruCache>();
  cache->r = Tensor(T * B, H);
  cache->z = Tensor(T * B, H);
  cache->n = Tensor(T * B, H);
  cache->ghn = Tensor(T * B, H);
  Tensor out(T * B, H);

  const MapC W = view(w_hh.value());
  const double* bias = b_hh.value().data();
  RowMat hprev = RowMat::Zero(Bi, Hi);
  RowMat gh(Bi, 3 * Hi);
  for (std::size_t t = 0; t < T; ++t) {
    gh.noalias() = hprev * W;
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t row = t * B + b;
      const double* gi = xi.value().data() + row * 3 * H;
      const double* g = gh.data() + b * 3 * H;
      for (std::size_t k = 0; k < H; ++k) {
        const double r = sigmoid(gi[k] + g[k] + bias[k]);
        const double z = sigmoid(gi[H + k] + g[H + k] + bias[H + k]);
        const double ghn = g[2 * H + k] + bias[2 * H + k];
        const double n = std::tanh(gi[2 * H + k] + r * ghn);
        const double h = (1.0 - z) * n + z * hprev(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k));
        cache->r(row, k) = r;
        cache->z(row, k) = z;
        cache->n(row, k) = n;
        cache->ghn(row, k) = ghn;
        out(row, k) = h;
      }
    }
    hprev = Map(out.data() + t * B * H, Bi, Hi);
  }

  return ad::make_op("gru_recurrence", std::move(out), {xi, w_hh, b_hh}, [cache, B, T, H](ad::Node& self) {
    ad::Node& xin = *self.inputs[0];
    ad::Node& win = *self.inputs[1];
    ad::Node& bin = *self.inputs[2];
    const auto Bi = static_cast<Eigen::Index>(B);
    const auto Hi = static_cast<Eigen::Index>(H);
    const MapC W = view(std::as_const(win.value));
    Tensor dxi(T * B, 3 * H);
    RowMat dW = RowMat::Zero(Hi, 3 * Hi);
    RowMat db = RowMat::Zero(1, 3 * Hi);
    RowMat carry = RowMat::Zero(Bi, Hi);
    RowMat dgh(Bi, 3 * Hi);
    RowMat zero = RowMat::Zero(Bi, Hi);
    for (std::size_t t = T; t-- > 0;) {
      const MapC hprev = t > 0 ? MapC(self.value.data() + (t - 1) * B * H, Bi, Hi)
                               : MapC(zero.data(), Bi, Hi);
      RowMat next_carry(Bi, Hi);
      for (std::size_t b = 0; b < B; ++b) {
        const std::size_t row = t * B + b;
        const auto bi = static_cast<Eigen::Index>(b);
        for (std::size_t k = 0; k < H; ++k) {
          const auto ki = static_cast<Eigen::Index>(k);
          const double dh = self.grad(row, k) + carry(bi, ki);
          const double r = cache->r(row, k);
          const double z = cache->z(row, k);
          const double n = cache->n(row, k);
          const double hp = hprev(bi, ki);
          const double dn = dh * (1.0 - z);
          const double dz = dh * (hp - n);
          const double dan = dn * (1.0 - n * n);
          const double dr = dan * cache->ghn(row, k);
          const double dar = dr * r * (1.0 - r);
          const double daz = dz * z * (1.0 - z);
          dxi(row, k) = dar;
          dxi(row, H + k) = daz;
          dxi(row, 2 * H + k) = dan;
          dgh(bi, ki) = dar;
          dgh(bi, Hi + ki) = daz;
          dgh(bi, 2 * Hi + ki) = dan * r;
          next_carry(bi, ki) = dh * z;
        }
      }
      if (win.requires_grad) dW.noalias() += hprev.transpose() * dgh;
      if (bin.requires_grad) db += dgh.colwise().sum();
      next_carry.noalias() += dgh * W.transpose();
      carry = std::move(next_carry);
    }
    ad::accumulate(xin, dxi);
    if (win.requires_grad) {
      Tensor t(H, 3 * H);
      view(t) = dW;
      ad::accumulate(win, t);
    }
    if (bin.requires_grad) {
      Tensor t(1, 3 * H);
      view(t) = db;
      ad::accumulate(bin, t);
    }
  });
}

ad::Var gru_sequence(ParamScope& scope, const std::string& prefix, const ad::Var& x,
                     std::size_t batch, std::size_t layers) {
  ad::Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    const std::string p = layer_path(prefix, l);
    const ad::Var xi = ad::affine(h, scope.get(p + ".w_ih"), scope.get(p + ".b_ih"));
    h = gru_recurrence(xi, batch, scope.get(p + ".w_hh"), scope.get(p + ".b_hh"));
  }
  return h;
}

Tensor encoder_inputs(const Tensor& values, const std::vector<double>& times) {
  const std::size_t T = values.rows();
  const std::size_t d = values.cols();
  if (times.size() != T || T < 2) {
    throw ShapeError("encoder_inputs: " + std::to_string(times.size()) + " times for values " +
                     values.shape_string());
  }
  Tensor in(T * d, 2);
  for (std::size_t t = 0; t < T; ++t) {
    const double dt = t == 0 ? times[1] - times[0] : times[t] - times[t - 1];
    for (std::size_t j = 0; j < d; ++j) {
      in(t * d + j, 0) = values(t, j);
      in(t * d + j, 1) = dt;
    }
  }
  return in;
}

namespace {

// Joint input for the channel-dependent variant: [x_1 .. x_dmax, dt] per time,
// with absent channels zero-padded.
Tensor joint_inputs(const Tensor& values, const std::vector<double>& times, std::size_t d_max) {
  const std::size_t T = values.rows();
  Tensor in(T, d_max + 1);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < values.cols(); ++j) in(t, j) = values(t, j);
    in(t, d_max) = t == 0 ? times[1] - times[0] : times[t] - times[t - 1];
  }
  return in;
}

// Prefix of each channel linearly resampled to `k` evenly spaced points,
// followed by the prefix end time. One row per channel.
Tensor resampled_prefix(const Tensor& values, const std::vector<double>& times,
                        std::size_t prefix_len, std::size_t k) {
  Tensor out(values.cols(), k + 1);
  const double t0 = times.front();
  const double t1 = times[prefix_len - 1];
  for (std::size_t j = 0; j < values.cols(); ++j) {
    std::size_t seg = 0;
    for (std::size_t q = 0; q < k; ++q) {
      const double tq = k == 1 ? t1 : t0 + (t1 - t0) * static_cast<double>(q) / static_cast<double>(k - 1);
      while (seg + 2 < prefix_len && times[seg + 1] < tq) ++seg;
      const double ta = times[seg];
      const double tb = times[seg + 1];
      const double w = tb > ta ? std::clamp((tq - ta) / (tb - ta), 0.0, 1.0) : 0.0;
      out(j, q) = (1.0 - w) * values(seg, j) + w * values(seg + 1, j);
    }
    out(j, k) = t1;
  }
  return out;
}

}  // namespace

ChannelSummary encode_channels(ParamScope& scope, const ModelConfig& cfg, const Tensor& values,
                               const std::vector<double>& times, std::size_t prefix_len) {
  const std::size_t T = values.rows();
  const std::size_t d = values.cols();
  if (prefix_len < 2 || prefix_len > T) {
    throw std::invalid_argument("encode_channels: prefix_len " + std::to_string(prefix_len) +
                                " outside [2, " + std::to_string(T) + "]");
  }
  ChannelSummary s;
  s.prefix_end = prefix_len - 1;

  if (cfg.ablation.mlp_tokenizer) {
    const Tensor in = resampled_prefix(values, times, prefix_len, cfg.k_token);
    s.h = ad::tanh(mlp(scope, "encoder.mlp", ad::constant(in), 2, Activation::Tanh));
    return s;
  }
  if (cfg.ablation.channel_dependent_encoder) {
    const ad::Var x = ad::constant(joint_inputs(values, times, cfg.d_x_max));
    s.hidden_states = gru_sequence(scope, "encoder.joint_gru", x, 1, cfg.gru_layers);
    const ad::Var last = ad::slice_rows(s.hidden_states, s.prefix_end, prefix_len);
    const std::vector<std::size_t> same(d, 0);
    s.h = ad::gather_rows(last, same);
    return s;
  }
  const ad::Var x = ad::constant(encoder_inputs(values, times));
  s.hidden_states = gru_sequence(scope, "encoder.gru", x, d, cfg.gru_layers);
  s.h = ad::slice_rows(s.hidden_states, s.prefix_end * d, prefix_len * d);
  return s;
}

LatentPosterior posterior(ParamScope& scope, const ad::Var& h) {
  LatentPosterior p;
  p.mu = mlp(scope, "encoder.mu", h, 2, Activation::Tanh);
  const ad::Var logvar = mlp(scope, "encoder.logvar", h, 2, Activation::Tanh);
  p.sigma = ad::clamp(ad::exp(ad::scale(logvar, 0.5)), kSigmaMin, kSigmaMax);
  return p;
}

ad::Var sample_z0(const LatentPosterior& post, LatentMode mode, Rng& rng) {
  if (mode == LatentMode::Mean) return post.mu;
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor eps(post.mu.rows(), post.mu.cols());
  for (double& v : eps.values()) v = n(rng);
  return sample_z0(post, eps);
}

ad::Var sample_z0(const LatentPosterior& post, const Tensor& eps) {
  return ad::add(post.mu, ad::mul(post.sigma, ad::constant(eps)));
}

void add_encoder_params(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t H = cfg.gru_hidden;
  if (cfg.ablation.mlp_tokenizer) {
    add_mlp(store, "encoder.mlp", {cfg.k_token + 1, H, H}, rng);
  } else if (cfg.ablation.channel_dependent_encoder) {
    add_gru(store, "encoder.joint_gru", cfg.d_x_max + 1, H, cfg.gru_layers, rng);
  } else {
    add_gru(store, "encoder.gru", 2, H, cfg.gru_layers, rng);
  }
  add_mlp(store, "encoder.mu", {H, cfg.posterior_hidden, cfg.d_z}, rng);
  add_mlp(store, "encoder.logvar", {H, cfg.posterior_hidden, cfg.d_z}, rng);
}

}  // namespace lassode
