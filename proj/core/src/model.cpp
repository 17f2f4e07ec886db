#include "lassode/model.hpp"

#include "lassode/errors.hpp"
#include "lassode/ops.hpp"
#include "lassode/tokenizer.hpp"

namespace lassode {

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore store;
  Rng rng(seed);
  add_encoder_params(store, cfg, rng);
  add_tokenizer_params(store, cfg, rng);
  add_backbone_params(store, cfg, rng);
  add_decoder_params(store, cfg, rng);
  return store;
}

ForwardResult forward(ParamScope& scope, const ModelConfig& cfg, const Tensor& values,
                      const std::vector<double>& times, std::size_t prefix_len,
                      const ForwardOptions& options) {
  const std::size_t d_x = values.cols();
  const std::size_t n = values.rows();
  ForwardResult r;
  r.summary = encode_channels(scope, cfg, values, times, prefix_len);
  r.posterior = posterior(scope, r.summary.h);
  if (options.eps) {
    r.z0 = sample_z0(r.posterior, *options.eps);
  } else if (options.mode == LatentMode::Sample) {
    if (!options.rng) throw std::invalid_argument("forward: sampling needs an rng");
    r.z0 = sample_z0(r.posterior, LatentMode::Sample, *options.rng);
  } else {
    r.z0 = r.posterior.mu;
  }

  r.tokens = tokenize(scope, cfg, r.summary.h);
  r.trace.capture = options.capture;
  r.final_tokens = stack(scope, cfg, r.tokens, options.capture ? &r.trace : nullptr);

  r.plan = StepPlan::build(TokenGrid::uniform(cfg.k_token), times, options.n_step);
  ad::Var states;
  if (cfg.ablation.mlp_ode_field) {
    states = mlp_field_flow(scope, cfg, r.final_tokens, r.z0, r.plan);
  } else {
    r.coeffs = estimate_params(scope, cfg, r.final_tokens);
    states = piecewise_flow(r.coeffs, r.z0, r.plan, cfg.k_token);
  }
  // rows j*n + i -> (n x d_x)
  r.prediction = ad::transpose(ad::reshape(readout(scope, states), d_x, n));
  return r;
}

Tensor predict(const ParamStore& params, const ModelConfig& cfg, const NormalizedTrajectory& nt,
               std::size_t prefix_len) {
  ParamScope scope(params, false);
  return forward(scope, cfg, nt.values, nt.times, prefix_len).prediction.value();
}

ad::Var mse_loss(const ad::Var& prediction, const Tensor& target) {
  if (!prediction.value().same_shape(target)) {
    throw ShapeError("mse_loss: prediction " + prediction.value().shape_string() + " vs target " +
                     target.shape_string());
  }
  return ad::mean(ad::square(ad::sub(prediction, ad::constant(target))));
}

ad::Var kl_divergence(const LatentPosterior& post) {
  const ad::Var var = ad::square(post.sigma);
  const ad::Var terms = ad::sub(ad::add(ad::square(post.mu), var),
                                ad::add_scalar(ad::log(var), 1.0));
  return ad::scale(ad::sum(terms), 0.5 / static_cast<double>(post.mu.rows()));
}

Checkpoint make_checkpoint(const ModelConfig& cfg, const ParamStore& params) {
  return Checkpoint{cfg.to_json(), params};
}

ModelConfig checkpoint_config(const Checkpoint& ckpt) {
  if (ckpt.meta.empty()) throw LoadError("checkpoint carries no model configuration");
  try {
    return ModelConfig::from_json(ckpt.meta);
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint configuration: ") + e.what());
  }
}

}  // namespace lassode
