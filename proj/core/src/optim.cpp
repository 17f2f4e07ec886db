#include "lassode/optim.hpp"

#include <cmath>

#include "lassode/errors.hpp"

namespace lassode {

void AdamW::step(ParamStore& store, const GradMap& grads, std::size_t step_index) {
  if (step_index == 0) throw std::invalid_argument("AdamW::step: step_index must be >= 1");
  for (const auto& [path, g] : grads) {
    if (!g.all_finite()) throw NonFiniteError("AdamW: non-finite gradient for '" + path + "'");
  }

  const double t = static_cast<double>(step_index);
  const double bc1 = 1.0 - std::pow(config_.beta1, t);
  const double bc2 = 1.0 - std::pow(config_.beta2, t);

  for (const auto& [path, g] : grads) {
    if (!store.contains(path) || !store.flags(path).trainable) continue;
    Tensor& theta = store.mutable_value(path);
    if (!theta.same_shape(g)) {
      throw ShapeError("AdamW: gradient " + g.shape_string() + " does not match parameter '" +
                       path + "' " + theta.shape_string());
    }
    auto [it, fresh] = state_.try_emplace(path);
    Moments& mo = it->second;
    if (fresh) {
      mo.m = Tensor(theta.rows(), theta.cols());
      mo.v = Tensor(theta.rows(), theta.cols());
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * g[i];
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double mhat = mo.m[i] / bc1;
      const double vhat = mo.v[i] / bc2;
      theta[i] -= config_.lr * config_.weight_decay * theta[i] +
                  config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace lassode
