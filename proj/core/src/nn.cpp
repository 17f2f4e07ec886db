#include "lassode/nn.hpp"

#include <cmath>

#include "lassode/ops.hpp"

namespace lassode {

Tensor xavier_uniform(std::size_t in, std::size_t out, Rng& rng, double gain) {
  const double a = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-a, a);
  Tensor t(in, out);
  for (double& v : t.values()) v = u(rng);
  return t;
}

Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> n(0.0, stddev);
  Tensor t(rows, cols);
  for (double& v : t.values()) v = n(rng);
  return t;
}

void add_linear(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng, double gain) {
  store.add(prefix + ".w", xavier_uniform(in, out, rng, gain));
  store.add(prefix + ".b", Tensor(1, out));
}

ad::Var linear(ParamScope& scope, const std::string& prefix, const ad::Var& x) {
  return ad::affine(x, scope.get(prefix + ".w"), scope.get(prefix + ".b"));
}

void add_mlp(ParamStore& store, const std::string& prefix, const std::vector<std::size_t>& widths,
             Rng& rng, double out_gain) {
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const bool last = l + 2 == widths.size();
    add_linear(store, prefix + ".l" + std::to_string(l), widths[l], widths[l + 1], rng,
               last ? out_gain : 1.0);
  }
}

ad::Var activate(const ad::Var& x, Activation act) {
  switch (act) {
    case Activation::Tanh:
      return ad::tanh(x);
    case Activation::Gelu:
      return ad::gelu(x);
    case Activation::Identity:
      break;
  }
  return x;
}

ad::Var mlp(ParamScope& scope, const std::string& prefix, const ad::Var& x, std::size_t layers,
            Activation act) {
  ad::Var h = x;
  for (std::size_t l = 0; l < layers; ++l) {
    h = linear(scope, prefix + ".l" + std::to_string(l), h);
    if (l + 1 < layers) h = activate(h, act);
  }
  return h;
}

}  // namespace lassode
