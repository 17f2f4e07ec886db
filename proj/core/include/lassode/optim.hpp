#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "lassode/param_store.hpp"

namespace lassode {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double weight_decay = 0.05;
  double eps = 1e-8;
};

/// AdamW with decoupled weight decay:
///   theta <- theta - lr*wd*theta - lr * mhat / (sqrt(vhat) + eps)
/// Parameters missing from the gradient map, or flagged non-trainable, are
/// left untouched along with their moment estimates.
class AdamW {
 public:
  explicit AdamW(AdamWConfig config = {}) : config_(config) {}

  /// `step_index` starts at 1. Throws NonFiniteError naming the first path
  /// whose gradient holds a NaN/Inf; the store is not modified in that case.
  void step(ParamStore& store, const GradMap& grads, std::size_t step_index);

  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  struct Moments {
    Tensor m;
    Tensor v;
  };
  AdamWConfig config_;
  std::map<std::string, Moments> state_;
};

}  // namespace lassode
