#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>

#include "lassode/param_store.hpp"

namespace lassode {

struct GradCheckOptions {
  double eps = 1e-6;
  /// 0 checks every element; otherwise an evenly strided subset per tensor.
  std::size_t max_elements_per_tensor = 0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_path;
  std::map<std::string, double> per_tensor;
  std::size_t evaluations = 0;
};

using ScalarGraph = std::function<ad::Var(ParamScope&)>;

/// Compares reverse-mode gradients against central differences. For each
/// trainable tensor the error is
///   max_i |analytic_i - numeric_i| / (max_i |analytic_i| + 1e-8),
/// and the report keeps the maximum over tensors. `f` must be deterministic.
GradCheckReport grad_check(const ScalarGraph& f, ParamStore& params,
                           const GradCheckOptions& options = {});

}  // namespace lassode
