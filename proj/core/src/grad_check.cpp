#include "lassode/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lassode {

GradCheckReport grad_check(const ScalarGraph& f, ParamStore& params,
                           const GradCheckOptions& options) {
  if (options.eps < 1e-7 || options.eps > 1e-3) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
  }
  GradCheckReport report;

  ParamScope scope(params, true);
  ad::Var loss = f(scope);
  ad::backward(loss);
  const GradMap analytic = scope.gradients();
  ++report.evaluations;

  auto eval = [&]() {
    ParamScope s(params, false);
    ++report.evaluations;
    return f(s).item();
  };

  for (const auto& [path, grad] : analytic) {
    Tensor& theta = params.mutable_value(path);
    const std::size_t n = theta.size();
    std::size_t stride = 1;
    if (options.max_elements_per_tensor && n > options.max_elements_per_tensor) {
      stride = (n + options.max_elements_per_tensor - 1) / options.max_elements_per_tensor;
    }
    double max_abs = 0.0;
    for (double g : grad.values()) max_abs = std::max(max_abs, std::abs(g));
    double max_diff = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = theta[i];
      theta[i] = saved + options.eps;
      const double up = eval();
      theta[i] = saved - options.eps;
      const double down = eval();
      theta[i] = saved;
      const double numeric = (up - down) / (2.0 * options.eps);
      max_diff = std::max(max_diff, std::abs(numeric - grad[i]));
    }
    const double err = max_diff / (max_abs + 1e-8);
    report.per_tensor[path] = err;
    if (err > report.max_rel_error || report.worst_path.empty()) {
      if (err >= report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_path = path;
      }
    }
  }
  return report;
}

}  // namespace lassode
