#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lassode/autodiff.hpp"
#include "lassode/model_config.hpp"
#include "lassode/nn.hpp"
#include "lassode/param_store.hpp"
#include "lassode/tokenizer.hpp"

namespace lassode {

/// Token-wise affine latent field: token k has dz/dt = A_k z + b_k. Row k of
/// `coeffs` holds A_k row-major followed by b_k.
struct PiecewiseAffineField {
  std::size_t d_z = 0;
  TokenGrid grid;
  Tensor coeffs;  // K x (d_z^2 + d_z)

  PiecewiseAffineField() = default;
  PiecewiseAffineField(std::size_t d_z, TokenGrid grid);
  PiecewiseAffineField(std::size_t d_z, TokenGrid grid, Tensor coeffs);

  const double* a(std::size_t k) const { return coeffs.data() + k * width(); }
  const double* b(std::size_t k) const { return a(k) + d_z * d_z; }
  std::size_t width() const { return d_z * d_z + d_z; }
  void set(std::size_t k, const Tensor& a, std::span<const double> b);
};

/// RK4 integration grid over [0, 1]. Each token interval receives `n_step`
/// uniform substeps, and every evaluation time is inserted as a grid point
/// (uniform points within 1e-9 of an evaluation time snap onto it).
struct StepPlan {
  std::vector<double> times;            // grid points, times.front() = 0, times.back() = 1
  std::vector<std::size_t> step_token;  // token owning step [times[s], times[s+1]]
  std::vector<std::size_t> eval_index;  // grid index of every evaluation time

  /// n_step = 0 picks, per interval, the number of evaluation times in
  /// [start, end) with a minimum of one.
  static StepPlan build(const TokenGrid& grid, const std::vector<double>& eval_times,
                        std::size_t n_step);
  std::size_t steps() const { return step_token.size(); }
};

struct LatentFlow {
  std::vector<double> eval_times;
  Tensor states;  // eval_times.size() x d_z
  std::string solver;
  std::size_t steps = 0;
  std::size_t stage_evaluations = 0;
};

inline constexpr double kFlowLimit = 1e9;

/// Every grid state of the plan, (steps + 1) x d_z. Throws NonFiniteError once
/// any coordinate exceeds kFlowLimit.
Tensor integrate_grid(const PiecewiseAffineField& field, std::span<const double> z0,
                      const StepPlan& plan);

LatentFlow solve_piecewise(const PiecewiseAffineField& field, std::span<const double> z0,
                           const std::vector<double>& eval_times, std::size_t n_step);

/// Exact flow of dz/dt = A z + b over [0, t] via a truncated exponential
/// series on the augmented (d+1) system, with substep scaling for large |tA|.
std::vector<double> affine_oracle(const Tensor& a, std::span<const double> b,
                                  std::span<const double> z0, double t);

/// Readout x = z W + c with W (d_z x 1).
std::vector<double> decode(const LatentFlow& flow, const Tensor& w_dec, double b_dec);

/// Conditioned MLP derivative h(z; e) = MLP([z; e]).
struct MlpField {
  std::vector<Tensor> weights;  // in x out per layer
  std::vector<Tensor> biases;   // 1 x out per layer
  Activation act = Activation::Tanh;
  std::size_t d_z = 0;

  /// Evaluates the field into `out` (d_z values). `scratch` avoids reallocation.
  void eval(std::span<const double> z, std::span<const double> cond, std::span<double> out,
            std::vector<double>& scratch) const;
};

/// Same grid and handoff rules as solve_piecewise; token k's stages see
/// conditioning row k of `cond`.
LatentFlow solve_mlp_field(const MlpField& field, const Tensor& cond, const TokenGrid& grid,
                           std::span<const double> z0, const std::vector<double>& eval_times,
                           std::size_t n_step);

/// Multiply counts of the two latent derivatives over one token interval.
struct IntegrationCost {
  std::int64_t c_param = 0;
  std::int64_t c_lin = 0;
  std::int64_t c_mlp = 0;
  std::int64_t linear_total = 0;
  std::int64_t mlp_total = 0;
  double ratio() const { return static_cast<double>(mlp_total) / static_cast<double>(linear_total); }
};

IntegrationCost cost_model(std::int64_t d_z, std::int64_t d_model, std::int64_t k_width,
                           std::int64_t layers, std::int64_t n_step);

// Differentiable pieces used by the model.

/// coeff_scale * f_param on every token row: (K*d_x) x (d_z^2 + d_z).
ad::Var estimate_params(ParamScope& scope, const ModelConfig& cfg, const ad::Var& tokens);

/// Integrates every channel's piecewise field. `coeffs` is (d_x*K) x (d_z^2+d_z)
/// channel major, `z0` is d_x x d_z. Returns (d_x*E) x d_z states at the plan's
/// evaluation points, row j*E + e. The backward pass differentiates the
/// unrolled RK4 steps exactly.
ad::Var piecewise_flow(const ad::Var& coeffs, const ad::Var& z0, const StepPlan& plan,
                       std::size_t k_token);

/// Conditioned-MLP counterpart built from elementary ops. `tokens` is the
/// (d_x*K) x d_model conditioning matrix.
ad::Var mlp_field_flow(ParamScope& scope, const ModelConfig& cfg, const ad::Var& tokens,
                       const ad::Var& z0, const StepPlan& plan);

/// Shared scalar readout applied to (rows x d_z) states -> rows x 1.
ad::Var readout(ParamScope& scope, const ad::Var& states);

/// Numeric copies of the trained MLP field for benchmarking.
MlpField mlp_field_from_store(const ParamStore& store, const ModelConfig& cfg);

void add_decoder_params(ParamStore& store, const ModelConfig& cfg, Rng& rng);

}  // namespace lassode
