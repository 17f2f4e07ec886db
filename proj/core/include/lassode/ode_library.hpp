#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lassode/tensor.hpp"

namespace lassode {

inline constexpr std::size_t kMaxStateDim = 10;

/// Right-hand side of an autonomous system: writes f(x; params) into dxdt.
using Rhs = std::function<void(std::span<const double> x, std::span<const double> params,
                               std::span<double> dxdt)>;

struct OdeSystem {
  std::string name;
  std::size_t state_dim = 0;
  std::vector<std::string> param_names;
  std::vector<double> default_params;
  Rhs rhs;
  double default_t_max = 10.0;
  double default_dt = 0.1;
  /// Default initial-condition box, one (lo, hi) pair per state coordinate.
  std::vector<std::pair<double, double>> default_ic_range;
  /// Pointwise long-horizon extrapolation is ill-posed (Lorenz, Rossler).
  bool chaotic = false;

  std::vector<double> eval(std::span<const double> x, std::span<const double> params) const;
  std::vector<double> eval(std::span<const double> x) const { return eval(x, default_params); }
  std::size_t param_index(const std::string& param) const;
};

struct Trajectory {
  std::string system;
  std::map<std::string, double> params;
  std::vector<double> times;
  /// (N+1) x d_x, one row per timestamp.
  Tensor states;
  double dt = 0.0;
  double t_max = 0.0;

  std::size_t length() const { return times.size(); }
  std::size_t state_dim() const { return states.cols(); }
};

/// The built-in library of classical systems. Van der Pol appears once per
/// stiffness value as `van_der_pol_mu<mu>`.
std::vector<OdeSystem> register_builtin_systems();
const OdeSystem& find_system(const std::vector<OdeSystem>& registry, const std::string& name);

/// One fixed-step RK4 step of dx/dt = f(x) from x (in place).
void rk4_step(const OdeSystem& system, std::span<const double> params, std::span<double> x,
              double dt);

/// Fixed-step RK4 on t = 0, dt, ..., n*dt with n = floor(t_max/dt) (tolerant
/// to rounding). Throws NonFiniteError when a state turns NaN or |x| > 1e12.
Trajectory simulate(const OdeSystem& system, std::span<const double> x0, double t_max, double dt,
                    std::span<const double> params);
Trajectory simulate(const OdeSystem& system, std::span<const double> x0, double t_max, double dt);

struct SystemSampling {
  std::string system;
  std::size_t count = 1;
  /// Empty uses the system default box.
  std::vector<std::pair<double, double>> ic_range;
  /// Named parameter ranges; unnamed parameters keep their defaults.
  std::map<std::string, std::pair<double, double>> param_range;
  double t_max = 0.0;  // 0 -> system default
  double dt = 0.0;     // 0 -> system default
};

struct DatasetSpec {
  std::vector<SystemSampling> systems;
  std::uint64_t seed = 0;
  std::size_t max_retries = 20;
};

/// Draws initial conditions and parameters uniformly from the given boxes.
/// Trajectory i (global index across systems) uses seed `seed ^ i`. A draw
/// that blows up is redrawn up to `max_retries` times before the
/// NonFiniteError propagates.
std::vector<Trajectory> sample_dataset(const DatasetSpec& spec,
                                       const std::vector<OdeSystem>& registry);

}  // namespace lassode
