#include "lassode/ode_library.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "lassode/errors.hpp"

namespace lassode {

namespace {

constexpr double kBlowUp = 1e12;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

OdeSystem make_system(std::string name, std::size_t dim, std::vector<std::string> names,
                      std::vector<double> defaults, Rhs rhs, double t_max, std::size_t points,
                      std::vector<std::pair<double, double>> ic, bool chaotic = false) {
  OdeSystem s;
  s.name = std::move(name);
  s.state_dim = dim;
  s.param_names = std::move(names);
  s.default_params = std::move(defaults);
  s.rhs = std::move(rhs);
  s.default_t_max = t_max;
  s.default_dt = t_max / static_cast<double>(points - 1);
  s.default_ic_range = std::move(ic);
  s.chaotic = chaotic;
  return s;
}

OdeSystem van_der_pol(double mu, const std::string& tag, double t_max) {
  return make_system(
      "van_der_pol_mu" + tag, 2, {"mu"}, {mu},
      [](std::span<const double> x, std::span<const double> p, std::span<double> d) {
        d[0] = x[1];
        d[1] = p[0] * (1.0 - x[0] * x[0]) * x[1] - x[0];
      },
      t_max, 101, {{-2.0, 2.0}, {-2.0, 2.0}});
}

void check_state(const OdeSystem& system, std::span<const double> x, double t) {
  for (double v : x) {
    if (!std::isfinite(v) || std::abs(v) > kBlowUp) {
      std::ostringstream msg;
      msg << "simulate(" << system.name << "): state left the finite range at t=" << t;
      throw NonFiniteError(msg.str());
    }
  }
}

}  // namespace

std::vector<double> OdeSystem::eval(std::span<const double> x,
                                    std::span<const double> params) const {
  if (x.size() != state_dim) {
    throw std::invalid_argument(name + ": state has " + std::to_string(x.size()) +
                                " entries, expected " + std::to_string(state_dim));
  }
  std::vector<double> d(state_dim);
  rhs(x, params, d);
  return d;
}

std::size_t OdeSystem::param_index(const std::string& param) const {
  auto it = std::find(param_names.begin(), param_names.end(), param);
  if (it == param_names.end()) {
    throw std::invalid_argument(name + ": unknown parameter '" + param + "'");
  }
  return static_cast<std::size_t>(it - param_names.begin());
}

std::vector<OdeSystem> register_builtin_systems() {
  std::vector<OdeSystem> r;
  using P = std::span<const double>;
  using D = std::span<double>;

  r.push_back(make_system(
      "harmonic_oscillator", 2, {"omega"}, {1.0},
      [](P x, P p, D d) {
        d[0] = x[1];
        d[1] = -p[0] * p[0] * x[0];
      },
      2.0 * kTwoPi, 101, {{-1.0, 1.0}, {-1.0, 1.0}}));

  r.push_back(van_der_pol(0.5, "0.5", 13.0));
  r.push_back(van_der_pol(1.0, "1", 13.5));
  r.push_back(van_der_pol(3.0, "3", 18.0));
  r.push_back(van_der_pol(10.0, "10", 40.0));

  r.push_back(make_system(
      "lotka_volterra", 2, {"alpha", "beta", "gamma", "delta"}, {1.0, 1.0, 1.0, 1.0},
      [](P x, P p, D d) {
        d[0] = p[0] * x[0] - p[1] * x[0] * x[1];
        d[1] = p[3] * x[0] * x[1] - p[2] * x[1];
      },
      15.0, 101, {{0.5, 2.0}, {0.5, 2.0}}));

  r.push_back(make_system(
      "fitzhugh_nagumo", 2, {"a", "b", "epsilon", "current"}, {0.7, 0.8, 0.08, 0.5},
      [](P x, P p, D d) {
        d[0] = x[0] - x[0] * x[0] * x[0] / 3.0 - x[1] + p[3];
        d[1] = p[2] * (x[0] + p[0] - p[1] * x[1]);
      },
      80.0, 101, {{-2.0, 2.0}, {-1.0, 1.5}}));

  r.push_back(make_system(
      "lorenz63", 3, {"sigma", "rho", "beta"}, {10.0, 28.0, 8.0 / 3.0},
      [](P x, P p, D d) {
        d[0] = p[0] * (x[1] - x[0]);
        d[1] = x[0] * (p[1] - x[2]) - x[1];
        d[2] = x[0] * x[1] - p[2] * x[2];
      },
      5.0, 201, {{-10.0, 10.0}, {-10.0, 10.0}, {10.0, 30.0}}, true));

  r.push_back(make_system(
      "rossler", 3, {"a", "b", "c"}, {0.2, 0.2, 5.7},
      [](P x, P p, D d) {
        d[0] = -x[1] - x[2];
        d[1] = x[0] + p[0] * x[1];
        d[2] = p[1] + x[2] * (x[0] - p[2]);
      },
      50.0, 201, {{-5.0, 5.0}, {-5.0, 5.0}, {0.0, 1.0}}, true));

  // Unforced Duffing: x'' + delta x' + alpha x + beta x^3 = 0.
  r.push_back(make_system(
      "duffing", 2, {"delta", "alpha", "beta"}, {0.1, 1.0, 1.0},
      [](P x, P p, D d) {
        d[0] = x[1];
        d[1] = -p[0] * x[1] - p[1] * x[0] - p[2] * x[0] * x[0] * x[0];
      },
      20.0, 101, {{-1.5, 1.5}, {-1.5, 1.5}}));

  auto pendulum = [](P x, P p, D d) {
    d[0] = x[1];
    d[1] = -p[0] * std::sin(x[0]) - p[1] * x[1];
  };
  r.push_back(make_system("pendulum_damped", 2, {"g_over_l", "damping"}, {1.0, 0.1}, pendulum,
                          2.0 * kTwoPi, 101, {{-1.5, 1.5}, {-1.0, 1.0}}));
  r.push_back(make_system("pendulum_undamped", 2, {"g_over_l", "damping"}, {1.0, 0.0}, pendulum,
                          2.0 * kTwoPi, 101, {{-1.5, 1.5}, {-1.0, 1.0}}));

  r.push_back(make_system(
      "logistic_growth", 1, {"rate", "capacity"}, {1.0, 1.0},
      [](P x, P p, D d) { d[0] = p[0] * x[0] * (1.0 - x[0] / p[1]); }, 10.0, 101,
      {{0.05, 0.5}}));

  r.push_back(make_system(
      "hopf_normal_form", 2, {"mu", "omega"}, {1.0, 1.0},
      [](P x, P p, D d) {
        const double r2 = x[0] * x[0] + x[1] * x[1];
        d[0] = p[0] * x[0] - p[1] * x[1] - x[0] * r2;
        d[1] = p[1] * x[0] + p[0] * x[1] - x[1] * r2;
      },
      2.0 * kTwoPi, 101, {{-1.5, 1.5}, {-1.5, 1.5}}));

  r.push_back(make_system(
      "lorenz96", 6, {"forcing"}, {8.0},
      [](P x, P p, D d) {
        const std::size_t n = x.size();
        for (std::size_t i = 0; i < n; ++i) {
          const double xp1 = x[(i + 1) % n];
          const double xm1 = x[(i + n - 1) % n];
          const double xm2 = x[(i + n - 2) % n];
          d[i] = (xp1 - xm2) * xm1 - x[i] + p[0];
        }
      },
      5.0, 201, std::vector<std::pair<double, double>>(6, {7.0, 9.0}), true));

  return r;
}

const OdeSystem& find_system(const std::vector<OdeSystem>& registry, const std::string& name) {
  for (const auto& s : registry)
    if (s.name == name) return s;
  throw std::invalid_argument("unknown ODE system '" + name + "'");
}

void rk4_step(const OdeSystem& system, std::span<const double> params, std::span<double> x,
              double dt) {
  const std::size_t n = x.size();
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  system.rhs(x, params, k1);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k1[i];
  system.rhs(tmp, params, k2);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * dt * k2[i];
  system.rhs(tmp, params, k3);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + dt * k3[i];
  system.rhs(tmp, params, k4);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
}

Trajectory simulate(const OdeSystem& system, std::span<const double> x0, double t_max, double dt,
                    std::span<const double> params) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate: dt must be positive");
  if (t_max < dt * (1.0 - 1e-9)) throw std::invalid_argument("simulate: t_max must be >= dt");
  if (x0.size() != system.state_dim) {
    throw std::invalid_argument("simulate(" + system.name + "): x0 has " +
                                std::to_string(x0.size()) + " entries, expected " +
                                std::to_string(system.state_dim));
  }
  if (params.size() != system.param_names.size()) {
    throw std::invalid_argument("simulate(" + system.name + "): wrong parameter count");
  }
  const auto steps = static_cast<std::size_t>(std::floor(t_max / dt + 1e-9));
  const std::size_t d = system.state_dim;

  Trajectory traj;
  traj.system = system.name;
  for (std::size_t i = 0; i < params.size(); ++i) traj.params[system.param_names[i]] = params[i];
  traj.dt = dt;
  traj.t_max = t_max;
  traj.times.resize(steps + 1);
  traj.states = Tensor(steps + 1, d);

  std::vector<double> x(x0.begin(), x0.end());
  check_state(system, x, 0.0);
  std::copy(x.begin(), x.end(), traj.states.row_span(0).begin());
  traj.times[0] = 0.0;
  for (std::size_t s = 1; s <= steps; ++s) {
    rk4_step(system, params, x, dt);
    const double t = static_cast<double>(s) * dt;
    check_state(system, x, t);
    traj.times[s] = t;
    std::copy(x.begin(), x.end(), traj.states.row_span(s).begin());
  }
  return traj;
}

Trajectory simulate(const OdeSystem& system, std::span<const double> x0, double t_max, double dt) {
  return simulate(system, x0, t_max, dt, system.default_params);
}

std::vector<Trajectory> sample_dataset(const DatasetSpec& spec,
                                       const std::vector<OdeSystem>& registry) {
  std::vector<Trajectory> out;
  std::uint64_t index = 0;
  for (const auto& entry : spec.systems) {
    const OdeSystem& system = find_system(registry, entry.system);
    const auto& ic = entry.ic_range.empty() ? system.default_ic_range : entry.ic_range;
    if (ic.size() != system.state_dim) {
      throw std::invalid_argument("sample_dataset(" + system.name +
                                  "): initial-condition range has wrong dimension");
    }
    for (const auto& [lo, hi] : ic) {
      if (hi < lo) throw std::invalid_argument("sample_dataset: empty initial-condition range");
    }
    for (const auto& [name, range] : entry.param_range) {
      system.param_index(name);
      if (range.second < range.first) {
        throw std::invalid_argument("sample_dataset: empty range for parameter '" + name + "'");
      }
    }
    const double t_max = entry.t_max > 0.0 ? entry.t_max : system.default_t_max;
    const double dt = entry.dt > 0.0 ? entry.dt : system.default_dt;

    for (std::size_t c = 0; c < entry.count; ++c, ++index) {
      std::mt19937_64 rng(spec.seed ^ index);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      auto draw = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
      for (std::size_t attempt = 0;; ++attempt) {
        std::vector<double> params = system.default_params;
        for (const auto& [name, range] : entry.param_range) {
          params[system.param_index(name)] = draw(range.first, range.second);
        }
        std::vector<double> x0(system.state_dim);
        for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = draw(ic[i].first, ic[i].second);
        try {
          out.push_back(simulate(system, x0, t_max, dt, params));
          break;
        } catch (const NonFiniteError&) {
          if (attempt + 1 >= spec.max_retries) throw;
        }
      }
    }
  }
  return out;
}

}  // namespace lassode
