#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <set>

#include "lassode/errors.hpp"
#include "lassode/ode_library.hpp"

using namespace lassode;

namespace {

const std::vector<OdeSystem>& registry() {
  static const auto r = register_builtin_systems();
  return r;
}

// Max error of the oscillator x'' = -x against (cos t, -sin t) on one period.
double oscillator_error(double dt) {
  const OdeSystem& ho = find_system(registry(), "harmonic_oscillator");
  const std::vector<double> x0{1.0, 0.0};
  const Trajectory tr = simulate(ho, x0, 2.0 * std::numbers::pi, dt);
  double err = 0.0;
  for (std::size_t i = 0; i < tr.length(); ++i) {
    const double t = tr.times[i];
    err = std::max(err, std::abs(tr.states(i, 0) - std::cos(t)));
    err = std::max(err, std::abs(tr.states(i, 1) + std::sin(t)));
  }
  return err;
}

}  // namespace

TEST(OdeLibrary, RegistryHasRequiredSystems) {
  std::set<std::string> names;
  for (const auto& s : registry()) names.insert(s.name);
  for (const char* n : {"lotka_volterra", "fitzhugh_nagumo", "lorenz63", "rossler", "duffing",
                        "pendulum_damped", "pendulum_undamped", "logistic_growth",
                        "hopf_normal_form", "harmonic_oscillator"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
}

TEST(OdeLibrary, VanDerPolHasAtLeastFourStiffnessValues) {
  std::set<double> mus;
  for (const auto& s : registry()) {
    if (s.name.rfind("van_der_pol_mu", 0) == 0) mus.insert(s.default_params[s.param_index("mu")]);
  }
  EXPECT_GE(mus.size(), 4u);
  for (double mu : {0.5, 1.0, 3.0, 10.0}) EXPECT_TRUE(mus.count(mu)) << mu;
}

TEST(OdeLibrary, VanDerPolAtZeroMuIsTheOscillator) {
  const OdeSystem& vdp = find_system(registry(), "van_der_pol_mu1");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<double> x{u(rng), u(rng)};
    const std::vector<double> p{0.0};
    const auto d = vdp.eval(x, p);
    EXPECT_EQ(d[0], x[1]);
    EXPECT_EQ(d[1], -x[0]);
  }
}

TEST(OdeLibrary, LotkaVolterraOriginIsFixed) {
  const OdeSystem& lv = find_system(registry(), "lotka_volterra");
  const std::vector<double> x{0.0, 0.0};
  const auto d = lv.eval(x);
  EXPECT_EQ(d[0], 0.0);
  EXPECT_EQ(d[1], 0.0);
}

TEST(OdeLibrary, EveryRhsMatchesStateDimension) {
  for (const auto& s : registry()) {
    EXPECT_LE(s.state_dim, kMaxStateDim) << s.name;
    std::vector<double> x(s.state_dim, 0.3);
    EXPECT_EQ(s.eval(x).size(), s.state_dim) << s.name;
    EXPECT_EQ(s.default_ic_range.size(), s.state_dim) << s.name;
  }
}

TEST(OdeLibrary, OscillatorReturnsAfterOnePeriod) {
  const OdeSystem& ho = find_system(registry(), "harmonic_oscillator");
  const std::vector<double> x0{1.0, 0.0};
  const Trajectory tr = simulate(ho, x0, 2.0 * std::numbers::pi, 0.001);
  // The uniform grid stops at the last multiple of dt not beyond t_max, so the
  // closed form is read at that time.
  const double t = tr.times.back();
  EXPECT_LE(2.0 * std::numbers::pi - t, 0.001);
  EXPECT_NEAR(tr.states(tr.length() - 1, 0), std::cos(t), 1e-6);
  EXPECT_NEAR(tr.states(tr.length() - 1, 1), -std::sin(t), 1e-6);
  EXPECT_NEAR(tr.states(tr.length() - 1, 0), 1.0, 1e-6 + 0.001);
}

TEST(OdeLibrary, SingleStepGivesTwoPoints) {
  for (const auto& s : registry()) {
    std::vector<double> x0;
    for (const auto& [lo, hi] : s.default_ic_range) x0.push_back(0.5 * (lo + hi));
    const Trajectory tr = simulate(s, x0, s.default_dt, s.default_dt);
    EXPECT_EQ(tr.length(), 2u) << s.name;
  }
}

TEST(OdeLibrary, OscillatorEnergyDriftIsTiny) {
  const OdeSystem& ho = find_system(registry(), "harmonic_oscillator");
  const std::vector<double> x0{0.6, -0.8};
  const Trajectory tr = simulate(ho, x0, 10.0, 0.001);
  ASSERT_EQ(tr.length(), 10001u);
  const double e0 = 0.5 * (x0[0] * x0[0] + x0[1] * x0[1]);
  double drift = 0.0;
  for (std::size_t i = 0; i < tr.length(); ++i) {
    const double e = 0.5 * (tr.states(i, 0) * tr.states(i, 0) + tr.states(i, 1) * tr.states(i, 1));
    drift = std::max(drift, std::abs(e - e0));
  }
  EXPECT_LT(drift, 1e-8);
}

TEST(OdeLibrary, RungeKuttaIsFourthOrder) {
  const double coarse = oscillator_error(0.1);
  const double fine = oscillator_error(0.05);
  EXPECT_GE(coarse / fine, 12.0) << coarse << " vs " << fine;
}

TEST(OdeLibrary, LotkaVolterraInvariantIsConserved) {
  const OdeSystem& lv = find_system(registry(), "lotka_volterra");
  const std::vector<double> x0{1.5, 0.7};
  const Trajectory tr = simulate(lv, x0, lv.default_t_max, 0.001);
  auto invariant = [](double x, double y) { return x - std::log(x) + y - std::log(y); };
  const double v0 = invariant(x0[0], x0[1]);
  double drift = 0.0;
  for (std::size_t i = 0; i < tr.length(); ++i) {
    drift = std::max(drift, std::abs(invariant(tr.states(i, 0), tr.states(i, 1)) - v0) / v0);
  }
  EXPECT_LT(drift, 1e-4);
}

TEST(OdeLibrary, UniformTimeGrid) {
  const OdeSystem& s = find_system(registry(), "van_der_pol_mu3");
  const std::vector<double> x0{1.0, 1.0};
  const Trajectory tr = simulate(s, x0, s.default_t_max, s.default_dt);
  for (std::size_t i = 0; i + 1 < tr.length(); ++i) {
    EXPECT_NEAR(tr.times[i + 1] - tr.times[i], tr.dt, 1e-9 * tr.dt);
  }
  EXPECT_TRUE(tr.states.all_finite());
}

TEST(OdeLibrary, SimulateIsDeterministic) {
  const OdeSystem& s = find_system(registry(), "lorenz63");
  const std::vector<double> x0{1.0, 2.0, 3.0};
  const Trajectory a = simulate(s, x0, 5.0, 0.01);
  const Trajectory b = simulate(s, x0, 5.0, 0.01);
  ASSERT_EQ(a.states.size(), b.states.size());
  EXPECT_EQ(std::memcmp(a.states.data(), b.states.data(), a.states.size() * sizeof(double)), 0);
  EXPECT_EQ(a.times, b.times);
}

TEST(OdeLibrary, BlowUpRaisesNonFinite) {
  OdeSystem s;
  s.name = "blowup";
  s.state_dim = 1;
  s.rhs = [](std::span<const double> x, std::span<const double>, std::span<double> d) {
    d[0] = x[0] * x[0];
  };
  const std::vector<double> x0{1.0};
  EXPECT_THROW(simulate(s, x0, 2.0, 0.01), NonFiniteError);
}

TEST(OdeLibrary, SampleDatasetIsSeedDeterministic) {
  DatasetSpec spec;
  spec.seed = 42;
  spec.systems = {{"harmonic_oscillator", 3, {}, {}, 0.0, 0.0},
                  {"van_der_pol_mu1", 2, {}, {{"mu", {0.5, 1.5}}}, 0.0, 0.0}};
  const auto a = sample_dataset(spec, registry());
  const auto b = sample_dataset(spec, registry());
  ASSERT_EQ(a.size(), 5u);
  ASSERT_EQ(b.size(), 5u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].system, b[i].system);
    EXPECT_EQ(a[i].params, b[i].params);
    EXPECT_EQ(std::memcmp(a[i].states.data(), b[i].states.data(),
                          a[i].states.size() * sizeof(double)),
              0);
  }
  EXPECT_EQ(a[3].system, "van_der_pol_mu1");
  EXPECT_GE(a[3].params.at("mu"), 0.5);
  EXPECT_LE(a[3].params.at("mu"), 1.5);
  // Different trajectories get different draws.
  EXPECT_NE(a[0].states(0, 0), a[1].states(0, 0));
}

TEST(OdeLibrary, ZeroCountDropsTheSystem) {
  DatasetSpec spec;
  spec.seed = 1;
  spec.systems = {{"harmonic_oscillator", 0, {}, {}, 0.0, 0.0},
                  {"pendulum_damped", 2, {}, {}, 0.0, 0.0}};
  const auto out = sample_dataset(spec, registry());
  ASSERT_EQ(out.size(), 2u);
  for (const auto& t : out) EXPECT_EQ(t.system, "pendulum_damped");
}

TEST(OdeLibrary, CollapsedRangeSharesInitialState) {
  DatasetSpec spec;
  spec.seed = 9;
  spec.systems = {{"duffing", 4, {{0.25, 0.25}, {-0.5, -0.5}}, {}, 0.0, 0.0}};
  const auto out = sample_dataset(spec, registry());
  ASSERT_EQ(out.size(), 4u);
  for (const auto& t : out) {
    EXPECT_EQ(t.states(0, 0), 0.25);
    EXPECT_EQ(t.states(0, 1), -0.5);
  }
}
