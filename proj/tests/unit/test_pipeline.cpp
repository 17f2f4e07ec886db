#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <numbers>
#include <random>

#include "lassode/errors.hpp"
#include "lassode/ode_library.hpp"
#include "lassode/pipeline.hpp"
#include "test_support.hpp"

using namespace lassode;
using lassode::testing::TempDir;

namespace {

Trajectory make_trajectory(const std::vector<std::vector<double>>& rows, double dt) {
  Trajectory t;
  t.system = "manual";
  t.dt = dt;
  t.states = Tensor(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    t.times.push_back(dt * static_cast<double>(i));
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.states(i, j) = rows[i][j];
  }
  t.t_max = t.times.back();
  return t;
}

Trajectory sine_seconds(double period, double dt, std::size_t points) {
  Trajectory t;
  t.system = "sine";
  t.dt = dt;
  t.states = Tensor(points, 1);
  for (std::size_t i = 0; i < points; ++i) {
    const double s = dt * static_cast<double>(i);
    t.times.push_back(s);
    t.states(i, 0) = std::sin(2.0 * std::numbers::pi * s / period);
  }
  t.t_max = t.times.back();
  return t;
}

// Index of the largest nonzero-frequency DFT magnitude, computed directly.
std::size_t dominant_frequency(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::size_t best = 1;
  double best_mag = -1.0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * i) / double(n));
    }
    if (std::abs(acc) > best_mag) {
      best_mag = std::abs(acc);
      best = k;
    }
  }
  return best;
}

std::vector<Trajectory> small_dataset() {
  DatasetSpec spec;
  spec.seed = 5;
  spec.systems = {{"harmonic_oscillator", 2, {}, {}, 0.0, 0.0},
                  {"lorenz63", 1, {}, {}, 0.0, 0.0}};
  return sample_dataset(spec, register_builtin_systems());
}

}  // namespace

TEST(Pipeline, NormalizationEndpointsAndMidpoint) {
  const Trajectory t = make_trajectory({{-3.0}, {0.0}, {3.0}, {1.5}}, 1.0);
  const NormalizedTrajectory nt = normalize(t);
  EXPECT_EQ(nt.values(0, 0), -1.0);
  EXPECT_EQ(nt.values(1, 0), 0.0);
  EXPECT_EQ(nt.values(2, 0), 1.0);
  EXPECT_DOUBLE_EQ(nt.values(3, 0), 0.5);
}

TEST(Pipeline, TimeIsDividedByTmax) {
  const Trajectory t = make_trajectory({{0.0}, {1.0}, {2.0}, {4.0}}, 5.0);
  const NormalizedTrajectory nt = normalize(t, 30.0);
  EXPECT_EQ(nt.times[3], 15.0 / 30.0);
  EXPECT_EQ(nt.times[3], 0.5);
  EXPECT_EQ(nt.times[0], 0.0);
}

TEST(Pipeline, RejectsTmaxShorterThanTrajectory) {
  const Trajectory t = make_trajectory({{0.0}, {1.0}, {2.0}}, 5.0);
  EXPECT_THROW(normalize(t, 9.0), std::invalid_argument);
}

TEST(Pipeline, RoundTripOnRandomTrajectories) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  for (int trial = 0; trial < 20; ++trial) {
    Trajectory t;
    t.dt = 0.1;
    t.states = Tensor(40, 3);
    for (std::size_t i = 0; i < 40; ++i) {
      t.times.push_back(0.1 * i);
      for (std::size_t j = 0; j < 3; ++j) t.states(i, j) = u(rng) * (j + 1);
    }
    t.t_max = t.times.back();
    const NormalizedTrajectory nt = normalize(t);
    for (double v : nt.values.values()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    for (double v : nt.times) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    const Tensor back = denormalize(nt.values, nt.scales);
    for (std::size_t i = 0; i < back.size(); ++i) {
      EXPECT_LE(std::abs(back[i] - t.states[i]), 1e-12 * std::max(1.0, std::abs(t.states[i])));
    }
  }
}

TEST(Pipeline, ConstantChannelMapsToZero) {
  const Trajectory t = make_trajectory({{2.0, 1.0}, {2.0, 3.0}, {2.0, 2.0}}, 1.0);
  const NormalizedTrajectory nt = normalize(t);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(nt.values(i, 0), 0.0);
  EXPECT_TRUE(nt.scales[0].degenerate);
  EXPECT_EQ(nt.scales[0].scale, 1.0);
  const Tensor back = denormalize(nt.values, nt.scales);
  EXPECT_EQ(back(1, 0), 2.0);
}

TEST(Pipeline, ChannelsAreNormalizedIndependently) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  Trajectory a = make_trajectory(std::vector<std::vector<double>>(30, {0.0, 0.0}), 0.2);
  for (double& v : a.states.values()) v = u(rng);
  Trajectory b = a;
  for (std::size_t i = 0; i < b.length(); ++i) b.states(i, 1) = 100.0 * u(rng);
  const NormalizedTrajectory na = normalize(a);
  const NormalizedTrajectory nb = normalize(b);
  for (std::size_t i = 0; i < a.length(); ++i) EXPECT_EQ(na.values(i, 0), nb.values(i, 0));
}

TEST(Pipeline, MultiTimescaleSignalsShareCycleCount) {
  // Same shape, one sampled 10x faster: 30 s at dt=0.3 vs 3 s at dt=0.03.
  const Trajectory slow = sine_seconds(10.0, 0.3, 101);
  const Trajectory fast = sine_seconds(1.0, 0.03, 101);
  const NormalizedTrajectory ns = normalize(slow, 30.0);
  const NormalizedTrajectory nf = normalize(fast, 3.0);
  std::vector<double> xs(ns.length()), xf(nf.length());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xs[i] = ns.values(i, 0);
    xf[i] = nf.values(i, 0);
  }
  EXPECT_EQ(dominant_frequency(xs), dominant_frequency(xf));
  EXPECT_EQ(dominant_frequency(xs), 3u);
}

TEST(Pipeline, PrefixFloorRule) {
  EXPECT_EQ(prefix_length(100, 0.3), 30u);
  EXPECT_EQ(prefix_length(101, 0.9), 90u);
  EXPECT_EQ(prefix_length(100, 1.0), 100u);
  EXPECT_EQ(prefix_length(57, 1.0), 57u);
  for (double r : {0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9}) {
    EXPECT_EQ(prefix_length(1000, r), static_cast<std::size_t>(std::lround(1000 * r)));
  }
  EXPECT_THROW(prefix_length(5, 0.3), PrefixTooShort);
  EXPECT_THROW(prefix_length(100, 0.0), std::invalid_argument);
  EXPECT_THROW(prefix_length(100, 1.5), std::invalid_argument);
}

TEST(Pipeline, SlicePrefixSupervisesEveryPoint) {
  const NormalizedTrajectory nt = lassode::testing::sine_trajectory(100, 2);
  const PrefixedSample s = slice_prefix(nt, 0.3);
  EXPECT_EQ(s.prefix_len, 30u);
  EXPECT_EQ(s.target_mask.size(), 100u);
  for (bool b : s.target_mask) EXPECT_TRUE(b);
  EXPECT_EQ(slice_prefix(nt, 1.0).prefix_len, 100u);
}

TEST(Pipeline, TrajectoryCsvRoundTrip) {
  TempDir dir("csv");
  const auto trajs = small_dataset();
  write_trajectory_csv(dir / "a.csv", trajs[0].times, trajs[0].states);
  const std::string text = lassode::testing::read_file(dir / "a.csv");
  EXPECT_EQ(text.substr(0, text.find('\n')), "t,x1,x2");
  const CsvTable back = read_trajectory_csv(dir / "a.csv");
  EXPECT_EQ(back.times, trajs[0].times);
  for (std::size_t i = 0; i < back.states.size(); ++i) EXPECT_EQ(back.states[i], trajs[0].states[i]);
}

TEST(Pipeline, EmptyManifestIsValid) {
  TempDir dir("empty");
  write_manifest(dir.path(), Manifest{});
  const Manifest m = read_manifest(dir.path());
  EXPECT_TRUE(m.entries.empty());
  EXPECT_TRUE(read_dataset(dir.path()).empty());
}

TEST(Pipeline, ManifestRoundTrip) {
  TempDir dir("manifest");
  const auto trajs = small_dataset();
  const Manifest written = write_dataset(dir.path(), trajs);
  ASSERT_EQ(written.entries.size(), 3u);
  EXPECT_EQ(read_manifest(dir.path()), written);
  EXPECT_EQ(written.entries[2].system, "lorenz63");
  EXPECT_EQ(written.entries[2].d_x, 3u);
  EXPECT_EQ(written.entries[2].params.at("rho"), 28.0);
  const auto back = read_dataset(dir.path());
  ASSERT_EQ(back.size(), trajs.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].system, trajs[i].system);
    EXPECT_EQ(back[i].times, trajs[i].times);
    EXPECT_EQ(std::memcmp(back[i].states.data(), trajs[i].states.data(),
                          trajs[i].states.size() * sizeof(double)),
              0);
  }
}

TEST(Pipeline, MissingCsvNamesTheFile) {
  TempDir dir("missing");
  const Manifest m = write_dataset(dir.path(), small_dataset());
  const std::string victim = m.entries[1].file;
  std::filesystem::remove(dir / victim);
  try {
    read_dataset(dir.path());
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find(victim), std::string::npos) << e.what();
  }
}

TEST(Pipeline, MissingManifestIsLoadError) {
  TempDir dir("nomanifest");
  EXPECT_THROW(read_manifest(dir.path()), LoadError);
}
