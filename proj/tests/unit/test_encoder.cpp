#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lassode/encoder.hpp"
#include "lassode/model.hpp"
#include "lassode/ops.hpp"
#include "test_support.hpp"

using namespace lassode;
using lassode::testing::random_tensor;

namespace {

struct EncoderFixture : ::testing::Test {
  ModelConfig cfg = lassode::testing::small_config();
  ParamStore params = init_params(cfg, 21);
  NormalizedTrajectory nt = lassode::testing::sine_trajectory(40, 3, 1.5);

  Tensor summary(const Tensor& values, std::size_t prefix_len) {
    ParamScope scope(params, false);
    return encode_channels(scope, cfg, values, nt.times, prefix_len).h.value();
  }

  void zero_prefix(const std::string& prefix) {
    for (const auto& p : params.paths()) {
      if (p.rfind(prefix, 0) == 0) params.mutable_value(p).fill(0.0);
    }
  }
};

}  // namespace

TEST_F(EncoderFixture, ZeroGruStaysAtZero) {
  zero_prefix("encoder.gru");
  std::mt19937_64 rng(1);
  const Tensor h = summary(random_tensor(40, 3, rng), 25);
  ASSERT_EQ(h.rows(), 3u);
  ASSERT_EQ(h.cols(), cfg.gru_hidden);
  for (double v : h.values()) EXPECT_EQ(v, 0.0);
}

TEST_F(EncoderFixture, FullPrefixIsTheLastHiddenState) {
  ParamScope scope(params, false);
  const ChannelSummary s = encode_channels(scope, cfg, nt.values, nt.times, nt.length());
  const Tensor& hs = s.hidden_states.value();
  const std::size_t d_x = nt.channels();
  ASSERT_EQ(hs.rows(), nt.length() * d_x);
  for (std::size_t j = 0; j < d_x; ++j) {
    for (std::size_t c = 0; c < cfg.gru_hidden; ++c) {
      EXPECT_EQ(s.h.value()(j, c), hs((nt.length() - 1) * d_x + j, c));
    }
  }
}

TEST_F(EncoderFixture, SummaryIsTheHiddenStateAtThePrefixEnd) {
  ParamScope scope(params, false);
  const ChannelSummary s = encode_channels(scope, cfg, nt.values, nt.times, 17);
  const Tensor& hs = s.hidden_states.value();
  for (std::size_t j = 0; j < nt.channels(); ++j) {
    for (std::size_t c = 0; c < cfg.gru_hidden; ++c) {
      EXPECT_EQ(s.h.value()(j, c), hs(16 * nt.channels() + j, c));
    }
  }
}

TEST_F(EncoderFixture, PrefixCausality) {
  const std::size_t prefix_len = 18;
  const Tensor base = summary(nt.values, prefix_len);
  std::mt19937_64 rng(2);
  for (std::size_t idx = prefix_len; idx < nt.length(); idx += 5) {
    Tensor changed = nt.values;
    for (std::size_t j = 0; j < changed.cols(); ++j) changed(idx, j) += 1.0 + double(rng() % 7);
    const Tensor h = summary(changed, prefix_len);
    for (std::size_t i = 0; i < h.size(); ++i) ASSERT_EQ(h[i], base[i]) << "index " << idx;
  }
  // A change inside the prefix does move the summary.
  Tensor inside = nt.values;
  inside(prefix_len - 1, 0) += 0.5;
  EXPECT_GT(lassode::testing::max_abs_diff(summary(inside, prefix_len), base), 0.0);
}

TEST_F(EncoderFixture, ChannelsAreEncodedIndependently) {
  const Tensor base = summary(nt.values, 20);
  Tensor changed = nt.values;
  for (std::size_t i = 0; i < changed.rows(); ++i) changed(i, 2) = -changed(i, 2);
  const Tensor h = summary(changed, 20);
  for (std::size_t c = 0; c < cfg.gru_hidden; ++c) {
    EXPECT_EQ(h(0, c), base(0, c));
    EXPECT_EQ(h(1, c), base(1, c));
  }
}

TEST_F(EncoderFixture, ZeroHeadsGiveStandardPosterior) {
  zero_prefix("encoder.mu");
  zero_prefix("encoder.logvar");
  ParamScope scope(params, false);
  std::mt19937_64 rng(3);
  const LatentPosterior post = posterior(scope, ad::constant(random_tensor(3, cfg.gru_hidden, rng)));
  for (double v : post.mu.value().values()) EXPECT_EQ(v, 0.0);
  for (double v : post.sigma.value().values()) EXPECT_EQ(v, 1.0);
}

TEST_F(EncoderFixture, SigmaIsClampedAtTheFloor) {
  zero_prefix("encoder.logvar");
  params.mutable_value("encoder.logvar.l1.b").fill(-1e4);
  ParamScope scope(params, false);
  std::mt19937_64 rng(4);
  const LatentPosterior post = posterior(scope, ad::constant(random_tensor(2, cfg.gru_hidden, rng)));
  for (double v : post.sigma.value().values()) EXPECT_EQ(v, kSigmaMin);

  params.mutable_value("encoder.logvar.l1.b").fill(1e4);
  ParamScope high(params, false);
  const LatentPosterior big = posterior(high, ad::constant(random_tensor(2, cfg.gru_hidden, rng)));
  for (double v : big.sigma.value().values()) EXPECT_EQ(v, kSigmaMax);
}

TEST_F(EncoderFixture, PosteriorIsDeterministic) {
  std::mt19937_64 rng(5);
  const Tensor h = random_tensor(3, cfg.gru_hidden, rng);
  ParamScope s1(params, false), s2(params, false);
  const LatentPosterior a = posterior(s1, ad::constant(h));
  const LatentPosterior b = posterior(s2, ad::constant(h));
  for (std::size_t i = 0; i < a.mu.value().size(); ++i) {
    EXPECT_EQ(a.mu.value()[i], b.mu.value()[i]);
    EXPECT_EQ(a.sigma.value()[i], b.sigma.value()[i]);
  }
}

TEST(Encoder, MeanModeReturnsMu) {
  std::mt19937_64 rng(6);
  LatentPosterior post{ad::constant(random_tensor(2, 4, rng)),
                       ad::constant(Tensor(2, 4, 0.7))};
  Rng r(1);
  const Tensor z = sample_z0(post, LatentMode::Mean, r).value();
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], post.mu.value()[i]);
}

TEST(Encoder, SampleAtTheClampFloorStaysNearMean) {
  std::mt19937_64 rng(7);
  LatentPosterior post{ad::constant(random_tensor(3, 8, rng)),
                       ad::constant(Tensor(3, 8, kSigmaMin))};
  Rng r(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor z = sample_z0(post, LatentMode::Sample, r).value();
    for (std::size_t i = 0; i < z.size(); ++i) {
      EXPECT_LT(std::abs(z[i] - post.mu.value()[i]), 1e-3);
    }
  }
}

TEST(Encoder, SeededSampleIsReproducible) {
  std::mt19937_64 rng(8);
  LatentPosterior post{ad::constant(random_tensor(2, 5, rng)),
                       ad::constant(Tensor(2, 5, 0.3))};
  Rng r1(99), r2(99);
  const Tensor a = sample_z0(post, LatentMode::Sample, r1).value();
  const Tensor b = sample_z0(post, LatentMode::Sample, r2).value();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  EXPECT_NE(a[0], post.mu.value()[0]);
}

TEST(Encoder, ReparameterizationGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(9);
  const Tensor mu0 = random_tensor(2, 4, rng);
  const Tensor sigma0 = random_tensor(2, 4, rng, 0.5);
  Tensor sigma_pos = sigma0;
  for (double& v : sigma_pos.values()) v = std::abs(v) + 0.1;
  const Tensor eps = random_tensor(2, 4, rng, 2.0);

  ad::Var mu(mu0, true), sigma(sigma_pos, true);
  ad::backward(ad::sum(ad::square(sample_z0({mu, sigma}, eps))));

  auto value = [&](const Tensor& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double z = m[i] + sigma_pos[i] * eps[i];
      s += z * z;
    }
    return s;
  };
  Tensor m = mu0;
  double worst = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double saved = m[i];
    m[i] = saved + 1e-6;
    const double up = value(m);
    m[i] = saved - 1e-6;
    const double down = value(m);
    m[i] = saved;
    worst = std::max(worst, std::abs(mu.grad()[i] - (up - down) / 2e-6));
    scale = std::max(scale, std::abs(mu.grad()[i]));
  }
  EXPECT_LT(worst / (scale + 1e-8), 1e-4);
}

TEST(Encoder, InputRowsCarryValueAndStep) {
  const Tensor values = Tensor::from_rows({{1.0, 2.0}, {3.0, 4.0}, {5.0, 6.0}});
  const std::vector<double> times{0.0, 0.25, 0.75};
  const Tensor in = encoder_inputs(values, times);
  ASSERT_EQ(in.rows(), 6u);
  ASSERT_EQ(in.cols(), 2u);
  // Time major: row t*d_x + j.
  EXPECT_EQ(in(0, 0), 1.0);
  EXPECT_EQ(in(1, 0), 2.0);
  EXPECT_EQ(in(4, 0), 5.0);
  EXPECT_EQ(in(0, 1), 0.25);  // first step repeats the first interval
  EXPECT_EQ(in(2, 1), 0.25);
  EXPECT_EQ(in(5, 1), 0.5);
}
