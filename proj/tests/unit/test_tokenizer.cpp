#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lassode/grad_check.hpp"
#include "lassode/model.hpp"
#include "lassode/ops.hpp"
#include "lassode/tokenizer.hpp"
#include "test_support.hpp"

using namespace lassode;
using lassode::testing::random_tensor;

TEST(Tokenizer, GridPartitionsTheUnitInterval) {
  const TokenGrid g = TokenGrid::uniform(40);
  EXPECT_EQ(g.start(0), 0.0);
  EXPECT_EQ(g.end(39), 1.0);
  for (std::size_t k = 0; k + 1 < 40; ++k) EXPECT_EQ(g.end(k), g.start(k + 1));
  EXPECT_EQ(g.token_of(0.0), 0u);
  EXPECT_EQ(g.token_of(1.0), 39u);
  EXPECT_EQ(g.token_of(0.5), 20u);
}

TEST(Tokenizer, RbfPeaksAtItsCenter) {
  const RbfBank bank = RbfBank::uniform(64, 0.25);
  ASSERT_EQ(bank.centers.size(), 64u);
  for (std::size_t l = 0; l + 1 < 64; ++l) EXPECT_LT(bank.centers[l], bank.centers[l + 1]);
  for (std::size_t l : {0u, 17u, 63u}) {
    EXPECT_EQ(rbf_embed(bank.centers[l], bank)[l], 1.0);
  }
}

TEST(Tokenizer, RbfOneBandwidthAway) {
  const RbfBank bank = RbfBank::uniform(64, 0.25);
  const double mu = bank.centers[10];
  EXPECT_NEAR(rbf_embed(mu + 0.25, bank)[10], 0.606531, 1e-6);
  EXPECT_NEAR(rbf_embed(mu + 0.25, bank)[10], std::exp(-0.5), 1e-15);
}

TEST(Tokenizer, RbfIsSymmetric) {
  const RbfBank bank = RbfBank::uniform(16, 0.1);
  const std::size_t l = 8;
  for (double d : {0.01, 0.05, 0.2}) {
    EXPECT_NEAR(rbf_embed(bank.centers[l] + d, bank)[l], rbf_embed(bank.centers[l] - d, bank)[l],
                1e-15);
  }
}

TEST(Tokenizer, RbfIsLocal) {
  const RbfBank bank = RbfBank::uniform(64, 0.05);
  for (double t = 0.0; t <= 1.0; t += 0.01) {
    const auto phi = rbf_embed(t, bank);
    for (std::size_t l = 0; l < phi.size(); ++l) {
      if (std::abs(t - bank.centers[l]) > 4 * bank.sigma) EXPECT_LT(phi[l], std::exp(-8.0));
    }
  }
}

TEST(Tokenizer, IdentityModulationReturnsProjection) {
  std::mt19937_64 rng(1);
  const Tensor proj = random_tensor(2, 6, rng);
  const Modulation mod{ad::constant(Tensor(3, 6, 1.0)), ad::constant(Tensor(3, 6, 0.0))};
  const Tensor e = modulate(ad::constant(proj), mod).value();
  ASSERT_EQ(e.rows(), 6u);
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < 6; ++c) EXPECT_EQ(e(j * 3 + k, c), proj(j, c));
}

TEST(Tokenizer, ModulationIsScaleAndShift) {
  std::mt19937_64 rng(2);
  const Tensor proj = random_tensor(2, 4, rng);
  const Tensor gamma = random_tensor(3, 4, rng), beta = random_tensor(3, 4, rng);
  const Tensor e = modulate(ad::constant(proj), {ad::constant(gamma), ad::constant(beta)}).value();
  for (std::size_t j = 0; j < 2; ++j)
    for (std::size_t k = 0; k < 3; ++k)
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_DOUBLE_EQ(e(j * 3 + k, c), gamma(k, c) * proj(j, c) + beta(k, c));
}

TEST(Tokenizer, BetaGradientIsIdentity) {
  std::mt19937_64 rng(3);
  const Tensor proj = random_tensor(1, 5, rng);
  const Tensor w = random_tensor(4, 5, rng);
  ad::Var gamma(random_tensor(4, 5, rng), true), beta(random_tensor(4, 5, rng), true);
  ad::backward(ad::sum(ad::mul(modulate(ad::constant(proj), {gamma, beta}), ad::constant(w))));
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_EQ(beta.grad()[i], w[i]);

  ParamStore store;
  store.add("gamma", random_tensor(4, 5, rng));
  store.add("beta", random_tensor(4, 5, rng));
  const auto rep = grad_check(
      [&](ParamScope& s) {
        return ad::sum(ad::square(modulate(ad::constant(proj), {s.get("gamma"), s.get("beta")})));
      },
      store);
  EXPECT_LT(rep.max_rel_error, 1e-6);
}

namespace {

struct TokenizerFixture : ::testing::Test {
  ModelConfig cfg = lassode::testing::toy_config();
  ParamStore params;
  Tensor h;

  void SetUp() override {
    cfg.k_token = 6;
    params = init_params(cfg, 4);
    std::mt19937_64 rng(4);
    h = random_tensor(3, cfg.gru_hidden, rng);
  }
  Tensor tokens(const Tensor& hin) {
    ParamScope s(params, false);
    return tokenize(s, cfg, ad::constant(hin)).value();
  }
  Tensor projection(const Tensor& hin) {
    ParamScope s(params, false);
    return mlp(s, "tokenizer.h_proj", ad::constant(hin), 2, Activation::Tanh).value();
  }
};

}  // namespace

TEST_F(TokenizerFixture, EqualStartTimesGiveEqualModulation) {
  Tensor feats = time_features(cfg, TokenGrid::uniform(cfg.k_token));
  for (std::size_t c = 0; c < feats.cols(); ++c) feats(4, c) = feats(1, c);
  ParamScope s(params, false);
  const Modulation m = time_modulation(s, cfg, feats);
  for (std::size_t c = 0; c < cfg.d_model; ++c) {
    EXPECT_EQ(m.gamma.value()(4, c), m.gamma.value()(1, c));
    EXPECT_EQ(m.beta.value()(4, c), m.beta.value()(1, c));
  }
}

TEST_F(TokenizerFixture, ConstantBiasModulationIsIdentity) {
  for (const char* p : {"tokenizer.mod.l0.w", "tokenizer.mod.l0.b", "tokenizer.mod.l1.w"}) {
    params.mutable_value(p).fill(0.0);
  }
  Tensor& b = params.mutable_value("tokenizer.mod.l1.b");
  for (std::size_t c = 0; c < 2 * cfg.d_model; ++c) b(0, c) = c < cfg.d_model ? 1.0 : 0.0;
  params.mutable_value("tokenizer.channel_table").fill(0.0);
  const Tensor e = tokens(h);
  const Tensor proj = projection(h);
  for (std::size_t j = 0; j < 3; ++j)
    for (std::size_t k = 0; k < cfg.k_token; ++k)
      for (std::size_t c = 0; c < cfg.d_model; ++c)
        EXPECT_EQ(e(j * cfg.k_token + k, c), proj(j, c));
}

TEST_F(TokenizerFixture, ZeroChannelTableLeavesModulatedTokens) {
  params.mutable_value("tokenizer.channel_table").fill(0.0);
  ParamScope s(params, false);
  const ad::Var proj = mlp(s, "tokenizer.h_proj", ad::constant(h), 2, Activation::Tanh);
  const Tensor expected =
      modulate(proj, time_modulation(s, cfg, time_features(cfg, TokenGrid::uniform(cfg.k_token))))
          .value();
  const Tensor e = tokens(h);
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_EQ(e[i], expected[i]);
}

TEST_F(TokenizerFixture, ChannelsWithEqualSummaryDifferByTheirCodes) {
  Tensor same = h;
  for (std::size_t c = 0; c < cfg.gru_hidden; ++c) same(2, c) = same(0, c);
  const Tensor e = tokens(same);
  const Tensor& table = params.value("tokenizer.channel_table");
  for (std::size_t k = 0; k < cfg.k_token; ++k) {
    for (std::size_t c = 0; c < cfg.d_model; ++c) {
      const double diff = e(0 * cfg.k_token + k, c) - e(2 * cfg.k_token + k, c);
      EXPECT_NEAR(diff, table(0, c) - table(2, c), 1e-12);
    }
  }
}

TEST(Tokenizer, TwoChannelsFortyTokensGiveEightyRows) {
  ModelConfig cfg = lassode::testing::toy_config();
  cfg.k_token = 40;
  const ParamStore params = init_params(cfg, 5);
  std::mt19937_64 rng(5);
  ParamScope s(params, false);
  const Tensor e = tokenize(s, cfg, ad::constant(random_tensor(2, cfg.gru_hidden, rng))).value();
  EXPECT_EQ(e.rows(), 80u);
  EXPECT_EQ(e.cols(), cfg.d_model);
}

TEST(Tokenizer, TooManyChannelsIsRejected) {
  const ModelConfig cfg = lassode::testing::toy_config();
  const ParamStore params = init_params(cfg, 6);
  std::mt19937_64 rng(6);
  ParamScope s(params, false);
  EXPECT_THROW(tokenize(s, cfg, ad::constant(random_tensor(11, cfg.gru_hidden, rng))),
               ChannelOutOfRange);
  EXPECT_THROW(add_channel_encoding(ad::constant(Tensor(12, 4)), ad::constant(Tensor(2, 4)), 3, 4),
               ChannelOutOfRange);
}

TEST(Tokenizer, TokenCountIsIndependentOfPrefix) {
  const ModelConfig cfg = lassode::testing::toy_config();
  const ParamStore params = init_params(cfg, 7);
  const NormalizedTrajectory nt = lassode::testing::sine_trajectory(50, 2);
  std::size_t rows = 0;
  for (double r : {0.3, 0.6, 0.9, 1.0}) {
    ParamScope s(params, false);
    const ForwardResult fr =
        forward(s, cfg, nt.values, nt.times, prefix_length(nt.length(), r));
    if (rows == 0) rows = fr.tokens.rows();
    EXPECT_EQ(fr.tokens.rows(), rows);
  }
  EXPECT_EQ(rows, cfg.k_token * 2);
}

TEST(Tokenizer, FourierFeaturesAreSinCosPairs) {
  const auto f = fourier_embed(0.125, 4);
  ASSERT_EQ(f.size(), 4u);
  const double pi = 3.14159265358979323846;
  EXPECT_NEAR(f[0], std::sin(2 * pi * 0.125), 1e-15);
  EXPECT_NEAR(f[1], std::cos(2 * pi * 0.125), 1e-15);
  EXPECT_NEAR(f[2], std::sin(4 * pi * 0.125), 1e-15);
  EXPECT_NEAR(f[3], std::cos(4 * pi * 0.125), 1e-15);
}
