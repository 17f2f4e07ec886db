// Latent-field integration cost: token-wise affine field (with and without
// the one-off parameter decoding) against the conditioned MLP field.

#include <benchmark/benchmark.h>

#include <cmath>
#include <vector>

#include "lassode/nn.hpp"
#include "lassode/ode_decoder.hpp"
#include "lassode/tokenizer.hpp"

using namespace lassode;

namespace {

constexpr std::size_t kTokens = 40;
constexpr std::size_t kWidth = 256;

struct Fixture {
  std::size_t d_z;
  std::size_t d_model;
  TokenGrid grid = TokenGrid::uniform(kTokens);
  std::vector<double> eval_times;
  std::vector<double> z0;
  Tensor cond;
  Tensor w1, b1, w2, b2;  // f_param: d_model -> K -> d_z^2 + d_z
  MlpField field;

  Fixture(std::size_t dz, std::size_t dm) : d_z(dz), d_model(dm) {
    Rng rng(7);
    for (std::size_t k = 0; k <= kTokens; ++k) eval_times.push_back(double(k) / kTokens);
    z0.assign(dz, 0.5);
    cond = normal_tensor(kTokens, dm, 1.0, rng);
    w1 = xavier_uniform(dm, kWidth, rng);
    b1 = Tensor(1, kWidth);
    w2 = xavier_uniform(kWidth, dz * dz + dz, rng, 0.3 / std::sqrt(double(dz)));
    b2 = Tensor(1, dz * dz + dz);
    field.d_z = dz;
    field.weights = {xavier_uniform(dz + dm, kWidth, rng), xavier_uniform(kWidth, dz, rng)};
    field.biases = {Tensor(1, kWidth), Tensor(1, dz)};
  }

  // Plain loops so the benchmark measures the same arithmetic the cost model counts.
  Tensor params() const {
    const std::size_t out = d_z * d_z + d_z;
    Tensor c(kTokens, out);
    std::vector<double> h(kWidth);
    for (std::size_t k = 0; k < kTokens; ++k) {
      for (std::size_t j = 0; j < kWidth; ++j) {
        double a = b1[j];
        for (std::size_t i = 0; i < d_model; ++i) a += cond(k, i) * w1(i, j);
        h[j] = std::tanh(a);
      }
      for (std::size_t j = 0; j < out; ++j) {
        double a = b2[j];
        for (std::size_t i = 0; i < kWidth; ++i) a += h[i] * w2(i, j);
        c(k, j) = a;
      }
    }
    return c;
  }
};

void BM_AffineSolve(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto n_step = static_cast<std::size_t>(state.range(2));
  const PiecewiseAffineField field(f.d_z, f.grid, f.params());
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_piecewise(field, f.z0, f.eval_times, n_step));
  }
}

void BM_AffineWithParams(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto n_step = static_cast<std::size_t>(state.range(2));
  for (auto _ : state) {
    const PiecewiseAffineField field(f.d_z, f.grid, f.params());
    benchmark::DoNotOptimize(solve_piecewise(field, f.z0, f.eval_times, n_step));
  }
}

void BM_MlpSolve(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)));
  const auto n_step = static_cast<std::size_t>(state.range(2));
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve_mlp_field(f.field, f.cond, f.grid, f.z0, f.eval_times, n_step));
  }
}

}  // namespace

// {d_z, d_model, n_step}
BENCHMARK(BM_AffineSolve)->Args({15, 64, 20})->Args({15, 128, 20})->Args({15, 256, 20})->Args({15, 256, 1});
BENCHMARK(BM_AffineWithParams)->Args({15, 256, 20})->Args({15, 256, 1});
BENCHMARK(BM_MlpSolve)->Args({15, 256, 20})->Args({15, 256, 1});

BENCHMARK_MAIN();
