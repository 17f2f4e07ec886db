// lassode_acceptance: one PASS/FAIL line per headline criterion. Exits
// nonzero when any criterion fails. An optional argument runs only the
// criteria whose name contains it.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lassode/backbone.hpp"
#include "lassode/evaluation.hpp"
#include "lassode/grad_check.hpp"
#include "lassode/model.hpp"
#include "lassode/ode_decoder.hpp"
#include "lassode/ode_library.hpp"
#include "lassode/pipeline.hpp"
#include "lassode/training.hpp"
#include "test_support.hpp"

using namespace lassode;
using lassode::testing::random_tensor;
using lassode::testing::reference_affine_flow;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  // Records one check; the criterion fails if any check fails.
  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail << (detail.tellp() > 0 ? "; " : "") << what << (ok ? "" : " [failed]");
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// The three non-chaotic systems of the desk task.
const std::vector<std::string> kDeskSystems{"harmonic_oscillator", "van_der_pol_mu1",
                                            "pendulum_damped"};

std::vector<NormalizedTrajectory> desk_dataset(std::size_t per_system, std::uint64_t seed) {
  DatasetSpec spec;
  spec.seed = seed;
  for (const auto& s : kDeskSystems) spec.systems.push_back({s, per_system, {}, {}, 0.0, 0.0});
  std::vector<NormalizedTrajectory> out;
  std::size_t i = 0;
  for (const auto& t : sample_dataset(spec, register_builtin_systems())) {
    NormalizedTrajectory nt = normalize(t);
    nt.id = t.system + "_" + std::to_string(i++);
    out.push_back(std::move(nt));
  }
  return out;
}

// ---------------------------------------------------------------------------

void gradient_integrity(Outcome& o) {
  const auto start = Clock::now();
  const ModelConfig cfg = lassode::testing::toy_config();
  ParamStore params = init_params(cfg, 7);
  const NormalizedTrajectory nt = lassode::testing::sine_trajectory(41, 2);
  Tensor eps(2, cfg.d_z);
  for (std::size_t i = 0; i < eps.size(); ++i) eps[i] = 0.3 * double(i % 3) - 0.2;
  const auto rep = grad_check(
      [&](ParamScope& s) {
        ForwardOptions fo;
        fo.eps = &eps;
        const ForwardResult fr = forward(s, cfg, nt.values, nt.times, 20, fo);
        return elbo_loss(fr.prediction, nt.values, fr.posterior, 1e-3).loss;
      },
      params);
  const double secs = seconds_since(start);
  o.check(rep.max_rel_error < 1e-4, "max relative error " + fmt("%.2e", rep.max_rel_error) +
                                        " (" + rep.worst_path + ") < 1e-4");
  o.check(rep.per_tensor.size() == params.size(),
          std::to_string(rep.per_tensor.size()) + " tensors checked");
  o.check(secs < 60.0, "runtime " + fmt("%.1f", secs) + "s < 60s");
}

Tensor bounded_matrix(std::size_t d, double radius, std::mt19937_64& rng) {
  Tensor a = random_tensor(d, d, rng);
  double norm = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < d; ++j) row += std::abs(a(i, j));
    norm = std::max(norm, row);
  }
  std::uniform_real_distribution<double> u(0.1, 0.99);
  const double s = radius * u(rng) / norm;
  for (double& v : a.values()) v *= s;
  return a;
}

void solver_correctness(Outcome& o) {
  const auto start = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + trial % 14;  // up to the reference latent size 15
    const std::size_t k = 1 + trial % 8;
    PiecewiseAffineField field(d, TokenGrid::uniform(k));
    std::vector<Tensor> as;
    std::vector<std::vector<double>> bs;
    for (std::size_t t = 0; t < k; ++t) {
      as.push_back(bounded_matrix(d, 3.0, rng));
      std::vector<double> b(d);
      for (double& v : b) v = u(rng);
      bs.push_back(b);
      field.set(t, as.back(), b);
    }
    std::vector<double> z(d);
    for (double& v : z) v = u(rng);
    // n_step = 50 substeps per unit time, spread over the tokens.
    const LatentFlow flow = solve_piecewise(field, z, {0.0, 1.0}, (50 + k - 1) / k);
    for (std::size_t t = 0; t < k; ++t) z = reference_affine_flow(as[t], bs[t], z, 1.0 / double(k));
    for (std::size_t i = 0; i < d; ++i) worst = std::max(worst, std::abs(flow.states(1, i) - z[i]));
  }
  o.check(worst < 1e-6, "100 random stable fields: max error " + fmt("%.2e", worst) + " < 1e-6");

  // Rotation by one full period on the unit interval.
  const double w = 2.0 * std::numbers::pi;
  PiecewiseAffineField rot(2, TokenGrid::uniform(4));
  for (std::size_t t = 0; t < 4; ++t) {
    rot.set(t, Tensor::from_rows({{0.0, -w}, {w, 0.0}}), std::vector<double>{0.0, 0.0});
  }
  std::vector<double> times;
  for (std::size_t i = 0; i <= 200; ++i) times.push_back(double(i) / 200.0);
  const LatentFlow flow = solve_piecewise(rot, std::vector<double>{1.0, 0.0}, times, 50);
  double drift = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    drift = std::max(drift, std::abs(std::hypot(flow.states(i, 0), flow.states(i, 1)) - 1.0));
  }
  o.check(drift < 1e-6, "rotation norm drift " + fmt("%.2e", drift) + " < 1e-6");
  const double back = std::hypot(flow.states(200, 0) - 1.0, flow.states(200, 1));
  o.check(back < 1e-6, "return after one period " + fmt("%.2e", back));
  const double secs = seconds_since(start);
  o.check(secs < 30.0, "runtime " + fmt("%.1f", secs) + "s < 30s");
}

void cost_model_check(Outcome& o) {
  const auto start = Clock::now();
  const IntegrationCost c = cost_model(15, 256, 256, 2, 20);
  o.check(c.c_lin == 225, "C_lin " + std::to_string(c.c_lin));
  o.check(c.c_param == 126976, "C_param " + std::to_string(c.c_param));
  o.check(c.c_mlp == 73216, "C_mlp " + std::to_string(c.c_mlp));
  o.check(std::abs(c.ratio() - 11.1) < 0.05, "FLOP ratio " + fmt("%.3f", c.ratio()));

  BenchOptions b;  // reference widths: d_z 15, d_model 256, width 256, L 2, n_step 20
  const auto cells = bench_integration(b);
  const double measured = cells.at(0).measured_ratio();
  o.check(measured > 2.0, "measured wall-clock ratio " + fmt("%.2f", measured) + "x > 2x");
  const double secs = seconds_since(start);
  o.check(secs < 120.0, "runtime " + fmt("%.1f", secs) + "s < 120s");
}

void overfit_sanity(Outcome& o) {
  const auto start = Clock::now();
  const auto registry = register_builtin_systems();
  const OdeSystem& sys = find_system(registry, "harmonic_oscillator");
  const std::vector<double> x0{1.0, 0.0};
  NormalizedTrajectory nt = normalize(simulate(sys, x0, sys.default_t_max, sys.default_dt));
  nt.id = "ho";
  const ModelConfig cfg = ModelConfig::desk();

  auto run = [&](double kl_weight) {
    ParamStore params = init_params(cfg, 1);
    TrainConfig tc;
    tc.batch_size = 1;
    tc.epochs = 2000;
    tc.max_steps = 2000;
    tc.seed = 1;
    tc.kl_weight = kl_weight;
    const TrainResult r = train(params, cfg, {nt}, tc);
    double worst = 0.0;
    for (double ratio : kEvalRatios) {
      worst = std::max(worst, mse(predict(params, cfg, nt, prefix_length(nt.length(), ratio)),
                                  nt.values));
    }
    return std::pair{worst, r.steps};
  };
  const auto [mse0, steps] = run(0.0);
  const double secs = seconds_since(start);
  o.check(mse0 < 1e-3, "kl weight 0: worst full-trajectory MSE over ratios " + fmt("%.2e", mse0) +
                           " < 1e-3 after " + std::to_string(steps) + " steps");
  o.check(secs < 600.0, "runtime " + fmt("%.0f", secs) + "s < 600s");
  const auto [mse_kl, _] = run(1e-3);
  std::printf("INFO  overfit with kl weight 1e-3: worst MSE %.2e\n", mse_kl);
}

// Shared by the generalization and ablation criteria.
constexpr std::size_t kGenPerSystem = 64;
constexpr std::size_t kGenTestPerSystem = 8;
constexpr std::size_t kGenBatch = 32;
constexpr std::size_t kGenEpochs = 800;
constexpr std::uint64_t kTrainSeed = 11;
constexpr std::uint64_t kTestSeed = 9001;

void generalization(Outcome& o) {
  const auto start = Clock::now();
  const auto train_set = desk_dataset(kGenPerSystem, kTrainSeed);
  const auto test_set = desk_dataset(kGenTestPerSystem, kTestSeed);
  const ModelConfig cfg = ModelConfig::desk();
  ParamStore params = init_params(cfg, 0);
  TrainConfig tc;
  tc.epochs = kGenEpochs;
  tc.batch_size = kGenBatch;
  const TrainResult r = train(params, cfg, train_set, tc);
  const EvalReport model = evaluate(params, cfg, test_set);
  const EvalReport base = persistence_baseline(test_set);
  for (std::size_t s = 0; s < model.systems.size(); ++s) {
    for (std::size_t k = 0; k < model.ratios.size(); ++k) {
      o.check(model.mse[s][k] < base.mse[s][k],
              model.systems[s] + "@" + fmt("%.1f", model.ratios[k]) + " " +
                  fmt("%.2e", model.mse[s][k]) + " vs " + fmt("%.2e", base.mse[s][k]));
    }
  }
  const double secs = seconds_since(start);
  o.check(secs < 3600.0, std::to_string(r.steps) + " steps, runtime " + fmt("%.0f", secs) +
                             "s < 3600s");
}

void mechanism_invariants(Outcome& o) {
  ModelConfig cfg = ModelConfig::desk();
  const ParamStore params = init_params(cfg, 3);
  const NormalizedTrajectory nt = lassode::testing::sine_trajectory(101, 3, 1.5);

  // Attention and routing.
  {
    ParamScope s(params, false);
    ForwardOptions fo;
    fo.capture = true;
    const ForwardResult fr = forward(s, cfg, nt.values, nt.times, 60, fo);
    double worst = 0.0;
    for (const Tensor& p : fr.trace.first_layer_heads) {
      for (std::size_t r = 0; r < p.rows(); ++r) {
        double sum = 0.0;
        for (std::size_t c = 0; c < p.cols(); ++c) sum += p(r, c);
        worst = std::max(worst, std::abs(sum - 1.0));
      }
    }
    o.check(!fr.trace.first_layer_heads.empty() && worst <= 1e-12,
            "attention row sums within " + fmt("%.1e", worst));
    bool top2 = fr.trace.moe.size() == cfg.n_layers;
    const std::size_t n = nt.channels() * cfg.k_token + cfg.csh_rows();
    for (const auto& m : fr.trace.moe) top2 = top2 && m.expert_rows == n * 2;
    o.check(top2 && cfg.top_k == 2, "MoE evaluates exactly 2 experts per token");
  }

  // Hub slice shape law.
  {
    bool ok = true;
    for (std::size_t k : {0u, 5u, 10u}) {
      ModelConfig c = cfg;
      c.k_csh = k;
      const ParamStore p = init_params(c, 4);
      ParamScope s(p, false);
      const ForwardResult fr = forward(s, c, nt.values, nt.times, 60);
      ok = ok && fr.final_tokens.rows() == nt.channels() * c.k_token &&
           fr.final_tokens.cols() == c.d_model && fr.coeffs.rows() == nt.channels() * c.k_token;
    }
    o.check(ok, "hub slice leaves K_token*d_x rows for K_CSH in {0,5,10}");
  }

  // LoRA zero-init no-op and adapter-only updates.
  {
    ParamStore p = params;
    const Tensor before = predict(p, cfg, nt, 60);
    lora_attach(p, attention_weight_paths(p), 4, 8.0, 5);
    const Tensor after = predict(p, cfg, nt, 60);
    o.check(std::memcmp(before.data(), after.data(), before.size() * sizeof(double)) == 0,
            "LoRA zero-init is bit-exact");
    const ParamStore frozen = p;
    TrainConfig tc = finetune_defaults();
    tc.epochs = 1;
    tc.batch_size = 1;
    finetune(p, cfg, {nt, nt}, tc);
    bool only_adapters = true, adapters_moved = false;
    for (const auto& path : p.paths()) {
      const auto& a = p.value(path).values();
      const auto& b = frozen.value(path).values();
      const bool same = std::equal(a.begin(), a.end(), b.begin(), b.end());
      if (p.flags(path).lora_adapter) {
        adapters_moved = adapters_moved || !same;
      } else {
        only_adapters = only_adapters && same;
      }
    }
    o.check(only_adapters && adapters_moved, "fine-tuning changes adapters only");
  }

  // Prefix causality of the channel summary.
  {
    auto summary = [&](const Tensor& values) {
      ParamScope s(params, false);
      return encode_channels(s, cfg, values, nt.times, 40).h.value();
    };
    const Tensor base = summary(nt.values);
    double change = 0.0;
    for (std::size_t i = 40; i < nt.length(); i += 7) {
      Tensor v = nt.values;
      for (std::size_t j = 0; j < v.cols(); ++j) v(i, j) += 3.0;
      change = std::max(change, lassode::testing::max_abs_diff(summary(v), base));
    }
    o.check(change == 0.0, "post-prefix perturbation moves h by " + fmt("%.1e", change));
  }
}

double oscillator_final_error(double dt) {
  const auto registry = register_builtin_systems();
  const OdeSystem& ho = find_system(registry, "harmonic_oscillator");
  const std::vector<double> x0{1.0, 0.0};
  const Trajectory tr = simulate(ho, x0, 2.0, dt, std::vector<double>{1.0});
  const double t = tr.times.back();
  return std::hypot(tr.states(tr.length() - 1, 0) - std::cos(t),
                    tr.states(tr.length() - 1, 1) + std::sin(t));
}

void pipeline_laws(Outcome& o) {
  const auto registry = register_builtin_systems();
  DatasetSpec spec;
  spec.seed = 42;
  for (const auto& s : kDeskSystems) spec.systems.push_back({s, 3, {}, {}, 0.0, 0.0});
  spec.systems.push_back({"lorenz63", 2, {}, {}, 0.0, 0.0});
  const auto trajs = sample_dataset(spec, registry);

  double worst = 0.0;
  for (const auto& t : trajs) {
    const NormalizedTrajectory nt = normalize(t);
    const Tensor back = denormalize(nt.values, nt.scales);
    worst = std::max(worst, lassode::testing::max_abs_diff(back, t.states));
  }
  o.check(worst < 1e-12, "normalization round trip " + fmt("%.1e", worst) + " < 1e-12");

  lassode::testing::TempDir dir("acceptance_pipeline");
  write_dataset(dir / "a", sample_dataset(spec, registry));
  write_dataset(dir / "b", sample_dataset(spec, registry));
  const auto a = lassode::testing::snapshot_dir(dir / "a");
  o.check(!a.empty() && a == lassode::testing::snapshot_dir(dir / "b"),
          "seeded generation byte-identical over " + std::to_string(a.size()) + " files");

  const double factor = oscillator_final_error(0.1) / oscillator_final_error(0.05);
  o.check(factor >= 12.0, "RK4 error factor on dt halving " + fmt("%.2f", factor) + " >= 12");
}

void ablation_direction(Outcome& o) {
  const auto train_set = desk_dataset(16, kTrainSeed);
  const auto test_set = desk_dataset(kGenTestPerSystem, kTestSeed);
  TrainConfig tc;
  tc.epochs = 150;
  const auto res = run_ablation({{"baseline", {}}, {"no_csh", {"no_csh"}},
                                 {"mlp_ode_field", {"mlp_ode_field"}}},
                                ModelConfig::desk(), tc, train_set, test_set, 0, 0.6);
  const AblationResult& base = res[0];
  const AblationResult& no_csh = res[1];
  const AblationResult& mlp = res[2];
  o.check(mlp.train_seconds > base.train_seconds,
          "mlp_ode_field trains in " + fmt("%.1f", mlp.train_seconds) + "s vs baseline " +
              fmt("%.1f", base.train_seconds) + "s");
  std::size_t worse = 0;
  std::string per;
  for (std::size_t s = 0; s < base.systems.size(); ++s) {
    worse += no_csh.mse[s] >= base.mse[s];
    per += " " + base.systems[s] + " " + fmt("%.2e", no_csh.mse[s]) + "/" + fmt("%.2e", base.mse[s]);
  }
  o.check(worse >= 2, "no_csh >= baseline on " + std::to_string(worse) + " of 3 systems:" + per);
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
      {"gradient_integrity", gradient_integrity},
      {"solver_correctness", solver_correctness},
      {"cost_model", cost_model_check},
      {"overfit_sanity", overfit_sanity},
      {"multi_system_generalization", generalization},
      {"mechanism_invariants", mechanism_invariants},
      {"pipeline_laws", pipeline_laws},
      {"ablation_direction", ablation_direction},
  };
  const std::string filter = argc > 1 ? argv[1] : "";
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    if (!filter.empty() && name.find(filter) == std::string::npos) continue;
    Outcome o;
    const auto start = Clock::now();
    try {
      fn(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    failures += !o.pass;
    std::printf("%s  %s (%.1fs): %s\n", o.pass ? "PASS" : "FAIL", name.c_str(),
                seconds_since(start), o.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
