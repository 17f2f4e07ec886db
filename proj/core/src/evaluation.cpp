#include "lassode/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <thread>

#include "eigen_view.hpp"
#include "lassode/backbone.hpp"
#include "lassode/errors.hpp"
#include "lassode/tokenizer.hpp"

namespace lassode {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::ofstream open_out(const std::filesystem::path& file) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file);
  if (!out) throw LoadError("cannot write '" + file.string() + "'");
  return out;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double EvalReport::average(std::size_t system) const {
  const auto& row = mse.at(system);
  double s = 0.0;
  for (double v : row) s += v;
  return row.empty() ? 0.0 : s / static_cast<double>(row.size());
}

double EvalReport::system_mean(std::size_t ratio) const {
  double s = 0.0;
  for (const auto& row : mse) s += row.at(ratio);
  return mse.empty() ? 0.0 : s / static_cast<double>(mse.size());
}

std::size_t EvalReport::system_index(const std::string& system) const {
  const auto it = std::find(systems.begin(), systems.end(), system);
  if (it == systems.end()) throw std::out_of_range("EvalReport: no system '" + system + "'");
  return static_cast<std::size_t>(it - systems.begin());
}

double mse(const Tensor& prediction, const Tensor& target) {
  if (!prediction.same_shape(target)) {
    throw ShapeError("mse: prediction " + prediction.shape_string() + " vs target " +
                     target.shape_string());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = prediction[i] - target[i];
    s += d * d;
  }
  return target.size() == 0 ? 0.0 : s / static_cast<double>(target.size());
}

EvalReport evaluate_predictor(const std::vector<NormalizedTrajectory>& data,
                              const std::vector<double>& ratios, const Predictor& predict,
                              std::size_t workers) {
  if (ratios.empty()) throw std::invalid_argument("evaluate: no prefix ratios");
  const std::size_t n = data.size();
  const std::size_t R = ratios.size();
  std::vector<double> scores(n * R, 0.0);
  std::vector<double> busy(n, 0.0);

  auto run = [&](std::size_t i) {
    const auto t0 = Clock::now();
    for (std::size_t r = 0; r < R; ++r) {
      const std::size_t len = prefix_length(data[i].length(), ratios[r]);
      scores[i * R + r] = mse(predict(data[i], len), data[i].values);
    }
    busy[i] = seconds_since(t0);
  };
  const std::size_t w = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(1, n));
  if (w == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < w; ++k) {
      pool.emplace_back([&, k] {
        for (std::size_t i = k; i < n; i += w) run(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  std::map<std::string, std::vector<std::size_t>> by_system;
  for (std::size_t i = 0; i < n; ++i) by_system[data[i].system].push_back(i);

  EvalReport rep;
  rep.ratios = ratios;
  for (const auto& [system, members] : by_system) {
    rep.systems.push_back(system);
    rep.counts.push_back(members.size());
    std::vector<double> row(R, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t i : members) row[r] += scores[i * R + r];
      row[r] /= static_cast<double>(members.size());
    }
    rep.mse.push_back(std::move(row));
  }
  double total = 0.0;
  for (double b : busy) total += b;
  rep.seconds_per_trajectory = n == 0 ? 0.0 : total / static_cast<double>(n * R);
  return rep;
}

EvalReport evaluate(const ParamStore& params, const ModelConfig& cfg,
                    const std::vector<NormalizedTrajectory>& data,
                    const std::vector<double>& ratios, std::size_t workers) {
  for (const auto& nt : data) {
    if (nt.channels() > cfg.d_x_max) {
      throw ShapeError("evaluate: trajectory '" + nt.id + "' has " + std::to_string(nt.channels()) +
                       " channels; the model supports " + std::to_string(cfg.d_x_max));
    }
  }
  EvalReport rep = evaluate_predictor(
      data, ratios,
      [&](const NormalizedTrajectory& nt, std::size_t len) { return predict(params, cfg, nt, len); },
      workers);
  rep.fingerprint = config_fingerprint(cfg);
  return rep;
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<NormalizedTrajectory>& data,
                    const std::vector<double>& ratios, std::size_t workers) {
  return evaluate(ckpt.params, checkpoint_config(ckpt), data, ratios, workers);
}

Tensor persistence_forecast(const NormalizedTrajectory& nt, std::size_t prefix_len) {
  if (prefix_len == 0 || prefix_len > nt.length()) {
    throw std::invalid_argument("persistence_forecast: prefix length out of range");
  }
  Tensor out = nt.values;
  for (std::size_t i = prefix_len; i < nt.length(); ++i) {
    for (std::size_t j = 0; j < nt.channels(); ++j) out(i, j) = nt.values(prefix_len - 1, j);
  }
  return out;
}

EvalReport persistence_baseline(const std::vector<NormalizedTrajectory>& data,
                                const std::vector<double>& ratios) {
  return evaluate_predictor(data, ratios, persistence_forecast);
}

std::string config_fingerprint(const ModelConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : cfg.to_json()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<AblationVariant> default_ablation_variants() {
  std::vector<AblationVariant> out{{"baseline", {}}};
  for (const auto& name : AblationToggles::names()) out.push_back({name, {name}});
  return out;
}

std::vector<AblationResult> run_ablation(const std::vector<AblationVariant>& variants,
                                         const ModelConfig& base, const TrainConfig& tc,
                                         const std::vector<NormalizedTrajectory>& train_set,
                                         const std::vector<NormalizedTrajectory>& test,
                                         std::uint64_t init_seed, double ratio) {
  std::vector<AblationResult> out;
  for (const auto& v : variants) {
    ModelConfig cfg = base;
    for (const auto& t : v.toggles) cfg.ablation.set(t);
    cfg.validate();
    ParamStore params = init_params(cfg, init_seed);
    const TrainResult tr = train(params, cfg, train_set, tc);
    const EvalReport rep = evaluate(params, cfg, test, {ratio}, tc.workers);

    AblationResult res;
    res.variant = v.name;
    res.systems = rep.systems;
    for (const auto& row : rep.mse) res.mse.push_back(row[0]);
    res.mean_mse = rep.system_mean(0);
    res.train_seconds = tr.seconds;
    res.parameters = params.parameter_count();
    out.push_back(std::move(res));
  }
  return out;
}

void write_ablation_csv(const std::filesystem::path& file,
                        const std::vector<AblationResult>& results) {
  std::ofstream out = open_out(file);
  out << "variant";
  if (!results.empty()) {
    for (const auto& s : results.front().systems) out << ",mse_" << s;
  }
  out << ",mean_mse,train_seconds,parameters\n";
  for (const auto& r : results) {
    out << r.variant;
    for (double m : r.mse) out << ',' << fmt(m);
    out << ',' << fmt(r.mean_mse) << ',' << fmt(r.train_seconds) << ',' << r.parameters << '\n';
  }
}

namespace {

struct DenseLayer {
  Tensor w;  // in x out
  Tensor b;  // 1 x out
};

std::vector<DenseLayer> random_mlp(const std::vector<std::size_t>& widths, Rng& rng) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.push_back({xavier_uniform(widths[i], widths[i + 1], rng), Tensor(1, widths[i + 1])});
  }
  return layers;
}

// Row-batched tanh MLP: (K x in) -> (K x out), no activation on the last layer.
Tensor run_mlp(const std::vector<DenseLayer>& layers, const Tensor& x) {
  detail::RowMat h = detail::view(x);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    detail::RowMat next = h * detail::view(layers[i].w);
    next.rowwise() += detail::view(layers[i].b).row(0);
    if (i + 1 < layers.size()) next = next.array().tanh().matrix();
    h = std::move(next);
  }
  Tensor out(static_cast<std::size_t>(h.rows()), static_cast<std::size_t>(h.cols()));
  detail::view(out) = h;
  return out;
}

template <class F>
double median_seconds(std::size_t warmup, std::size_t repeats, F&& f) {
  for (std::size_t i = 0; i < warmup; ++i) f();
  std::vector<double> t;
  for (std::size_t i = 0; i < std::max<std::size_t>(1, repeats); ++i) {
    const auto t0 = Clock::now();
    f();
    t.push_back(seconds_since(t0));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

}  // namespace

std::vector<BenchCell> bench_integration(const BenchOptions& o) {
  if (o.layers < 2) throw std::invalid_argument("bench_integration: layers must be >= 2");
  std::vector<BenchCell> cells;
  Rng rng(o.seed);
  const TokenGrid grid = TokenGrid::uniform(o.k_token);
  std::vector<double> eval_times;
  for (std::size_t k = 0; k <= o.k_token; ++k) {
    eval_times.push_back(static_cast<double>(k) / static_cast<double>(o.k_token));
  }
  for (std::size_t dz : o.d_z) {
    for (std::size_t dm : o.d_model) {
      std::vector<std::size_t> pw{dm};
      std::vector<std::size_t> fw{dz + dm};
      for (std::size_t l = 0; l + 1 < o.layers; ++l) {
        pw.push_back(o.k_width);
        fw.push_back(o.k_width);
      }
      pw.push_back(dz * dz + dz);
      fw.push_back(dz);
      auto f_param = random_mlp(pw, rng);
      // Small affine fields keep the flow bounded.
      for (double& v : f_param.back().w.values()) v *= 0.3 / std::sqrt(static_cast<double>(dz));

      MlpField field;
      field.d_z = dz;
      field.act = Activation::Tanh;
      for (auto& layer : random_mlp(fw, rng)) {
        field.weights.push_back(std::move(layer.w));
        field.biases.push_back(std::move(layer.b));
      }
      const Tensor cond = normal_tensor(o.k_token, dm, 1.0, rng);
      std::vector<double> z0(dz);
      std::normal_distribution<double> nd(0.0, 1.0);
      for (double& v : z0) v = nd(rng);

      for (std::size_t ns : o.n_step) {
        BenchCell cell;
        cell.d_z = dz;
        cell.d_model = dm;
        cell.n_step = ns;
        cell.cost = cost_model(static_cast<std::int64_t>(dz), static_cast<std::int64_t>(dm),
                               static_cast<std::int64_t>(o.k_width),
                               static_cast<std::int64_t>(o.layers), static_cast<std::int64_t>(ns));
        PiecewiseAffineField pw_field(dz, grid, run_mlp(f_param, cond));
        cell.param_seconds =
            median_seconds(o.warmup, o.repeats, [&] { pw_field.coeffs = run_mlp(f_param, cond); });
        cell.linear_seconds = median_seconds(o.warmup, o.repeats, [&] {
          (void)solve_piecewise(pw_field, z0, eval_times, ns);
        });
        cell.mlp_seconds = median_seconds(o.warmup, o.repeats, [&] {
          (void)solve_mlp_field(field, cond, grid, z0, eval_times, ns);
        });
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

void write_bench_csv(const std::filesystem::path& file, const std::vector<BenchCell>& cells) {
  std::ofstream out = open_out(file);
  out << "d_z,d_model,n_step,param_seconds,linear_seconds,mlp_seconds,measured_ratio,"
         "c_param,c_lin,c_mlp,linear_flops,mlp_flops,flop_ratio\n";
  for (const auto& c : cells) {
    out << c.d_z << ',' << c.d_model << ',' << c.n_step << ',' << fmt(c.param_seconds) << ','
        << fmt(c.linear_seconds) << ',' << fmt(c.mlp_seconds) << ',' << fmt(c.measured_ratio())
        << ',' << c.cost.c_param << ',' << c.cost.c_lin << ',' << c.cost.c_mlp << ','
        << c.cost.linear_total << ',' << c.cost.mlp_total << ',' << fmt(c.cost.ratio()) << '\n';
  }
}

Introspection introspect(const ParamStore& params, const ModelConfig& cfg,
                         const std::vector<NormalizedTrajectory>& sample, double ratio) {
  if (sample.empty()) throw std::invalid_argument("introspect: empty sample");
  Introspection out;
  if (cfg.csh_rows() > 0) {
    out.csh = params.value(csh_path(cfg, 0));
  } else {
    out.csh = Tensor(std::vector<std::size_t>{0, cfg.d_model}, {});
  }

  std::vector<Tensor> blocks;
  std::size_t rows = 0;
  for (std::size_t s = 0; s < sample.size(); ++s) {
    const NormalizedTrajectory& nt = sample[s];
    ParamScope scope(params, false);
    ForwardOptions opts;
    opts.capture = s == 0;
    const ForwardResult fr =
        forward(scope, cfg, nt.values, nt.times, prefix_length(nt.length(), ratio), opts);
    const Tensor& tok = fr.tokens.value();
    for (std::size_t r = 0; r < tok.rows(); ++r) {
      out.token_system.push_back(nt.system);
      out.token_id.push_back(nt.id);
      out.token_channel.push_back(r / cfg.k_token);
      out.token_index.push_back(r % cfg.k_token);
    }
    rows += tok.rows();
    blocks.push_back(tok);
    if (s == 0) {
      out.attention = fr.trace.first_layer_mean;
      for (std::size_t r = 0; r < tok.rows(); ++r) {
        out.attn_rows.push_back("token:c" + std::to_string(r / cfg.k_token) + "k" +
                                std::to_string(r % cfg.k_token));
      }
      for (std::size_t i = 0; i < cfg.csh_rows(); ++i) out.attn_rows.push_back("csh:" + std::to_string(i));
    }
  }
  out.tokens = Tensor(rows, cfg.d_model);
  std::size_t at = 0;
  for (const auto& b : blocks) {
    std::copy(b.values().begin(), b.values().end(), out.tokens.data() + at * cfg.d_model);
    at += b.rows();
  }
  return out;
}

void write_introspection(const std::filesystem::path& dir, const Introspection& intro) {
  std::filesystem::create_directories(dir);
  auto header = [](std::ofstream& out, const char* lead, std::size_t n, const char* stem) {
    out << lead;
    for (std::size_t i = 0; i < n; ++i) out << ',' << stem << i;
    out << '\n';
  };
  {
    std::ofstream out = open_out(dir / "csh.csv");
    header(out, "hub", intro.csh.cols(), "e");
    for (std::size_t r = 0; r < intro.csh.rows(); ++r) {
      out << r;
      for (double v : intro.csh.row_span(r)) out << ',' << fmt(v);
      out << '\n';
    }
  }
  {
    std::ofstream out = open_out(dir / "tokens.csv");
    out << "system,trajectory,channel,token";
    for (std::size_t i = 0; i < intro.tokens.cols(); ++i) out << ",e" << i;
    out << '\n';
    for (std::size_t r = 0; r < intro.tokens.rows(); ++r) {
      out << intro.token_system[r] << ',' << intro.token_id[r] << ',' << intro.token_channel[r]
          << ',' << intro.token_index[r];
      for (double v : intro.tokens.row_span(r)) out << ',' << fmt(v);
      out << '\n';
    }
  }
  {
    std::ofstream out = open_out(dir / "attention.csv");
    out << "row";
    for (const auto& l : intro.attn_rows) out << ',' << l;
    out << '\n';
    for (std::size_t r = 0; r < intro.attention.rows(); ++r) {
      out << intro.attn_rows.at(r);
      for (double v : intro.attention.row_span(r)) out << ',' << fmt(v);
      out << '\n';
    }
  }
}

}  // namespace lassode
