// lassode: command-line driver for data generation, training, evaluation,
// fine-tuning, benchmarking, ablation and introspection.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "lassode/checkpoint.hpp"
#include "lassode/errors.hpp"
#include "lassode/evaluation.hpp"
#include "lassode/model.hpp"
#include "lassode/ode_library.hpp"
#include "lassode/pipeline.hpp"
#include "lassode/report.hpp"
#include "lassode/run_config.hpp"
#include "lassode/training.hpp"

namespace fs = std::filesystem;
using namespace lassode;

namespace {

fs::path out_path(const RunConfig& rc, const std::string& name) { return fs::path(rc.out) / name; }

std::string checkpoint_or(const RunConfig& rc, const std::string& fallback) {
  return rc.checkpoint.empty() ? out_path(rc, fallback).string() : rc.checkpoint;
}

std::vector<NormalizedTrajectory> load_normalized(const std::string& dir, const char* what) {
  if (dir.empty()) throw ConfigError(std::string("missing --") + what + " dataset directory");
  const Manifest manifest = read_manifest(dir);
  const std::vector<Trajectory> trajs = read_dataset(dir);
  std::vector<NormalizedTrajectory> out;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    NormalizedTrajectory nt = normalize(trajs[i]);
    nt.id = fs::path(manifest.entries[i].file).stem().string();
    out.push_back(std::move(nt));
  }
  return out;
}

void print_epoch(std::size_t epoch, const TrainResult& r, std::size_t total) {
  if (r.history.empty()) return;
  const std::size_t every = std::max<std::size_t>(1, total / 20);
  if ((epoch + 1) % every != 0 && epoch + 1 != total) return;
  const LossRecord& l = r.history.back();
  std::printf("epoch %zu/%zu step %zu loss %.4e recon %.4e kl %.4f (%.1fs)\n", epoch + 1, total,
              l.step, l.loss, l.recon, l.kl, r.seconds);
  std::fflush(stdout);
}

int cmd_generate(const RunConfig& rc) {
  const auto registry = register_builtin_systems();
  DatasetSpec spec;
  spec.seed = rc.train.seed;
  for (const auto& s : rc.systems) {
    (void)find_system(registry, s);
    SystemSampling ss;
    ss.system = s;
    ss.count = rc.per_system;
    spec.systems.push_back(ss);
  }
  const fs::path dir = rc.data.empty() ? out_path(rc, "data") : fs::path(rc.data);
  const Manifest m = write_dataset(dir, sample_dataset(spec, registry));
  std::printf("wrote %zu trajectories to %s\n", m.entries.size(), dir.string().c_str());
  return 0;
}

int cmd_train(const RunConfig& rc) {
  const auto data = load_normalized(rc.data, "data");
  ParamStore params = init_params(rc.model, rc.train.seed);
  TrainConfig tc = rc.train;
  fs::create_directories(rc.out);
  tc.loss_csv = out_path(rc, "loss.csv");
  std::printf("training %zu parameters on %zu trajectories\n", params.parameter_count(),
              data.size());
  const TrainResult r = train(params, rc.model, data, tc, [&](std::size_t e, const TrainResult& tr) {
    print_epoch(e, tr, tc.epochs);
  });
  const std::string ckpt = checkpoint_or(rc, "model.ckpt");
  save_checkpoint(make_checkpoint(rc.model, params), ckpt);
  std::printf("%zu steps in %.1fs (%zu skipped batches); checkpoint %s\n", r.steps, r.seconds,
              r.skipped_batches, ckpt.c_str());
  return 0;
}

int cmd_eval(const RunConfig& rc) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_or(rc, "model.ckpt"));
  const ModelConfig cfg = checkpoint_config(ckpt);
  const auto data = load_normalized(rc.test.empty() ? rc.data : rc.test, "test");
  const EvalReport rep = evaluate(ckpt.params, cfg, data, rc.eval_ratios, rc.train.workers);
  const EvalReport base = persistence_baseline(data, rc.eval_ratios);
  write_report_csv(out_path(rc, "report.csv"), rep);
  write_report_csv(out_path(rc, "persistence.csv"), base);
  write_report_json(out_path(rc, "report.json"), rep, &base);

  std::map<std::string, std::size_t> plotted;
  const double ratio = rc.eval_ratios[rc.eval_ratios.size() / 2];
  for (const auto& nt : data) {
    if (plotted[nt.system]++ >= rc.plots) continue;
    const std::size_t len = prefix_length(nt.length(), ratio);
    const Tensor pred = predict(ckpt.params, cfg, nt, len);
    write_prediction_csv(out_path(rc, "predictions/" + nt.id + ".csv"), nt.times, pred);
    if (rc.svg) {
      write_trajectory_svg(out_path(rc, "plots/" + nt.id + ".svg"), nt.times, nt.values, pred, len,
                           nt.system + " (" + nt.id + ")");
    }
  }
  std::printf("model\n%s", report_table_csv(rep).c_str());
  std::printf("persistence\n%s", report_table_csv(base).c_str());
  return 0;
}

int cmd_finetune(const RunConfig& rc) {
  if (rc.checkpoint.empty()) throw ConfigError("finetune needs --checkpoint of a trained model");
  Checkpoint ckpt = load_checkpoint(rc.checkpoint);
  const ModelConfig cfg = checkpoint_config(ckpt);
  const auto data = load_normalized(rc.data, "data");
  lora_attach(ckpt.params, attention_weight_paths(ckpt.params), rc.lora_rank, rc.lora_alpha,
              rc.train.seed);
  TrainConfig tc = rc.train;
  tc.optim.lr = rc.finetune_lr;
  tc.epochs = rc.finetune_epochs;
  fs::create_directories(rc.out);
  tc.loss_csv = out_path(rc, "finetune_loss.csv");
  const TrainResult r = finetune(ckpt.params, cfg, data, tc, [&](std::size_t e, const TrainResult& tr) {
    print_epoch(e, tr, tc.epochs);
  });
  const fs::path dst = out_path(rc, "finetuned.ckpt");
  save_checkpoint(ckpt, dst);
  std::printf("%zu adapter steps in %.1fs; checkpoint %s\n", r.steps, r.seconds,
              dst.string().c_str());
  return 0;
}

int cmd_bench(const RunConfig& rc) {
  BenchOptions o;
  o.d_z = rc.bench_d_z;
  o.d_model = rc.bench_d_model;
  o.n_step = rc.bench_n_step;
  o.k_width = rc.bench_k_width;
  o.layers = rc.bench_layers;
  o.k_token = rc.bench_k_token;
  o.repeats = rc.bench_repeats;
  o.seed = rc.train.seed;
  const auto cells = bench_integration(o);
  write_bench_csv(out_path(rc, "bench.csv"), cells);
  std::printf("%5s %7s %6s %12s %12s %12s %9s %9s\n", "d_z", "d_model", "n_step", "f_param[s]",
              "linear[s]", "mlp[s]", "measured", "flops");
  for (const auto& c : cells) {
    std::printf("%5zu %7zu %6zu %12.4e %12.4e %12.4e %8.2fx %8.2fx\n", c.d_z, c.d_model, c.n_step,
                c.param_seconds, c.linear_seconds, c.mlp_seconds, c.measured_ratio(),
                c.cost.ratio());
  }
  return 0;
}

int cmd_ablate(const RunConfig& rc) {
  const auto train_set = load_normalized(rc.data, "data");
  const auto test = load_normalized(rc.test.empty() ? rc.data : rc.test, "test");
  std::vector<AblationVariant> variants{{"baseline", {}}};
  if (rc.variants.empty()) {
    variants = default_ablation_variants();
  } else {
    for (const auto& v : rc.variants) variants.push_back({v, {v}});
  }
  const auto results =
      run_ablation(variants, rc.model, rc.train, train_set, test, rc.train.seed, rc.ablation_ratio);
  write_ablation_csv(out_path(rc, "ablation.csv"), results);
  for (const auto& r : results) {
    std::printf("%-28s mean MSE %.4e  train %.1fs  params %zu\n", r.variant.c_str(), r.mean_mse,
                r.train_seconds, r.parameters);
  }
  return 0;
}

int cmd_introspect(const RunConfig& rc) {
  const Checkpoint ckpt = load_checkpoint(checkpoint_or(rc, "model.ckpt"));
  const ModelConfig cfg = checkpoint_config(ckpt);
  const auto data = load_normalized(rc.test.empty() ? rc.data : rc.test, "test");
  // Round-robin over systems so every system appears in the sample.
  std::map<std::string, std::vector<const NormalizedTrajectory*>> by_system;
  for (const auto& nt : data) by_system[nt.system].push_back(&nt);
  std::vector<NormalizedTrajectory> sample;
  for (std::size_t i = 0; sample.size() < rc.sample; ++i) {
    bool any = false;
    for (auto& [s, members] : by_system) {
      if (i < members.size() && sample.size() < rc.sample) {
        sample.push_back(*members[i]);
        any = true;
      }
    }
    if (!any) break;
  }
  const Introspection intro = introspect(ckpt.params, cfg, sample, rc.ablation_ratio);
  const fs::path dir = out_path(rc, "introspect");
  write_introspection(dir, intro);
  std::printf("wrote %zu hub rows, %zu token rows and a %zux%zu attention map to %s\n",
              intro.csh.rows(), intro.tokens.rows(), intro.attention.rows(),
              intro.attention.cols(), dir.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LASS-ODE: tokenized latent ODE model for families of dynamical systems"};
  app.require_subcommand(1);
  app.footer("Values resolve as flag > --config file > preset default; LASSODE_SEED fills an unset seed.");

  std::optional<std::string> preset;
  std::optional<std::string> config_file;
  app.add_option("--preset", preset, "desk (default) or full");
  app.add_option("--config", config_file, "JSON file of config keys");

  std::map<std::string, std::string> flag_values;
  const RunConfig desk = RunConfig::from_preset("desk");
  const RunConfig full = RunConfig::from_preset("full");
  for (const auto& key : run_config_keys()) {
    std::string help = key.help + " [default " + key.get(desk);
    if (key.get(full) != key.get(desk)) help += "; full " + key.get(full);
    help += "]";
    app.add_option_function<std::string>(
           "--" + key.name,
           [&flag_values, name = key.name](const std::string& v) { flag_values[name] = v; }, help)
        ->type_name("VALUE");
  }

  const std::vector<std::pair<std::string, std::string>> commands{
      {"generate", "simulate a dataset into --data (default <out>/data)"},
      {"train", "train a model on --data; writes a checkpoint and loss.csv"},
      {"eval", "score --checkpoint on --test against the persistence baseline"},
      {"finetune", "attach LoRA adapters to --checkpoint and train them on --data"},
      {"bench", "time the affine and MLP latent fields"},
      {"ablate", "train each architecture variant with a shared seed"},
      {"introspect", "export hub tokens, token embeddings and first-layer attention"}};
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    subs[name]->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    const RunConfig rc = resolve_run_config(preset, config_file, flag_values);
    if (subs["generate"]->parsed()) return cmd_generate(rc);
    if (subs["train"]->parsed()) return cmd_train(rc);
    if (subs["eval"]->parsed()) return cmd_eval(rc);
    if (subs["finetune"]->parsed()) return cmd_finetune(rc);
    if (subs["bench"]->parsed()) return cmd_bench(rc);
    if (subs["ablate"]->parsed()) return cmd_ablate(rc);
    if (subs["introspect"]->parsed()) return cmd_introspect(rc);
  } catch (const std::exception& e) {
    std::cerr << "lassode: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
