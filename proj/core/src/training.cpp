#include "lassode/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <optional>
#include <thread>

#include "lassode/errors.hpp"
#include "lassode/ops.hpp"

namespace lassode {

ElboTerms elbo_loss(const ad::Var& prediction, const Tensor& target, const LatentPosterior& post,
                    double kl_weight) {
  ElboTerms t;
  t.recon = mse_loss(prediction, target);
  t.kl = kl_divergence(post);
  t.loss = ad::add(t.recon, ad::scale(t.kl, kl_weight));
  return t;
}

namespace {

struct ItemJob {
  std::size_t index = 0;
  std::size_t prefix_len = 0;
  Tensor eps;
};

struct ItemResult {
  GradMap grads;
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  bool diverged = false;
  std::string error;
};

ItemResult run_item(const ParamStore& params, const ModelConfig& cfg,
                    const NormalizedTrajectory& nt, const ItemJob& job, const TrainConfig& tc) {
  ItemResult out;
  try {
    ParamScope scope(params, true);
    ForwardOptions opts;
    opts.eps = &job.eps;
    opts.n_step = tc.n_step;
    const ForwardResult fr = forward(scope, cfg, nt.values, nt.times, job.prefix_len, opts);
    const ElboTerms terms = elbo_loss(fr.prediction, nt.values, fr.posterior, tc.kl_weight);
    out.loss = terms.loss.item();
    out.recon = terms.recon.item();
    out.kl = terms.kl.item();
    if (!std::isfinite(out.loss)) {
      out.error = "non-finite loss on trajectory '" + nt.id + "' (" + nt.system + ")";
      return out;
    }
    ad::backward(terms.loss);
    out.grads = scope.gradients();
  } catch (const NonFiniteError& e) {
    out.diverged = true;
    out.error = e.what();
  }
  return out;
}

void append_history(const std::filesystem::path& file, const std::vector<LossRecord>& rows,
                    std::size_t from, bool header) {
  std::ofstream out(file, header ? std::ios::trunc : std::ios::app);
  if (!out) throw LoadError("cannot open loss history '" + file.string() + "'");
  if (header) out << "step,loss,recon,kl\n";
  char buf[160];
  for (std::size_t i = from; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", rows[i].step, rows[i].loss,
                  rows[i].recon, rows[i].kl);
    out << buf;
  }
}

TrainResult run_training(ParamStore& params, const ModelConfig& cfg,
                         const std::vector<NormalizedTrajectory>& data, const TrainConfig& tc,
                         const EpochCallback& on_epoch) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (tc.batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (tc.prefix_ratios.empty()) throw std::invalid_argument("train: no prefix ratios");
  for (const auto& nt : data) {
    if (nt.channels() > cfg.d_x_max) {
      throw std::invalid_argument("train: trajectory '" + nt.id + "' has more channels than d_x_max");
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult result;
  if (!tc.loss_csv.empty()) append_history(tc.loss_csv, result.history, 0, true);

  Rng rng(tc.seed);
  AdamW opt(tc.optim);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_ratio(0, tc.prefix_ratios.size() - 1);
  const std::size_t workers = std::max<std::size_t>(1, tc.workers);

  bool done = tc.max_steps > 0 && result.steps >= tc.max_steps;
  for (std::size_t epoch = 0; epoch < tc.epochs && !done; ++epoch) {
    const std::size_t logged = result.history.size();
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t first = 0; first < order.size() && !done; first += tc.batch_size) {
      const std::size_t last = std::min(order.size(), first + tc.batch_size);
      std::vector<ItemJob> jobs;
      for (std::size_t i = first; i < last; ++i) {
        const NormalizedTrajectory& nt = data[order[i]];
        ItemJob job;
        job.index = order[i];
        job.prefix_len = prefix_length(nt.length(), tc.prefix_ratios[pick_ratio(rng)]);
        job.eps = Tensor(nt.channels(), cfg.d_z);
        for (double& v : job.eps.values()) v = normal(rng);
        jobs.push_back(std::move(job));
      }

      std::vector<ItemResult> results(jobs.size());
      if (workers == 1 || jobs.size() == 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) {
          results[i] = run_item(params, cfg, data[jobs[i].index], jobs[i], tc);
        }
      } else {
        std::vector<std::thread> pool;
        const std::size_t n = std::min(workers, jobs.size());
        for (std::size_t w = 0; w < n; ++w) {
          pool.emplace_back([&, w] {
            for (std::size_t i = w; i < jobs.size(); i += n) {
              results[i] = run_item(params, cfg, data[jobs[i].index], jobs[i], tc);
            }
          });
        }
        for (auto& th : pool) th.join();
      }

      bool diverged = false;
      for (const auto& r : results) {
        if (r.diverged) {
          diverged = true;
          std::fprintf(stderr, "step %zu: skipping batch: %s\n", result.steps + 1, r.error.c_str());
          break;
        }
        if (!r.error.empty()) throw NonFiniteError(r.error);
      }
      if (diverged) {
        ++result.skipped_batches;
        continue;
      }

      GradMap total;
      LossRecord rec;
      for (const auto& r : results) {
        add_into(total, r.grads);
        rec.loss += r.loss;
        rec.recon += r.recon;
        rec.kl += r.kl;
      }
      const double inv = 1.0 / static_cast<double>(results.size());
      scale_grads(total, inv);
      if (tc.grad_clip > 0.0) {
        const double norm = global_norm(total);
        if (norm > tc.grad_clip) scale_grads(total, tc.grad_clip / norm);
      }
      ++result.steps;
      opt.step(params, total, result.steps);
      rec.step = result.steps;
      rec.loss *= inv;
      rec.recon *= inv;
      rec.kl *= inv;
      result.history.push_back(rec);
      done = tc.max_steps > 0 && result.steps >= tc.max_steps;
    }
    if (!tc.loss_csv.empty()) append_history(tc.loss_csv, result.history, logged, false);
    result.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (on_epoch) on_epoch(epoch, result);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

TrainResult train(ParamStore& params, const ModelConfig& cfg,
                  const std::vector<NormalizedTrajectory>& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch) {
  return run_training(params, cfg, data, tc, on_epoch);
}

std::vector<std::string> attention_weight_paths(const ParamStore& params) {
  std::vector<std::string> out;
  for (const auto& p : params.paths()) {
    for (const char* suffix : {".attn.w_q", ".attn.w_k", ".attn.w_v", ".attn.w_o"}) {
      const std::string s(suffix);
      if (p.size() > s.size() && p.compare(p.size() - s.size(), s.size(), s) == 0) out.push_back(p);
    }
  }
  return out;
}

void lora_attach(ParamStore& params, const std::vector<std::string>& targets, std::size_t rank,
                 double alpha, std::uint64_t seed) {
  if (rank == 0) throw std::invalid_argument("lora_attach: rank must be >= 1");
  if (targets.empty()) throw std::invalid_argument("lora_attach: no target paths");
  for (const auto& t : targets) {
    if (!params.contains(t)) throw std::invalid_argument("lora_attach: unknown target '" + t + "'");
    if (params.contains(t + ".lora_a")) {
      throw std::invalid_argument("lora_attach: '" + t + "' already has an adapter");
    }
  }
  Rng rng(seed);
  params.freeze_all();
  const ParamFlags adapter{true, true};
  for (const auto& t : targets) {
    const Tensor& w = params.value(t);
    const std::size_t in = w.rows();
    const std::size_t out = w.cols();
    params.add(t + ".lora_a", normal_tensor(rank, in, 1.0 / std::sqrt(static_cast<double>(in)), rng),
               adapter);
    params.add(t + ".lora_b", Tensor(out, rank), adapter);
    params.add(t + ".lora_scale", Tensor(1, 1, alpha / static_cast<double>(rank)),
               ParamFlags{false, true});
  }
}

TrainConfig finetune_defaults() {
  TrainConfig tc;
  tc.optim.lr = 5e-3;
  tc.epochs = 30;
  return tc;
}

TrainResult finetune(ParamStore& params, const ModelConfig& cfg,
                     const std::vector<NormalizedTrajectory>& data, const TrainConfig& tc,
                     const EpochCallback& on_epoch) {
  bool any = false;
  for (const auto& p : params.paths()) {
    const ParamFlags f = params.flags(p);
    if (f.trainable && !f.lora_adapter) {
      throw std::invalid_argument("finetune: '" + p + "' is trainable but not an adapter");
    }
    any = any || (f.trainable && f.lora_adapter);
  }
  if (!any) throw std::invalid_argument("finetune: no adapters attached");
  return run_training(params, cfg, data, tc, on_epoch);
}

}  // namespace lassode
