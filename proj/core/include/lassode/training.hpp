#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lassode/model.hpp"
#include "lassode/optim.hpp"

namespace lassode {

struct TrainConfig {
  AdamWConfig optim;
  std::size_t batch_size = 16;
  std::size_t epochs = 1500;
  std::size_t max_steps = 0;  // 0: no cap beyond epochs
  double kl_weight = 1e-3;
  std::vector<double> prefix_ratios{0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  std::size_t n_step = 0;  // 0 aligns the solver grid with the observations
  std::filesystem::path loss_csv;  // empty: no file
};

struct LossRecord {
  std::size_t step = 0;
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
};

struct TrainResult {
  std::vector<LossRecord> history;
  std::size_t steps = 0;
  std::size_t skipped_batches = 0;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(std::size_t epoch, const TrainResult&)>;

struct ElboTerms {
  ad::Var loss;
  ad::Var recon;
  ad::Var kl;
};

/// recon (mean squared error over all points) + kl_weight * KL.
ElboTerms elbo_loss(const ad::Var& prediction, const Tensor& target, const LatentPosterior& post,
                    double kl_weight);

/// Trains every trainable tensor of `params` on `data`. Each step draws a
/// batch, samples one prefix ratio per trajectory, and applies one AdamW
/// update to the mean batch gradient. Batch items run on `workers` threads
/// and their gradients are summed in item order. A batch whose latent flow
/// diverges is skipped.
TrainResult train(ParamStore& params, const ModelConfig& cfg,
                  const std::vector<NormalizedTrajectory>& data, const TrainConfig& tc,
                  const EpochCallback& on_epoch = {});

/// Every attention projection (w_q, w_k, w_v, w_o) in the store.
std::vector<std::string> attention_weight_paths(const ParamStore& params);

/// Injects LoRA factors `<target>.lora_a` (r x in, Gaussian) and
/// `<target>.lora_b` (out x r, zero) with scale alpha / r, then freezes every
/// non-adapter tensor.
void lora_attach(ParamStore& params, const std::vector<std::string>& targets, std::size_t rank,
                 double alpha, std::uint64_t seed);

/// Trains the adapters of `params` (lr 5e-3 unless overridden in `tc`).
TrainResult finetune(ParamStore& params, const ModelConfig& cfg,
                     const std::vector<NormalizedTrajectory>& data, const TrainConfig& tc,
                     const EpochCallback& on_epoch = {});

/// Defaults used for fine-tuning: lr 5e-3, 30 epochs.
TrainConfig finetune_defaults();

}  // namespace lassode
