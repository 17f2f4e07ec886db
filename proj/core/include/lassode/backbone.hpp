#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lassode/autodiff.hpp"
#include "lassode/model_config.hpp"
#include "lassode/nn.hpp"
#include "lassode/param_store.hpp"

namespace lassode {

/// Routing record of one MoE layer.
struct MoeTrace {
  std::vector<std::vector<std::size_t>> selected;  // per row, expert ids in descending weight
  std::size_t expert_rows = 0;                      // total (row, expert) evaluations
};

/// Optional side outputs of a backbone pass.
struct BackboneTrace {
  bool capture = false;
  std::vector<Tensor> first_layer_heads;  // per head, N x N attention probabilities
  Tensor first_layer_mean;                // head-averaged probabilities
  std::vector<MoeTrace> moe;              // one per layer (empty for the dense variant)
};

/// Projection weight of `path`, including a LoRA update when adapters for
/// that path exist: W + s * A^T B^T with A (r x in), B (out x r), s = alpha/r.
ad::Var lora_weight(ParamScope& scope, const std::string& path);

/// Multi-head scaled dot-product attention without masking. When `probs` is
/// non-null it receives every head's attention matrix.
ad::Var mha(const ad::Var& q, const ad::Var& k, const ad::Var& v, const ad::Var& w_q,
            const ad::Var& w_k, const ad::Var& w_v, const ad::Var& w_o, std::size_t n_heads,
            std::vector<Tensor>* probs = nullptr);

/// Sparse mixture of experts under `<prefix>` (gate + expert{e}), each
/// expert a 2-layer GELU MLP.
ad::Var moe_forward(ParamScope& scope, const std::string& prefix, const ad::Var& x,
                    std::size_t n_experts, std::size_t top_k, MoeTrace* trace = nullptr);

/// One pre-LN block on E0: E1 = E0 + MHA(LN E0), E2 = E1 + FFN(LN E1).
ad::Var block(ParamScope& scope, const ModelConfig& cfg, std::size_t layer, const ad::Var& e0,
              BackboneTrace* trace = nullptr);

/// L blocks; the hub rows are appended before and dropped after every block.
ad::Var stack(ParamScope& scope, const ModelConfig& cfg, const ad::Var& tokens,
              BackboneTrace* trace = nullptr);

std::string csh_path(const ModelConfig& cfg, std::size_t layer);
std::string layer_prefix(std::size_t layer);

void add_backbone_params(ParamStore& store, const ModelConfig& cfg, Rng& rng);

}  // namespace lassode
