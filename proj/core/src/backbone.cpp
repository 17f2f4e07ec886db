#include "lassode/backbone.hpp"

#include <cmath>

#include "lassode/ops.hpp"

namespace lassode {

std::string layer_prefix(std::size_t layer) { return "backbone.layer" + std::to_string(layer); }

std::string csh_path(const ModelConfig& cfg, std::size_t layer) {
  return cfg.per_layer_csh ? layer_prefix(layer) + ".csh" : std::string("backbone.csh");
}

ad::Var lora_weight(ParamScope& scope, const std::string& path) {
  const ad::Var w = scope.get(path);
  if (!scope.has(path + ".lora_a")) return w;
  const ad::Var a = scope.get(path + ".lora_a");
  const ad::Var b = scope.get(path + ".lora_b");
  const double s = scope.store().value(path + ".lora_scale")[0];
  return ad::add(w, ad::scale(ad::matmul(ad::transpose(a), ad::transpose(b)), s));
}

ad::Var mha(const ad::Var& q, const ad::Var& k, const ad::Var& v, const ad::Var& w_q,
            const ad::Var& w_k, const ad::Var& w_v, const ad::Var& w_o, std::size_t n_heads,
            std::vector<Tensor>* probs) {
  const std::size_t d = w_q.cols();
  if (n_heads == 0 || d % n_heads != 0) {
    throw ShapeError("mha: width " + std::to_string(d) + " not divisible by " +
                     std::to_string(n_heads) + " heads");
  }
  const std::size_t dk = d / n_heads;
  const ad::Var qp = ad::matmul(q, w_q);
  const ad::Var kp = ad::matmul(k, w_k);
  const ad::Var vp = ad::matmul(v, w_v);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<ad::Var> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const ad::Var qh = ad::slice_cols(qp, h * dk, (h + 1) * dk);
    const ad::Var kh = ad::slice_cols(kp, h * dk, (h + 1) * dk);
    const ad::Var vh = ad::slice_cols(vp, h * dk, (h + 1) * dk);
    const ad::Var p = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv));
    if (probs) probs->push_back(p.value());
    heads.push_back(ad::matmul(p, vh));
  }
  const ad::Var cat = n_heads == 1 ? heads.front() : ad::concat_cols(heads);
  return ad::matmul(cat, w_o);
}

ad::Var moe_forward(ParamScope& scope, const std::string& prefix, const ad::Var& x,
                    std::size_t n_experts, std::size_t top_k, MoeTrace* trace) {
  const ad::Var logits = linear(scope, prefix + ".gate", x);
  const ad::Var weights = ad::topk_softmax(logits, top_k);
  const auto selected = ad::topk_indices(logits.value(), top_k);

  std::vector<std::vector<std::size_t>> routed(n_experts);
  for (std::size_t r = 0; r < selected.size(); ++r)
    for (std::size_t e : selected[r]) routed[e].push_back(r);

  ad::Var out;
  for (std::size_t e = 0; e < n_experts; ++e) {
    const auto& rows = routed[e];
    if (rows.empty()) continue;
    const ad::Var xe = ad::gather_rows(x, rows);
    const ad::Var ye = mlp(scope, prefix + ".expert" + std::to_string(e), xe, 2, Activation::Gelu);
    const ad::Var we = ad::gather_rows(ad::slice_cols(weights, e, e + 1), rows);
    const ad::Var contrib = ad::scatter_rows(ad::mul_col(ye, we), rows, x.rows());
    out = out ? ad::add(out, contrib) : contrib;
  }
  if (trace) {
    trace->selected = selected;
    trace->expert_rows = 0;
    for (const auto& rows : routed) trace->expert_rows += rows.size();
  }
  return out;
}

namespace {

ad::Var layer_norm(ParamScope& scope, const std::string& prefix, const ad::Var& x) {
  return ad::layer_norm_rows(x, scope.get(prefix + ".g"), scope.get(prefix + ".b"));
}

}  // namespace

ad::Var block(ParamScope& scope, const ModelConfig& cfg, std::size_t layer, const ad::Var& e0,
              BackboneTrace* trace) {
  const std::string p = layer_prefix(layer);
  const bool capture = trace && trace->capture && layer == 0;
  std::vector<Tensor> probs;

  const ad::Var n0 = layer_norm(scope, p + ".ln1", e0);
  const ad::Var attn = mha(n0, n0, n0, lora_weight(scope, p + ".attn.w_q"),
                           lora_weight(scope, p + ".attn.w_k"), lora_weight(scope, p + ".attn.w_v"),
                           lora_weight(scope, p + ".attn.w_o"), cfg.n_heads,
                           capture ? &probs : nullptr);
  const ad::Var e1 = ad::add(e0, attn);

  const ad::Var n1 = layer_norm(scope, p + ".ln2", e1);
  ad::Var ffn;
  if (cfg.ablation.single_mlp_ffn) {
    ffn = mlp(scope, p + ".ffn", n1, 2, Activation::Gelu);
  } else {
    MoeTrace mt;
    ffn = moe_forward(scope, p + ".moe", n1, cfg.n_experts, cfg.top_k, trace ? &mt : nullptr);
    if (trace) trace->moe.push_back(std::move(mt));
  }

  if (capture) {
    Tensor mean(probs.front().rows(), probs.front().cols());
    for (const Tensor& h : probs)
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += h[i] / static_cast<double>(probs.size());
    trace->first_layer_heads = std::move(probs);
    trace->first_layer_mean = std::move(mean);
  }
  return ad::add(e1, ffn);
}

ad::Var stack(ParamScope& scope, const ModelConfig& cfg, const ad::Var& tokens,
              BackboneTrace* trace) {
  const std::size_t n = tokens.rows();
  ad::Var e = tokens;
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    if (cfg.csh_rows() == 0) {
      e = block(scope, cfg, l, e, trace);
      continue;
    }
    const ad::Var e0 = ad::concat_rows({e, scope.get(csh_path(cfg, l))});
    e = ad::slice_rows(block(scope, cfg, l, e0, trace), 0, n);
  }
  return e;
}

void add_backbone_params(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t d = cfg.d_model;
  if (cfg.csh_rows() > 0) {
    const std::size_t banks = cfg.per_layer_csh ? cfg.n_layers : 1;
    for (std::size_t l = 0; l < banks; ++l) {
      store.add(csh_path(cfg, l), normal_tensor(cfg.csh_rows(), d, 1.0, rng));
    }
  }
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* ln : {".ln1", ".ln2"}) {
      store.add(p + ln + ".g", Tensor(1, d, 1.0));
      store.add(p + ln + ".b", Tensor(1, d));
    }
    for (const char* w : {".attn.w_q", ".attn.w_k", ".attn.w_v", ".attn.w_o"}) {
      store.add(p + w, xavier_uniform(d, d, rng));
    }
    if (cfg.ablation.single_mlp_ffn) {
      add_mlp(store, p + ".ffn", {d, cfg.expert_hidden, d}, rng);
    } else {
      add_linear(store, p + ".moe.gate", d, cfg.n_experts, rng);
      for (std::size_t e = 0; e < cfg.n_experts; ++e) {
        add_mlp(store, p + ".moe.expert" + std::to_string(e), {d, cfg.expert_hidden, d}, rng);
      }
    }
  }
}

}  // namespace lassode
