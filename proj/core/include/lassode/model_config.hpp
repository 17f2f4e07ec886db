#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace lassode {

/// Architecture variants used by the ablation harness. All false is the
/// full model.
struct AblationToggles {
  bool channel_dependent_encoder = false;  // one GRU over all channels jointly
  bool mlp_tokenizer = false;              // MLP prefix encoder + additive time code
  bool fourier_time = false;               // sin/cos features instead of RBF kernels
  bool rope_time = false;                  // rotary time code instead of modulation
  bool no_channel_encoding = false;
  bool no_csh = false;
  bool single_mlp_ffn = false;  // dense MLP instead of MoE
  bool mlp_ode_field = false;   // conditioned MLP derivative instead of token-wise affine

  static const std::vector<std::string>& names();
  /// Sets the toggle called `name`; throws std::invalid_argument otherwise.
  void set(const std::string& name, bool value = true);
  bool get(const std::string& name) const;
  std::vector<std::string> enabled() const;
  bool any() const { return !enabled().empty(); }
};

struct ModelConfig {
  std::size_t d_model = 256;
  std::size_t n_heads = 8;
  std::size_t n_layers = 6;
  std::size_t n_experts = 8;
  std::size_t top_k = 2;
  std::size_t expert_hidden = 512;
  std::size_t gru_hidden = 256;
  std::size_t gru_layers = 2;
  std::size_t mod_hidden = 512;  // hidden width of the modulation and h-projection MLPs
  std::size_t posterior_hidden = 256;
  std::size_t param_hidden = 256;  // K_width of the parameter decoder
  std::size_t d_z = 15;
  double coeff_scale = 10.0;  // fixed multiplier on the parameter decoder output
  std::size_t k_token = 40;
  std::size_t k_csh = 10;
  std::size_t k_rbf = 64;
  double rbf_sigma = 0.25;
  std::size_t d_x_max = 10;
  bool ln_affine = true;        // learnable gain/bias on the RBF layer norm
  bool per_layer_csh = false;   // one hub per layer instead of one shared hub
  std::size_t mlp_field_hidden = 256;
  std::size_t mlp_field_layers = 2;
  AblationToggles ablation;

  /// Effective hub size after ablations.
  std::size_t csh_rows() const { return ablation.no_csh ? 0 : k_csh; }

  /// Widths from the reference hyperparameter table.
  static ModelConfig full();
  /// Small CPU-friendly preset: d_model=64, L=2, 4 experts (top-2), 20 tokens, d_z=8.
  static ModelConfig desk();

  /// Throws ConfigError on inconsistent settings.
  void validate() const;

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

}  // namespace lassode
