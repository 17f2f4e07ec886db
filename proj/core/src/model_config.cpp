#include "lassode/model_config.hpp"

#include <algorithm>
#include <json.hpp>
#include <stdexcept>

#include "lassode/errors.hpp"

namespace lassode {

using json = nlohmann::json;

const std::vector<std::string>& AblationToggles::names() {
  static const std::vector<std::string> kNames{
      "channel_dependent_encoder", "mlp_tokenizer",  "fourier_time",   "rope_time",
      "no_channel_encoding",       "no_csh",         "single_mlp_ffn", "mlp_ode_field"};
  return kNames;
}

namespace {

bool* toggle_slot(AblationToggles& t, const std::string& name) {
  if (name == "channel_dependent_encoder") return &t.channel_dependent_encoder;
  if (name == "mlp_tokenizer") return &t.mlp_tokenizer;
  if (name == "fourier_time") return &t.fourier_time;
  if (name == "rope_time") return &t.rope_time;
  if (name == "no_channel_encoding") return &t.no_channel_encoding;
  if (name == "no_csh") return &t.no_csh;
  if (name == "single_mlp_ffn") return &t.single_mlp_ffn;
  if (name == "mlp_ode_field") return &t.mlp_ode_field;
  return nullptr;
}

}  // namespace

void AblationToggles::set(const std::string& name, bool value) {
  bool* slot = toggle_slot(*this, name);
  if (!slot) throw std::invalid_argument("unknown ablation toggle '" + name + "'");
  *slot = value;
}

bool AblationToggles::get(const std::string& name) const {
  bool* slot = toggle_slot(const_cast<AblationToggles&>(*this), name);
  if (!slot) throw std::invalid_argument("unknown ablation toggle '" + name + "'");
  return *slot;
}

std::vector<std::string> AblationToggles::enabled() const {
  std::vector<std::string> out;
  for (const auto& n : names())
    if (get(n)) out.push_back(n);
  return out;
}

ModelConfig ModelConfig::full() { return ModelConfig{}; }

ModelConfig ModelConfig::desk() {
  ModelConfig c;
  c.d_model = 64;
  c.n_heads = 4;
  c.n_layers = 2;
  c.n_experts = 4;
  c.top_k = 2;
  c.expert_hidden = 128;
  c.gru_hidden = 64;
  c.mod_hidden = 128;
  c.posterior_hidden = 64;
  c.param_hidden = 64;
  c.d_z = 8;
  c.k_token = 20;
  c.k_csh = 10;
  c.k_rbf = 64;
  c.mlp_field_hidden = 64;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("model config: " + m); };
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    fail("d_model must be a positive multiple of n_heads");
  }
  if (n_layers == 0) fail("n_layers must be >= 1");
  if (n_experts == 0 || top_k == 0 || top_k > n_experts) fail("top_k must lie in [1, n_experts]");
  if (gru_layers == 0 || gru_hidden == 0) fail("GRU needs at least one layer and unit");
  if (d_z == 0 || k_token == 0 || k_rbf == 0) fail("d_z, k_token and k_rbf must be positive");
  if (!(rbf_sigma > 0.0)) fail("rbf_sigma must be positive");
  if (!(coeff_scale > 0.0)) fail("coeff_scale must be positive");
  if (d_x_max == 0) fail("d_x_max must be positive");
  if (mlp_field_layers == 0) fail("mlp_field_layers must be >= 1");
  if (ablation.fourier_time && ablation.rope_time) fail("fourier_time and rope_time are exclusive");
  if (ablation.fourier_time && k_rbf % 2 != 0) fail("fourier_time needs an even k_rbf");
  if (ablation.rope_time && d_model % 2 != 0) fail("rope_time needs an even d_model");
}

std::string ModelConfig::to_json() const {
  json j = {{"d_model", d_model},
            {"n_heads", n_heads},
            {"n_layers", n_layers},
            {"n_experts", n_experts},
            {"top_k", top_k},
            {"expert_hidden", expert_hidden},
            {"gru_hidden", gru_hidden},
            {"gru_layers", gru_layers},
            {"mod_hidden", mod_hidden},
            {"posterior_hidden", posterior_hidden},
            {"param_hidden", param_hidden},
            {"d_z", d_z},
            {"coeff_scale", coeff_scale},
            {"k_token", k_token},
            {"k_csh", k_csh},
            {"k_rbf", k_rbf},
            {"rbf_sigma", rbf_sigma},
            {"d_x_max", d_x_max},
            {"ln_affine", ln_affine},
            {"per_layer_csh", per_layer_csh},
            {"mlp_field_hidden", mlp_field_hidden},
            {"mlp_field_layers", mlp_field_layers},
            {"ablation", ablation.enabled()}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  ModelConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    const json& v = it.value();
    try {
      if (k == "d_model") c.d_model = v.get<std::size_t>();
      else if (k == "n_heads") c.n_heads = v.get<std::size_t>();
      else if (k == "n_layers") c.n_layers = v.get<std::size_t>();
      else if (k == "n_experts") c.n_experts = v.get<std::size_t>();
      else if (k == "top_k") c.top_k = v.get<std::size_t>();
      else if (k == "expert_hidden") c.expert_hidden = v.get<std::size_t>();
      else if (k == "gru_hidden") c.gru_hidden = v.get<std::size_t>();
      else if (k == "gru_layers") c.gru_layers = v.get<std::size_t>();
      else if (k == "mod_hidden") c.mod_hidden = v.get<std::size_t>();
      else if (k == "posterior_hidden") c.posterior_hidden = v.get<std::size_t>();
      else if (k == "param_hidden") c.param_hidden = v.get<std::size_t>();
      else if (k == "d_z") c.d_z = v.get<std::size_t>();
      else if (k == "coeff_scale") c.coeff_scale = v.get<double>();
      else if (k == "k_token") c.k_token = v.get<std::size_t>();
      else if (k == "k_csh") c.k_csh = v.get<std::size_t>();
      else if (k == "k_rbf") c.k_rbf = v.get<std::size_t>();
      else if (k == "rbf_sigma") c.rbf_sigma = v.get<double>();
      else if (k == "d_x_max") c.d_x_max = v.get<std::size_t>();
      else if (k == "ln_affine") c.ln_affine = v.get<bool>();
      else if (k == "per_layer_csh") c.per_layer_csh = v.get<bool>();
      else if (k == "mlp_field_hidden") c.mlp_field_hidden = v.get<std::size_t>();
      else if (k == "mlp_field_layers") c.mlp_field_layers = v.get<std::size_t>();
      else if (k == "ablation") {
        for (const auto& name : v) c.ablation.set(name.get<std::string>());
      } else {
        throw ConfigError("model config: unknown key '" + k + "'");
      }
    } catch (const json::exception& e) {
      throw ConfigError("model config: bad value for '" + k + "': " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("model config: ") + e.what());
    }
  }
  c.validate();
  return c;
}

}  // namespace lassode
