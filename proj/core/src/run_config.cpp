#include "lassode/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lassode/errors.hpp"

namespace lassode {

namespace {

using json = nlohmann::ordered_json;

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  return out;
}

// Accepts JSON, otherwise a bare string or a comma-separated list.
json parse_loose(const std::string& text, bool is_list) {
  json j = json::parse(text, nullptr, false);
  if (!j.is_discarded()) {
    if (is_list && !j.is_array()) return json::array({j});
    return j;
  }
  if (!is_list) return json(text);
  json arr = json::array();
  for (const auto& part : split_commas(text)) {
    json e = json::parse(part, nullptr, false);
    arr.push_back(e.is_discarded() ? json(part) : e);
  }
  return arr;
}

template <class T>
struct IsVector : std::false_type {};
template <class T>
struct IsVector<std::vector<T>> : std::true_type {};

template <class T, class Access>
ConfigKey field(std::string name, std::string help, Access access) {
  ConfigKey k;
  k.name = name;
  k.help = std::move(help);
  k.get = [access](const RunConfig& rc) {
    return json(access(const_cast<RunConfig&>(rc))).dump();
  };
  k.set = [access, name](RunConfig& rc, const std::string& text) {
    const json j = parse_loose(text, IsVector<T>::value);
    try {
      access(rc) = j.get<T>();
    } catch (const json::exception&) {
      throw ConfigError("'" + name + "': cannot read " + j.dump() + " as the expected type");
    }
  };
  return k;
}

#define KEY(T, name, help, expr) field<T>(name, help, [](RunConfig& r) -> T& { return expr; })

std::vector<ConfigKey> build_keys() {
  using S = std::size_t;
  using D = double;
  std::vector<ConfigKey> k{
      // model
      KEY(S, "d_model", "token embedding width", r.model.d_model),
      KEY(S, "n_heads", "attention heads", r.model.n_heads),
      KEY(S, "n_layers", "transformer depth L", r.model.n_layers),
      KEY(S, "n_experts", "experts per MoE layer", r.model.n_experts),
      KEY(S, "top_k", "experts activated per token", r.model.top_k),
      KEY(S, "expert_hidden", "hidden width of each expert", r.model.expert_hidden),
      KEY(S, "gru_hidden", "GRU hidden width", r.model.gru_hidden),
      KEY(S, "gru_layers", "GRU layers", r.model.gru_layers),
      KEY(S, "mod_hidden", "hidden width of the modulation MLPs", r.model.mod_hidden),
      KEY(S, "posterior_hidden", "hidden width of the z0 mean/variance MLPs", r.model.posterior_hidden),
      KEY(S, "param_hidden", "hidden width of the field-parameter MLP", r.model.param_hidden),
      KEY(S, "d_z", "latent dimension", r.model.d_z),
      KEY(D, "coeff_scale", "multiplier on the field-parameter MLP output", r.model.coeff_scale),
      KEY(S, "k_token", "tokens per trajectory", r.model.k_token),
      KEY(S, "k_csh", "hub tokens", r.model.k_csh),
      KEY(S, "k_rbf", "RBF kernels", r.model.k_rbf),
      KEY(D, "rbf_sigma", "RBF kernel width", r.model.rbf_sigma),
      KEY(S, "d_x_max", "maximum channels per system", r.model.d_x_max),
      KEY(bool, "ln_affine", "learnable gain/bias on the RBF layer norm", r.model.ln_affine),
      KEY(bool, "per_layer_csh", "separate hub per layer", r.model.per_layer_csh),
      KEY(S, "mlp_field_hidden", "hidden width of the MLP latent field (ablation)", r.model.mlp_field_hidden),
      KEY(S, "mlp_field_layers", "linear layers of the MLP latent field (ablation)", r.model.mlp_field_layers),
      // training
      KEY(D, "lr", "AdamW learning rate", r.train.optim.lr),
      KEY(D, "beta1", "AdamW beta1", r.train.optim.beta1),
      KEY(D, "beta2", "AdamW beta2", r.train.optim.beta2),
      KEY(D, "weight_decay", "AdamW decoupled weight decay", r.train.optim.weight_decay),
      KEY(D, "adam_eps", "AdamW epsilon", r.train.optim.eps),
      KEY(S, "batch_size", "trajectories per step", r.train.batch_size),
      KEY(S, "epochs", "training epochs", r.train.epochs),
      KEY(S, "max_steps", "step cap, 0 for none", r.train.max_steps),
      KEY(D, "kl_weight", "weight of the KL term", r.train.kl_weight),
      KEY(std::vector<D>, "prefix_ratios", "prefix ratios sampled during training", r.train.prefix_ratios),
      KEY(D, "grad_clip", "global gradient-norm clip, 0 disables", r.train.grad_clip),
      KEY(S, "n_step", "RK4 substeps per token, 0 aligns with observations", r.train.n_step),
      KEY(std::uint64_t, "seed", "seed for data, initialization and training", r.train.seed),
      KEY(S, "workers", "worker threads", r.train.workers),
      // paths
      KEY(std::string, "data", "training dataset directory", r.data),
      KEY(std::string, "test", "evaluation dataset directory", r.test),
      KEY(std::string, "out", "output directory", r.out),
      KEY(std::string, "checkpoint", "checkpoint file", r.checkpoint),
      // generate
      KEY(std::vector<std::string>, "systems", "systems to simulate", r.systems),
      KEY(S, "per_system", "trajectories per system", r.per_system),
      // eval
      KEY(std::vector<D>, "eval_ratios", "prefix ratios scored by eval", r.eval_ratios),
      KEY(bool, "svg", "write SVG plots", r.svg),
      KEY(S, "plots", "trajectories plotted per system", r.plots),
      // finetune
      KEY(S, "lora_rank", "LoRA rank r", r.lora_rank),
      KEY(D, "lora_alpha", "LoRA alpha", r.lora_alpha),
      KEY(D, "finetune_lr", "fine-tuning learning rate", r.finetune_lr),
      KEY(S, "finetune_epochs", "fine-tuning epochs", r.finetune_epochs),
      // bench
      KEY(std::vector<S>, "bench_d_z", "latent sizes timed by bench", r.bench_d_z),
      KEY(std::vector<S>, "bench_d_model", "embedding widths timed by bench", r.bench_d_model),
      KEY(std::vector<S>, "bench_n_step", "substep counts timed by bench", r.bench_n_step),
      KEY(S, "bench_k_width", "hidden width of both benchmarked MLPs", r.bench_k_width),
      KEY(S, "bench_layers", "layers of both benchmarked MLPs", r.bench_layers),
      KEY(S, "bench_k_token", "tokens per benchmarked trajectory", r.bench_k_token),
      KEY(S, "bench_repeats", "timed repeats per cell", r.bench_repeats),
      // ablate
      KEY(std::vector<std::string>, "variants", "ablation toggles to compare, empty for all", r.variants),
      KEY(D, "ablation_ratio", "prefix ratio scored by ablate", r.ablation_ratio),
      // introspect
      KEY(S, "sample", "trajectories exported by introspect", r.sample),
  };

  ConfigKey abl;
  abl.name = "ablation";
  abl.help = "architecture toggles of the trained model";
  abl.get = [](const RunConfig& rc) { return json(rc.model.ablation.enabled()).dump(); };
  abl.set = [](RunConfig& rc, const std::string& text) {
    const json j = parse_loose(text, true);
    AblationToggles t;
    for (const auto& e : j) {
      if (!e.is_string()) throw ConfigError("'ablation': entries must be toggle names");
      try {
        t.set(e.get<std::string>());
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(std::string("'ablation': ") + ex.what());
      }
    }
    rc.model.ablation = t;
  };
  k.push_back(abl);
  return k;
}

#undef KEY

std::size_t line_of(const std::string& text, std::size_t pos) {
  std::size_t line = 1;
  for (std::size_t i = 0; i < pos && i < text.size(); ++i) line += text[i] == '\n';
  return line;
}

std::size_t key_line(const std::string& text, const std::string& key) {
  const std::size_t pos = text.find("\"" + key + "\"");
  return pos == std::string::npos ? 0 : line_of(text, pos);
}

const ConfigKey* find_key(const std::string& name) {
  for (const auto& k : run_config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

}  // namespace

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig rc;
  rc.preset = name;
  if (name == "desk") {
    rc.model = ModelConfig::desk();
    rc.train.epochs = 200;
  } else if (name == "full") {
    rc.model = ModelConfig::full();
    rc.train.epochs = 1500;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected desk or full)");
  }
  return rc;
}

const std::vector<ConfigKey>& run_config_keys() {
  static const std::vector<ConfigKey> keys = build_keys();
  return keys;
}

void set_config_value(RunConfig& rc, const std::string& key, const std::string& text) {
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError("unknown key '" + key + "'");
  try {
    k->set(rc, text);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("'" + key + "': " + e.what());
  }
}

void apply_config_json(RunConfig& rc, const std::string& text, const std::string& source) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ":" + std::to_string(line_of(text, e.byte)) + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(source + ":1: expected a JSON object of keys");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it.key() == "preset") continue;
    const std::string where = source + ":" + std::to_string(key_line(text, it.key()));
    if (!find_key(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
    try {
      set_config_value(rc, it.key(), it.value().dump());
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

RunConfig resolve_run_config(const std::optional<std::string>& preset_flag,
                             const std::optional<std::string>& config_file,
                             const std::map<std::string, std::string>& flags) {
  std::string text;
  json file_obj;
  if (config_file) {
    std::ifstream in(*config_file, std::ios::binary);
    if (!in) throw ConfigError("cannot read config file '" + *config_file + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
    file_obj = json::parse(text, nullptr, false);
  }

  std::string preset = "desk";
  if (preset_flag) {
    preset = *preset_flag;
  } else if (file_obj.is_object() && file_obj.contains("preset")) {
    if (!file_obj["preset"].is_string()) {
      throw ConfigError(*config_file + ":" + std::to_string(key_line(text, "preset")) +
                        ": 'preset' must be a string");
    }
    preset = file_obj["preset"].get<std::string>();
  }
  RunConfig rc = RunConfig::from_preset(preset);
  if (config_file) apply_config_json(rc, text, *config_file);
  for (const auto& [key, value] : flags) set_config_value(rc, key, value);

  const bool seed_given =
      flags.count("seed") != 0 || (file_obj.is_object() && file_obj.contains("seed"));
  if (!seed_given) {
    if (const char* env = std::getenv("LASSODE_SEED")) {
      try {
        set_config_value(rc, "seed", env);
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("LASSODE_SEED: ") + e.what());
      }
    }
  }
  rc.model.validate();
  return rc;
}

std::string describe_config_keys() {
  const RunConfig desk = RunConfig::from_preset("desk");
  const RunConfig full = RunConfig::from_preset("full");
  std::ostringstream out;
  out << "Config keys (flag --<key> or JSON file entry):\n";
  for (const auto& k : run_config_keys()) {
    const std::string d = k.get(desk);
    const std::string p = k.get(full);
    out << "  " << k.name << ": " << k.help << " [default " << d;
    if (p != d) out << "; full preset " << p;
    out << "]\n";
  }
  return out.str();
}

}  // namespace lassode
