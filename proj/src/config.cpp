#include "hyp/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "hyp/errors.hpp"
#include "json.hpp"

namespace hyp {

using nlohmann::json;

const char* to_string(AttentionKind kind) { return kind == AttentionKind::linear ? "linear" : "softmax"; }
const char* to_string(Metric metric) { return metric == Metric::accuracy ? "accuracy" : "binary_f1"; }

namespace {

AttentionKind parse_attention(const std::string& s) {
  if (s == "linear") return AttentionKind::linear;
  if (s == "softmax") return AttentionKind::softmax;
  throw ConfigError("attention must be 'linear' or 'softmax', got '" + s + "'");
}

Metric parse_metric(const std::string& s) {
  if (s == "accuracy") return Metric::accuracy;
  if (s == "binary_f1") return Metric::binary_f1;
  throw ConfigError("eval_metric must be 'accuracy' or 'binary_f1', got '" + s + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(std::string(key) + ": expected a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      throw ConfigError(std::string(key) + ": expected a non-negative integer");
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw ConfigError(std::string(key) + ": expected a number");
  } else {
    if (!v.is_string()) throw ConfigError(std::string(key) + ": expected a string");
  }
  out = v.get<T>();
}

const char* const kKeys[] = {"d_in",       "d_hidden",     "d_out",         "layers",
                             "attention",  "heads",        "p",             "dropout",
                             "use_transformer", "use_gnn", "gnn_layers",    "knn_k",
                             "kappa_in",   "kappa_hidden", "kappa_out",     "curvature_trainable",
                             "lr",         "weight_decay", "epochs",        "patience",
                             "seed",       "eval_metric"};

}  // namespace

void validate(const HypformerConfig& c) {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (c.d_hidden < 1) throw ConfigError("d_hidden must be >= 1");
  if (c.heads < 1) throw ConfigError("heads must be >= 1");
  if (!(c.p >= 1.0) || !std::isfinite(c.p)) throw ConfigError("p must be >= 1");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!c.use_transformer && !c.use_gnn) throw ConfigError("at least one of use_transformer and use_gnn must be set");
  if (c.use_gnn && c.gnn_layers < 1) throw ConfigError("gnn_layers must be >= 1 when use_gnn is set");
  if (!positive(c.kappa_in) || !positive(c.kappa_hidden) || !positive(c.kappa_out)) {
    throw ConfigError("curvature magnitudes must be positive and finite");
  }
  if (!(c.lr >= 0.0) || !std::isfinite(c.lr)) throw ConfigError("lr must be >= 0");
  if (!(c.weight_decay >= 0.0) || !std::isfinite(c.weight_decay)) throw ConfigError("weight_decay must be >= 0");
  if (c.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (c.patience < 1) throw ConfigError("patience must be >= 1");
  if (c.d_hidden < 2) throw ConfigError("d_hidden must be >= 2 (layer norm needs two coordinates)");
}

std::string to_json_text(const HypformerConfig& c) {
  json j = json::object();
  j["d_in"] = c.d_in;
  j["d_hidden"] = c.d_hidden;
  j["d_out"] = c.d_out;
  j["layers"] = c.layers;
  j["attention"] = to_string(c.attention);
  j["heads"] = c.heads;
  j["p"] = c.p;
  j["dropout"] = c.dropout;
  j["use_transformer"] = c.use_transformer;
  j["use_gnn"] = c.use_gnn;
  j["gnn_layers"] = c.gnn_layers;
  j["knn_k"] = c.knn_k;
  j["kappa_in"] = c.kappa_in;
  j["kappa_hidden"] = c.kappa_hidden;
  j["kappa_out"] = c.kappa_out;
  j["curvature_trainable"] = c.curvature_trainable;
  j["lr"] = c.lr;
  j["weight_decay"] = c.weight_decay;
  j["epochs"] = c.epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  j["eval_metric"] = to_string(c.eval_metric);
  return j.dump(2);
}

HypformerConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* k : kKeys) known = known || key == k;
    if (!known) throw ConfigError("unknown config key '" + key + "'");
  }
  HypformerConfig c;
  read(j, "d_in", c.d_in);
  read(j, "d_hidden", c.d_hidden);
  read(j, "d_out", c.d_out);
  read(j, "layers", c.layers);
  std::string attention = to_string(c.attention);
  read(j, "attention", attention);
  c.attention = parse_attention(attention);
  read(j, "heads", c.heads);
  read(j, "p", c.p);
  read(j, "dropout", c.dropout);
  read(j, "use_transformer", c.use_transformer);
  read(j, "use_gnn", c.use_gnn);
  read(j, "gnn_layers", c.gnn_layers);
  read(j, "knn_k", c.knn_k);
  read(j, "kappa_in", c.kappa_in);
  read(j, "kappa_hidden", c.kappa_hidden);
  read(j, "kappa_out", c.kappa_out);
  read(j, "curvature_trainable", c.curvature_trainable);
  read(j, "lr", c.lr);
  read(j, "weight_decay", c.weight_decay);
  read(j, "epochs", c.epochs);
  read(j, "patience", c.patience);
  read(j, "seed", c.seed);
  std::string metric = to_string(c.eval_metric);
  read(j, "eval_metric", metric);
  c.eval_metric = parse_metric(metric);
  validate(c);
  return c;
}

HypformerConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

void save_config(const HypformerConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << to_json_text(config) << '\n';
}

}  // namespace hyp
