#include "hyp/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>

#include "hyp/errors.hpp"
#include "hyp/optim.hpp"

namespace hyp {

namespace {

constexpr double kCurvatureLrScale = 0.1;

void add_htc(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix, const HtcParams& p) {
  out.emplace_back(prefix + ".weight", p.weight);
  out.emplace_back(prefix + ".bias", p.bias);
}

void add_layernorm(std::vector<std::pair<std::string, Tensor>>& out, const std::string& prefix,
                   const LayerNormFn& fn) {
  out.emplace_back(prefix + ".gain", fn.gain);
  out.emplace_back(prefix + ".bias", fn.bias);
}

bool all_finite(const Tensor& t) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// Records a stage in the trace and optionally checks the constraint.
class Stages {
 public:
  explicit Stages(const ForwardOptions& opt) : opt_(opt) {}

  const LorentzBatch& operator()(const std::string& name, const LorentzBatch& x) const {
    if (opt_.trace != nullptr) opt_.trace->stages.emplace_back(name, x);
    if (opt_.check_constraints) check_on_manifold(x, opt_.constraint_tol, name);
    return x;
  }

 private:
  const ForwardOptions& opt_;
};

LorentzBatch to_curvature(const LorentzBatch& x, const Curvature& k) {
  if (x.curvature.same_parameter(k)) return x;
  return change_curvature(x, k);
}

LorentzBatch encoder_branch(const Hypformer& m, const LorentzBatch& lifted, const ForwardMode& mode,
                            const Stages& stage) {
  LorentzBatch x = stage("input_htc", htc_forward(lifted, *m.input));
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    const EncoderLayer& layer = m.layers[l];
    const std::string p = "layer" + std::to_string(l);
    LorentzBatch pe = stage(p + ".positional", hyp_positional_encoding(x, layer.positional));
    LorentzBatch att = stage(p + ".attention", to_curvature(multi_head(pe, layer.attention), m.kappa_hidden));
    LorentzBatch h = stage(p + ".residual1", hyp_residual(x, att));
    h = stage(p + ".norm1", hyp_layernorm(h, layer.norm1));

    LorentzBatch f = stage(p + ".ffn_in", htc_forward(h, layer.ffn_in));
    HrcSpec act{{ActivationFn{Activation::relu}}, m.kappa_hidden, m.kappa_hidden};
    HrcSpec drop{{DropoutFn{m.config.dropout}}, m.kappa_hidden, m.kappa_hidden};
    f = stage(p + ".ffn_act", hrc_forward(f, compose(drop, act), mode));
    f = stage(p + ".ffn_out", htc_forward(f, layer.ffn_out));
    LorentzBatch y = stage(p + ".residual2", hyp_residual(h, f));
    x = stage(p + ".norm2", hyp_layernorm(y, layer.norm2));
  }
  return stage("encoder_out", to_curvature(x, m.kappa_out));
}

LorentzBatch gnn_branch(const Hypformer& m, const LorentzBatch& lifted,
                        const std::shared_ptr<const SparseMatrix>& adj, const Stages& stage) {
  LorentzBatch x = lifted;
  for (std::size_t l = 0; l < m.gnn->layers.size(); ++l) {
    const std::string p = "gnn" + std::to_string(l);
    x = stage(p + ".aggregate", lorentz_normalize(spmm(adj, x.data), x.curvature));
    x = stage(p + ".htc", htc_forward(x, m.gnn->layers[l]));
    x = stage(p + ".act", hyp_activation(x, Activation::relu));
  }
  return x;
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> Hypformer::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, k] : curvatures()) out.emplace_back(name + ".raw", k.raw());
  if (input) add_htc(out, "input", *input);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const EncoderLayer& layer = layers[l];
    const std::string p = "layer" + std::to_string(l);
    add_htc(out, p + ".positional", layer.positional.htc);
    for (std::size_t h = 0; h < layer.attention.heads.size(); ++h) {
      const AttentionParams& a = layer.attention.heads[h];
      const std::string hp = p + ".head" + std::to_string(h);
      add_htc(out, hp + ".query", a.query);
      add_htc(out, hp + ".key", a.key);
      add_htc(out, hp + ".value", a.value);
      out.emplace_back(hp + ".psi", a.psi);
      out.emplace_back(hp + ".focus_log_scale", a.focus.log_scale);
    }
    if (layer.attention.combine) add_htc(out, p + ".combine", *layer.attention.combine);
    add_layernorm(out, p + ".norm1", layer.norm1);
    add_htc(out, p + ".ffn_in", layer.ffn_in);
    add_htc(out, p + ".ffn_out", layer.ffn_out);
    add_layernorm(out, p + ".norm2", layer.norm2);
  }
  if (gnn) {
    for (std::size_t l = 0; l < gnn->layers.size(); ++l) add_htc(out, "gnn" + std::to_string(l), gnn->layers[l]);
  }
  out.emplace_back("fusion_logits", fusion_logits);
  out.emplace_back("decoder.weight", decoder_weight);
  out.emplace_back("decoder.bias", decoder_bias);
  return out;
}

std::vector<std::pair<std::string, Curvature>> Hypformer::curvatures() const {
  std::vector<std::pair<std::string, Curvature>> out{
      {"kappa_in", kappa_in}, {"kappa_hidden", kappa_hidden}, {"kappa_out", kappa_out}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    out.emplace_back("layer" + std::to_string(l) + ".kappa_attn", layers[l].attention_curvature);
  }
  return out;
}

Hypformer make_hypformer(const HypformerConfig& config, Rng& rng) {
  validate(config);
  if (config.d_in < 1 || config.d_out < 1) throw ConfigError("make_hypformer: d_in and d_out must be resolved");
  const bool trainable = config.curvature_trainable;
  const std::size_t dh = config.d_hidden;

  Hypformer m;
  m.config = config;
  m.kappa_in = Curvature::from_magnitude(config.kappa_in, trainable);
  m.kappa_hidden = Curvature::from_magnitude(config.kappa_hidden, trainable);
  m.kappa_out = Curvature::from_magnitude(config.kappa_out, trainable);

  if (config.use_transformer) {
    m.input = make_htc(config.d_in, dh, m.kappa_in, m.kappa_hidden, rng);
    for (std::size_t l = 0; l < config.layers; ++l) {
      EncoderLayer layer;
      layer.positional = make_positional(dh, m.kappa_hidden, rng);
      layer.attention_curvature = Curvature::from_magnitude(config.kappa_hidden, trainable);
      layer.attention = make_multi_head(config.heads, dh, dh, m.kappa_hidden, layer.attention_curvature,
                                        m.kappa_hidden, config.attention, config.p, rng);
      layer.norm1 = make_layernorm(dh);
      layer.ffn_in = make_htc(dh, dh, m.kappa_hidden, m.kappa_hidden, rng);
      layer.ffn_out = make_htc(dh, dh, m.kappa_hidden, m.kappa_hidden, rng);
      layer.norm2 = make_layernorm(dh);
      m.layers.push_back(std::move(layer));
    }
  }
  if (config.use_gnn) {
    GnnBranch g;
    for (std::size_t l = 0; l < config.gnn_layers; ++l) {
      const bool first = l == 0;
      const bool last = l + 1 == config.gnn_layers;
      g.layers.push_back(make_htc(first ? config.d_in : dh, dh, first ? m.kappa_in : m.kappa_hidden,
                                  last ? m.kappa_out : m.kappa_hidden, rng));
    }
    m.gnn = std::move(g);
  }

  m.fusion_logits = Tensor::zeros(1, 2);
  m.fusion_logits.set_requires_grad(true);
  const double bound = 1.0 / std::sqrt(static_cast<double>(dh));
  std::uniform_real_distribution<double> u(-bound, bound);
  m.decoder_weight = Tensor::zeros(dh, config.d_out);
  for (double& w : m.decoder_weight.mutable_values()) w = u(rng);
  m.decoder_weight.set_requires_grad(true);
  m.decoder_bias = Tensor::zeros(1, config.d_out);
  m.decoder_bias.set_requires_grad(true);
  return m;
}

HypformerConfig resolve_config(HypformerConfig config, const GraphDataset& dataset) {
  const std::size_t d_in = dataset.features.cols;
  const std::size_t d_out = dataset.num_classes;
  if (config.d_in == 0) config.d_in = d_in;
  if (config.d_out == 0) config.d_out = d_out;
  if (config.d_in != d_in) {
    throw DataError(DataErrc::shape_mismatch, "model expects d_in=" + std::to_string(config.d_in) +
                                                  " but the dataset has " + std::to_string(d_in) + " features");
  }
  if (config.d_out < d_out) {
    throw DataError(DataErrc::shape_mismatch, "model has " + std::to_string(config.d_out) +
                                                  " outputs but the dataset has " + std::to_string(d_out) +
                                                  " classes");
  }
  return config;
}

std::shared_ptr<const SparseMatrix> normalized_adjacency(std::size_t n, std::span<const Edge> edges) {
  std::vector<std::set<std::size_t>> nbrs(n);
  for (const auto& [s, t] : edges) {
    if (s >= n || t >= n) {
      throw DataError(DataErrc::index_out_of_range,
                      "edge (" + std::to_string(s) + "," + std::to_string(t) + ") references a missing node");
    }
    nbrs[s].insert(t);
    nbrs[t].insert(s);
  }
  for (std::size_t i = 0; i < n; ++i) nbrs[i].insert(i);

  auto a = std::make_shared<SparseMatrix>();
  a->rows = n;
  a->cols = n;
  a->row_ptr.push_back(0);
  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(nbrs[i].size()));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : nbrs[i]) {
      a->col_idx.push_back(j);
      a->weights.push_back(inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
    a->row_ptr.push_back(a->col_idx.size());
  }
  return a;
}

Tensor forward(const Hypformer& m, const Tensor& features, const std::shared_ptr<const SparseMatrix>& adjacency,
               const ForwardOptions& options) {
  if (features.cols() != m.config.d_in) {
    throw ShapeError("forward: expected " + std::to_string(m.config.d_in) + " input features, got " +
                     std::to_string(features.cols()));
  }
  if (m.gnn && adjacency == nullptr) throw std::invalid_argument("forward: the graph branch needs an adjacency");
  if (m.gnn && adjacency->rows != features.rows()) throw ShapeError("forward: adjacency size mismatch");

  Stages stage(options);
  LorentzBatch lifted = stage("lift", lift_euclidean(features, m.kappa_in));

  std::optional<LorentzBatch> enc;
  std::optional<LorentzBatch> graph;
  if (m.input) enc = encoder_branch(m, lifted, options.mode, stage);
  if (m.gnn) graph = gnn_branch(m, lifted, adjacency, stage);

  LorentzBatch fused;
  if (enc && graph) {
    Tensor w = softmax_rows(m.fusion_logits);
    Tensor sum = add(mul(enc->data, slice_cols(w, 0, 1)), mul(graph->data, slice_cols(w, 1, 2)));
    fused = stage("fusion", lorentz_normalize(sum, m.kappa_out));
  } else {
    fused = enc ? *enc : *graph;
  }
  return add(matmul(fused.space(), m.decoder_weight), m.decoder_bias);
}

Tensor loss(const Tensor& logits, std::span<const std::int64_t> labels, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("loss: empty row mask");
  return cross_entropy(logits, labels, rows);
}

namespace {

std::size_t argmax_row(const Tensor& logits, std::size_t r) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < logits.cols(); ++c) {
    if (logits(r, c) > logits(r, best)) best = c;
  }
  return best;
}

}  // namespace

double accuracy(const Tensor& logits, std::span<const std::int64_t> labels, std::span<const std::size_t> rows) {
  if (rows.empty()) throw std::invalid_argument("accuracy: empty row mask");
  std::size_t hits = 0;
  for (std::size_t r : rows) hits += static_cast<std::int64_t>(argmax_row(logits, r)) == labels[r] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(rows.size());
}

double binary_f1(const Tensor& logits, std::span<const std::int64_t> labels, std::span<const std::size_t> rows) {
  if (logits.cols() > 2) throw std::invalid_argument("binary_f1: needs at most two classes");
  for (std::size_t r : rows) {
    if (labels[r] > 1) throw std::invalid_argument("binary_f1: label outside {0, 1}");
  }
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t r : rows) {
    const bool pred = argmax_row(logits, r) == 1;
    const bool truth = labels[r] == 1;
    tp += pred && truth;
    fp += pred && !truth;
    fn += !pred && truth;
  }
  if (tp + fp + fn == 0) return 1.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

double metric_value(Metric metric, const Tensor& logits, std::span<const std::int64_t> labels,
                    std::span<const std::size_t> rows) {
  return metric == Metric::accuracy ? accuracy(logits, labels, rows) : binary_f1(logits, labels, rows);
}

const char* to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "unknown";
}

std::span<const std::size_t> split_rows(const GraphDataset& d, Split split) {
  switch (split) {
    case Split::train: return d.splits.train;
    case Split::val: return d.splits.val;
    case Split::test: return d.splits.test;
  }
  return {};
}

PreparedData prepare(const Hypformer& model, const GraphDataset& dataset) {
  if (dataset.features.cols != model.config.d_in) {
    throw DataError(DataErrc::shape_mismatch, "model expects d_in=" + std::to_string(model.config.d_in) +
                                                  " but the dataset has " + std::to_string(dataset.features.cols) +
                                                  " features");
  }
  if (dataset.num_classes > model.config.d_out) {
    throw DataError(DataErrc::shape_mismatch, "dataset has more classes than the model outputs");
  }
  PreparedData p;
  p.features = Tensor::from(dataset.features.rows, dataset.features.cols, std::span<const double>(dataset.features.values));
  if (model.gnn) {
    std::vector<Edge> edges = dataset.edges;
    if (model.config.knn_k > 0) {
      auto knn = knn_graph(dataset.features, model.config.knn_k);
      edges.insert(edges.end(), knn.begin(), knn.end());
    }
    p.adjacency = normalized_adjacency(dataset.num_nodes(), edges);
  }
  return p;
}

double evaluate(const Hypformer& model, const GraphDataset& dataset, Split split) {
  const PreparedData p = prepare(model, dataset);
  NoGradScope no_grad;
  const Tensor logits = forward(model, p.features, p.adjacency);
  return metric_value(model.config.eval_metric, logits, dataset.labels, split_rows(dataset, split));
}

namespace {

std::string first_non_finite_stage(const Hypformer& model, const PreparedData& p) {
  ForwardTrace trace;
  ForwardOptions opt;
  opt.trace = &trace;
  NoGradScope no_grad;
  try {
    forward(model, p.features, p.adjacency, opt);
  } catch (const std::exception&) {
  }
  for (const auto& [name, batch] : trace.stages) {
    if (!all_finite(batch.data)) return name;
  }
  return "decoder";
}

std::vector<std::vector<double>> snapshot(const Hypformer& model) {
  std::vector<std::vector<double>> out;
  for (const auto& [_, t] : model.named_parameters()) out.emplace_back(t.values().begin(), t.values().end());
  return out;
}

void restore(Hypformer& model, const std::vector<std::vector<double>>& values) {
  auto params = model.named_parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto dst = params[i].second.mutable_values();
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

}  // namespace

TrainResult train(Hypformer& model, const GraphDataset& dataset, const TrainOptions& options) {
  const HypformerConfig& cfg = model.config;
  const PreparedData p = prepare(model, dataset);
  const auto train_rows = split_rows(dataset, Split::train);
  const auto val_rows = split_rows(dataset, Split::val);
  const auto test_rows = split_rows(dataset, Split::test);
  if (train_rows.empty() || val_rows.empty() || test_rows.empty()) {
    throw DataError(DataErrc::empty_split, "train: every split must be non-empty");
  }

  std::vector<ParamGroup> groups;
  std::set<const TensorData*> curvature_raws;
  for (const auto& [_, k] : model.curvatures()) curvature_raws.insert(k.raw().impl().get());
  for (const auto& [_, t] : model.named_parameters()) {
    const bool is_curvature = curvature_raws.count(t.impl().get()) > 0;
    groups.push_back({t, is_curvature ? kCurvatureLrScale : 1.0, !is_curvature});
  }
  Adam adam(groups, AdamOptions{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});

  // Dropout masks come from a stream derived from the same seed as the weights.
  std::seed_seq seq{cfg.seed, std::uint64_t{0x64726f70}};
  Rng rng(seq);

  TrainResult result;
  std::vector<std::vector<double>> best;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    {
      Tape tape;
      TapeScope scope(tape);
      ForwardOptions opt;
      opt.mode = ForwardMode{true, &rng};
      opt.check_constraints = options.check_constraints;
      const Tensor logits = forward(model, p.features, p.adjacency, opt);
      const Tensor l = loss(logits, dataset.labels, train_rows);
      rec.train_loss = l.item();
      if (!std::isfinite(rec.train_loss)) {
        throw NumericalError("non-finite training loss at epoch " + std::to_string(epoch) +
                             "; first non-finite layer output: " + first_non_finite_stage(model, p));
      }
      adam.zero_grad();
      tape.backward(l);
      adam.step();
    }
    {
      NoGradScope no_grad;
      ForwardOptions opt;
      opt.check_constraints = options.check_constraints;
      const Tensor logits = forward(model, p.features, p.adjacency, opt);
      rec.val_metric = metric_value(cfg.eval_metric, logits, dataset.labels, val_rows);
      rec.test_metric = metric_value(cfg.eval_metric, logits, dataset.labels, test_rows);
    }
    rec.kappa_hidden = model.kappa_hidden.value();
    for (const auto& [name, k] : model.curvatures()) {
      const double v = k.value();
      if (!(v < 0.0) || !std::isfinite(v)) {
        throw NumericalError("curvature " + name + " left the negative reals at epoch " + std::to_string(epoch));
      }
    }
    result.history.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);

    if (epoch == 1 || rec.val_metric > result.best_val) {
      result.best_val = rec.val_metric;
      result.best_epoch = epoch;
      best = snapshot(model);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  restore(model, best);
  return result;
}

const char* to_string(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_graph: return "no_graph";
    case Variant::no_transformer: return "no_transformer";
  }
  return "unknown";
}

HypformerConfig ablate(HypformerConfig config, Variant variant) {
  if (variant == Variant::no_graph) config.use_gnn = false;
  if (variant == Variant::no_transformer) config.use_transformer = false;
  return config;
}

TrainResult run_variant(const HypformerConfig& config, const GraphDataset& dataset, Variant variant) {
  const HypformerConfig cfg = resolve_config(ablate(config, variant), dataset);
  Rng rng(cfg.seed);
  Hypformer model = make_hypformer(cfg, rng);
  return train(model, dataset, {});
}

}  // namespace hyp
