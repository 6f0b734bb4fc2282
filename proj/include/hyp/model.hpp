#pragma once

// Hyperbolic transformer encoder for node classification, with an optional
// parallel graph branch.
//
//   encoder: lift -> HTC -> layers x [PE -> attention -> residual -> LN
//                                     -> HTC -> relu, dropout -> HTC -> residual -> LN]
//            -> move to the output curvature
//   graph:   lift -> layers x [neighbour midpoint -> HTC -> relu]
//   fusion:  weighted midpoint of the two branches, weights softmax(logits)
//   decoder: affine map of the fused space-like coordinates

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hyp/attention.hpp"
#include "hyp/config.hpp"
#include "hyp/data.hpp"

namespace hyp {

struct EncoderLayer {
  PositionalParams positional;
  Curvature attention_curvature;  // k2, one per layer
  MultiHeadAttention attention;
  LayerNormFn norm1;
  HtcParams ffn_in;
  HtcParams ffn_out;
  LayerNormFn norm2;
};

struct GnnBranch {
  std::vector<HtcParams> layers;
};

struct Hypformer {
  HypformerConfig config;  // d_in and d_out resolved

  Curvature kappa_in;
  Curvature kappa_hidden;
  Curvature kappa_out;

  std::optional<HtcParams> input;  // present with the transformer branch
  std::vector<EncoderLayer> layers;
  std::optional<GnnBranch> gnn;
  Tensor fusion_logits;  // 1 x 2 (encoder, graph)
  Tensor decoder_weight;  // d_hidden x d_out
  Tensor decoder_bias;    // 1 x d_out

  // Every learnable tensor under a stable, unique name.
  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  // Curvature instances with their names ("kappa_in", "layer0.kappa_attn", ...).
  std::vector<std::pair<std::string, Curvature>> curvatures() const;
};

// Config must have d_in and d_out set. Initialization draws from `rng`.
Hypformer make_hypformer(const HypformerConfig& config, Rng& rng);

// Fills d_in/d_out from the dataset when 0; throws DataError on a mismatch.
HypformerConfig resolve_config(HypformerConfig config, const GraphDataset& dataset);

// D^{-1/2} (A + I) D^{-1/2} of the symmetrized, de-duplicated edge set.
// Throws DataError for node ids >= n.
std::shared_ptr<const SparseMatrix> normalized_adjacency(std::size_t n, std::span<const Edge> edges);

// Named intermediate Lorentz batches of one forward pass.
struct ForwardTrace {
  std::vector<std::pair<std::string, LorentzBatch>> stages;
};

struct ForwardOptions {
  ForwardMode mode;
  ForwardTrace* trace = nullptr;
  // Checks every intermediate batch against the manifold constraint.
  bool check_constraints = false;
  double constraint_tol = kManifoldTol;
};

// Logits N x d_out. `adjacency` is required when the graph branch is enabled.
Tensor forward(const Hypformer& model, const Tensor& features, const std::shared_ptr<const SparseMatrix>& adjacency,
               const ForwardOptions& options = {});

// Mean cross-entropy over the given rows; throws std::invalid_argument when empty.
Tensor loss(const Tensor& logits, std::span<const std::int64_t> labels, std::span<const std::size_t> rows);

// Ties in the argmax go to the lower class index.
double accuracy(const Tensor& logits, std::span<const std::int64_t> labels, std::span<const std::size_t> rows);
// F1 of class 1. Throws std::invalid_argument for more than two classes.
double binary_f1(const Tensor& logits, std::span<const std::int64_t> labels, std::span<const std::size_t> rows);
double metric_value(Metric metric, const Tensor& logits, std::span<const std::int64_t> labels,
                    std::span<const std::size_t> rows);

enum class Split { train, val, test };
const char* to_string(Split split);
std::span<const std::size_t> split_rows(const GraphDataset& dataset, Split split);

// Tensors the model consumes, derived once per dataset.
struct PreparedData {
  Tensor features;
  std::shared_ptr<const SparseMatrix> adjacency;  // null without the graph branch
};

PreparedData prepare(const Hypformer& model, const GraphDataset& dataset);

// Eval-mode metric on one split.
double evaluate(const Hypformer& model, const GraphDataset& dataset, Split split);

struct EpochRecord {
  std::size_t epoch = 0;  // from 1
  double train_loss = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;
  double kappa_hidden = 0.0;  // signed curvature value
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

struct TrainOptions {
  // Called after each epoch, e.g. to stream metrics.
  std::function<void(const EpochRecord&)> on_epoch;
  bool check_constraints = false;
};

// Full-batch Adam with early stopping on the validation metric. On return the
// model holds the parameters of the best validation epoch (first on ties).
// A non-finite loss throws NumericalError naming the epoch and the first
// layer whose output is non-finite.
TrainResult train(Hypformer& model, const GraphDataset& dataset, const TrainOptions& options = {});

enum class Variant { full, no_graph, no_transformer };
const char* to_string(Variant variant);

HypformerConfig ablate(HypformerConfig config, Variant variant);

// Builds, trains and scores one variant with the config's seed.
TrainResult run_variant(const HypformerConfig& config, const GraphDataset& dataset, Variant variant);

}  // namespace hyp
