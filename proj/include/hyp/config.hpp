#pragma once

// Hyperparameters of the encoder and its training loop. Stored on disk as a
// flat JSON object whose keys are the field names below.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "hyp/attention.hpp"

namespace hyp {

enum class Metric { accuracy, binary_f1 };

struct HypformerConfig {
  // 0 means "take from the dataset" (feature width, number of classes).
  std::size_t d_in = 0;
  std::size_t d_hidden = 32;
  std::size_t d_out = 0;

  std::size_t layers = 2;
  AttentionKind attention = AttentionKind::linear;
  std::size_t heads = 1;
  double p = 2.0;  // focus power
  double dropout = 0.0;

  bool use_transformer = true;
  bool use_gnn = true;
  std::size_t gnn_layers = 2;
  std::size_t knn_k = 0;  // > 0 adds a k-NN graph over the raw features

  // Magnitudes |k| of the input, hidden and output curvatures.
  double kappa_in = 1.0;
  double kappa_hidden = 1.0;
  double kappa_out = 1.0;
  bool curvature_trainable = true;

  double lr = 0.01;
  double weight_decay = 5e-4;
  std::size_t epochs = 200;
  std::size_t patience = 200;
  std::uint64_t seed = 0;
  Metric eval_metric = Metric::accuracy;
};

const char* to_string(AttentionKind kind);
const char* to_string(Metric metric);

// Throws ConfigError on out-of-range values.
void validate(const HypformerConfig& config);

std::string to_json_text(const HypformerConfig& config);
// Missing keys keep their defaults; unknown keys and bad types throw ConfigError.
HypformerConfig config_from_json_text(const std::string& text);

HypformerConfig load_config(const std::filesystem::path& path);
void save_config(const HypformerConfig& config, const std::filesystem::path& path);

}  // namespace hyp
