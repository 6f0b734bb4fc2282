#pragma once

// Graph datasets on disk and in memory.
//
// Directory layout:
//   features.bin  "HYPF", u32 N, u32 d (little-endian), N*d little-endian
//                 float32 values, row-major. features.csv (comma-separated
//                 rows) is accepted when features.bin is absent.
//   labels.csv    one integer per line
//   edges.csv     optional, "src,dst" per line, 0-indexed
//   splits.json   {"train": [...], "val": [...], "test": [...]}

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hyp {

enum class DataErrc {
  io,
  parse,
  shape_mismatch,
  index_out_of_range,
  overlapping_splits,
  empty_split,
  missing_class,
  invalid_argument,
};

const char* to_string(DataErrc code);

class DataError : public std::runtime_error {
 public:
  DataError(DataErrc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}
  DataErrc code() const { return code_; }

 private:
  DataErrc code_;
};

struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major

  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
};

using Edge = std::pair<std::size_t, std::size_t>;

struct Splits {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct GraphDataset {
  DenseMatrix features;
  std::vector<std::int64_t> labels;
  std::vector<Edge> edges;
  Splits splits;
  std::size_t num_classes = 0;

  std::size_t num_nodes() const { return features.rows; }
};

// Throws DataError if indices are out of range, splits overlap or are empty,
// or some class has no training node.
void validate(const GraphDataset& dataset);

GraphDataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const GraphDataset& dataset, const std::filesystem::path& dir);

// Each node links to its k nearest other nodes (Euclidean, ties to the lower
// index); the result is symmetrized by union and sorted. Requires k < N.
std::vector<Edge> knn_graph(const DenseMatrix& features, std::size_t k);

struct TreeSpec {
  std::size_t depth = 2;
  std::size_t branching = 2;
  std::size_t dim = 16;
  double noise = 0.5;
  std::uint64_t seed = 0;
};

// Balanced tree; node labels are the index of the depth-1 ancestor (the root
// is assigned class 0). Features are a unit class centroid plus N(0, noise^2)
// per coordinate, drawn independently at every node of every level. Edges are
// parent -> child. Splits are 50/25/25 per class.
// When dim < branching the centroids cannot be orthonormal; a message is
// appended to `warnings` if given.
GraphDataset gen_tree(const TreeSpec& spec, std::vector<std::string>* warnings = nullptr);

enum class FeatureNorm { none, rowwise_l2, standardize };

DenseMatrix normalize_features(const DenseMatrix& features, FeatureNorm mode);

}  // namespace hyp
