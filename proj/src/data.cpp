#include "hyp/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hyp {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(DataErrc code) {
  switch (code) {
    case DataErrc::io: return "io";
    case DataErrc::parse: return "parse";
    case DataErrc::shape_mismatch: return "shape_mismatch";
    case DataErrc::index_out_of_range: return "index_out_of_range";
    case DataErrc::overlapping_splits: return "overlapping_splits";
    case DataErrc::empty_split: return "empty_split";
    case DataErrc::missing_class: return "missing_class";
    case DataErrc::invalid_argument: return "invalid_argument";
  }
  return "unknown";
}

namespace {

constexpr char kMagic[4] = {'H', 'Y', 'P', 'F'};

std::uint32_t read_u32_le(const unsigned char* p) {
  return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}

void write_u32_le(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(DataErrc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& token, const std::string& where) {
  T value{};
  std::istringstream ss(token);
  ss >> value;
  if (ss.fail() || !ss.eof()) throw DataError(DataErrc::parse, where + ": cannot parse '" + token + "'");
  return value;
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  return out;
}

DenseMatrix read_features_bin(const fs::path& path) {
  const std::string bytes = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw DataError(DataErrc::parse, path.filename().string() + ": offset 0: bad magic");
  }
  DenseMatrix m;
  m.rows = read_u32_le(p + 4);
  m.cols = read_u32_le(p + 8);
  const std::size_t expected = 12 + m.rows * m.cols * 4;
  if (bytes.size() != expected) {
    throw DataError(DataErrc::parse, path.filename().string() + ": offset " + std::to_string(bytes.size()) +
                                         ": expected " + std::to_string(expected) + " bytes");
  }
  m.values.resize(m.rows * m.cols);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const std::uint32_t bits = read_u32_le(p + 12 + 4 * i);
    m.values[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return m;
}

DenseMatrix read_features_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(DataErrc::io, "cannot open " + path.string());
  DenseMatrix m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (m.rows == 0) m.cols = cells.size();
    const std::string where = "features.csv:" + std::to_string(lineno);
    if (cells.size() != m.cols) throw DataError(DataErrc::parse, where + ": ragged row");
    for (const auto& c : cells) m.values.push_back(parse_number<double>(c, where));
    ++m.rows;
  }
  return m;
}

std::vector<std::size_t> json_indices(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array()) {
    throw DataError(DataErrc::parse, std::string("splits.json: missing array '") + key + "'");
  }
  std::vector<std::size_t> out;
  for (const auto& v : j[key]) {
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0) {
      throw DataError(DataErrc::parse, std::string("splits.json: non-index entry in '") + key + "'");
    }
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

void validate(const GraphDataset& d) {
  const std::size_t n = d.num_nodes();
  if (d.features.values.size() != n * d.features.cols) throw DataError(DataErrc::shape_mismatch, "feature buffer size");
  if (d.labels.size() != n) {
    throw DataError(DataErrc::shape_mismatch, std::to_string(d.labels.size()) + " labels for " + std::to_string(n) +
                                                  " nodes");
  }
  for (std::int64_t y : d.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= d.num_classes) {
      throw DataError(DataErrc::index_out_of_range, "label " + std::to_string(y) + " outside [0, num_classes)");
    }
  }
  for (const auto& [s, t] : d.edges) {
    if (s >= n || t >= n) {
      throw DataError(DataErrc::index_out_of_range,
                      "edge (" + std::to_string(s) + "," + std::to_string(t) + ") references a missing node");
    }
  }
  std::vector<int> owner(n, -1);
  const std::vector<std::size_t>* parts[] = {&d.splits.train, &d.splits.val, &d.splits.test};
  const char* names[] = {"train", "val", "test"};
  for (int s = 0; s < 3; ++s) {
    if (parts[s]->empty()) throw DataError(DataErrc::empty_split, std::string(names[s]) + " split is empty");
    for (std::size_t i : *parts[s]) {
      if (i >= n) throw DataError(DataErrc::index_out_of_range, std::string(names[s]) + " index " + std::to_string(i));
      if (owner[i] != -1) {
        throw DataError(DataErrc::overlapping_splits, "node " + std::to_string(i) + " appears in both " +
                                                          names[owner[i]] + " and " + names[s]);
      }
      owner[i] = s;
    }
  }
  std::vector<bool> seen(d.num_classes, false);
  for (std::size_t i : d.splits.train) seen[static_cast<std::size_t>(d.labels[i])] = true;
  for (std::size_t c = 0; c < d.num_classes; ++c) {
    if (!seen[c]) throw DataError(DataErrc::missing_class, "class " + std::to_string(c) + " has no training node");
  }
}

GraphDataset load_dataset(const fs::path& dir) {
  GraphDataset d;
  if (fs::exists(dir / "features.bin")) {
    d.features = read_features_bin(dir / "features.bin");
  } else if (fs::exists(dir / "features.csv")) {
    d.features = read_features_csv(dir / "features.csv");
  } else {
    throw DataError(DataErrc::io, "no features.bin or features.csv in " + dir.string());
  }

  {
    std::ifstream in(dir / "labels.csv");
    if (!in) throw DataError(DataErrc::io, "cannot open " + (dir / "labels.csv").string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const std::string t = trim(line);
      if (t.empty()) continue;
      d.labels.push_back(parse_number<std::int64_t>(t, "labels.csv:" + std::to_string(lineno)));
    }
  }
  std::int64_t max_label = -1;
  for (std::int64_t y : d.labels) {
    if (y < 0) throw DataError(DataErrc::index_out_of_range, "negative label");
    max_label = std::max(max_label, y);
  }
  d.num_classes = static_cast<std::size_t>(max_label + 1);

  if (fs::exists(dir / "edges.csv")) {
    std::ifstream in(dir / "edges.csv");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const std::string where = "edges.csv:" + std::to_string(lineno);
      const auto cells = split_commas(line);
      if (cells.size() != 2) throw DataError(DataErrc::parse, where + ": expected 'src,dst'");
      const auto s = parse_number<std::int64_t>(cells[0], where);
      const auto t = parse_number<std::int64_t>(cells[1], where);
      if (s < 0 || t < 0) throw DataError(DataErrc::index_out_of_range, where + ": negative node id");
      d.edges.emplace_back(static_cast<std::size_t>(s), static_cast<std::size_t>(t));
    }
  }

  {
    const std::string text = read_file(dir / "splits.json");
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw DataError(DataErrc::parse, "splits.json: offset " + std::to_string(e.byte) + ": " + e.what());
    }
    d.splits.train = json_indices(j, "train");
    d.splits.val = json_indices(j, "val");
    d.splits.test = json_indices(j, "test");
  }

  validate(d);
  return d;
}

void save_dataset(const GraphDataset& d, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw DataError(DataErrc::io, "cannot create directory " + dir.string());

  auto open = [&](const char* name, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(dir / name, mode);
    if (!out) throw DataError(DataErrc::io, "cannot write " + (dir / name).string());
    return out;
  };

  {
    auto out = open("features.bin", std::ios::out | std::ios::binary);
    out.write(kMagic, 4);
    write_u32_le(out, static_cast<std::uint32_t>(d.features.rows));
    write_u32_le(out, static_cast<std::uint32_t>(d.features.cols));
    for (double v : d.features.values) write_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  {
    auto out = open("labels.csv");
    for (std::int64_t y : d.labels) out << y << '\n';
  }
  {
    auto out = open("edges.csv");
    for (const auto& [s, t] : d.edges) out << s << ',' << t << '\n';
  }
  {
    auto out = open("splits.json");
    json j = {{"train", d.splits.train}, {"val", d.splits.val}, {"test", d.splits.test}};
    out << j.dump() << '\n';
  }
}

std::vector<Edge> knn_graph(const DenseMatrix& features, std::size_t k) {
  const std::size_t n = features.rows;
  const std::size_t dim = features.cols;
  if (k == 0 || k >= n) {
    throw DataError(DataErrc::invalid_argument, "knn_graph: need 0 < k < N (k=" + std::to_string(k) +
                                                    ", N=" + std::to_string(n) + ")");
  }
  std::set<Edge> edges;
  using Candidate = std::pair<double, std::size_t>;  // (squared distance, index)
  for (std::size_t i = 0; i < n; ++i) {
    // Max-heap holding the k best (smallest) candidates seen so far.
    std::priority_queue<Candidate> best;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double diff = features(i, c) - features(j, c);
        d2 += diff * diff;
      }
      const Candidate cand{d2, j};
      if (best.size() < k) {
        best.push(cand);
      } else if (cand < best.top()) {
        best.pop();
        best.push(cand);
      }
    }
    while (!best.empty()) {
      const std::size_t j = best.top().second;
      best.pop();
      edges.emplace(i, j);
      edges.emplace(j, i);
    }
  }
  return {edges.begin(), edges.end()};
}

GraphDataset gen_tree(const TreeSpec& spec, std::vector<std::string>* warnings) {
  if (spec.depth < 2 || spec.branching < 2) {
    throw DataError(DataErrc::invalid_argument, "gen_tree: depth and branching must be >= 2");
  }
  if (spec.dim < 1 || !(spec.noise >= 0.0)) throw DataError(DataErrc::invalid_argument, "gen_tree: bad dim or noise");
  const std::size_t b = spec.branching;
  const std::size_t d = spec.dim;

  // Heap layout: children of node i are b*i + 1 .. b*i + b.
  std::size_t n = 0;
  std::size_t level_size = 1;
  for (std::size_t l = 0; l <= spec.depth; ++l) {
    n += level_size;
    level_size *= b;
  }

  GraphDataset ds;
  ds.num_classes = b;
  ds.labels.assign(n, 0);
  for (std::size_t i = 1; i < n; ++i) {
    std::size_t a = i;
    while ((a - 1) / b != 0) a = (a - 1) / b;
    ds.labels[i] = static_cast<std::int64_t>(a - 1);
    ds.edges.emplace_back((i - 1) / b, i);
  }

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> centroids(b, std::vector<double>(d));
  for (auto& c : centroids)
    for (double& v : c) v = gauss(rng);
  if (d < b && warnings != nullptr) {
    warnings->push_back("gen_tree: dim " + std::to_string(d) + " < branching " + std::to_string(b) +
                        "; class centroids are not orthogonal");
  }
  // Gram-Schmidt where possible, unit norm always.
  for (std::size_t c = 0; c < b; ++c) {
    if (c < d) {
      for (std::size_t p = 0; p < c; ++p) {
        const double dot = std::inner_product(centroids[c].begin(), centroids[c].end(), centroids[p].begin(), 0.0);
        for (std::size_t j = 0; j < d; ++j) centroids[c][j] -= dot * centroids[p][j];
      }
    }
    const double norm = std::sqrt(std::inner_product(centroids[c].begin(), centroids[c].end(), centroids[c].begin(), 0.0));
    for (double& v : centroids[c]) v /= norm;
  }

  ds.features.rows = n;
  ds.features.cols = d;
  ds.features.values.resize(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = centroids[static_cast<std::size_t>(ds.labels[i])];
    for (std::size_t j = 0; j < d; ++j) ds.features(i, j) = c[j] + spec.noise * gauss(rng);
  }

  for (std::size_t cls = 0; cls < b; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < n; ++i)
      if (static_cast<std::size_t>(ds.labels[i]) == cls) members.push_back(i);
    std::shuffle(members.begin(), members.end(), rng);
    const std::size_t n_train = std::max<std::size_t>(1, members.size() / 2);
    const std::size_t n_val = members.size() / 4;
    for (std::size_t r = 0; r < members.size(); ++r) {
      auto& target = r < n_train ? ds.splits.train : (r < n_train + n_val ? ds.splits.val : ds.splits.test);
      target.push_back(members[r]);
    }
  }
  std::sort(ds.splits.train.begin(), ds.splits.train.end());
  std::sort(ds.splits.val.begin(), ds.splits.val.end());
  std::sort(ds.splits.test.begin(), ds.splits.test.end());
  return ds;
}

DenseMatrix normalize_features(const DenseMatrix& f, FeatureNorm mode) {
  DenseMatrix out = f;
  if (mode == FeatureNorm::rowwise_l2) {
    for (std::size_t i = 0; i < f.rows; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < f.cols; ++j) s += f(i, j) * f(i, j);
      if (s == 0.0) continue;
      const double inv = 1.0 / std::sqrt(s);
      for (std::size_t j = 0; j < f.cols; ++j) out(i, j) = f(i, j) * inv;
    }
  } else if (mode == FeatureNorm::standardize) {
    for (std::size_t j = 0; j < f.cols; ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < f.rows; ++i) mu += f(i, j);
      mu /= static_cast<double>(f.rows);
      double var = 0.0;
      for (std::size_t i = 0; i < f.rows; ++i) var += (f(i, j) - mu) * (f(i, j) - mu);
      var /= static_cast<double>(f.rows);
      const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
      for (std::size_t i = 0; i < f.rows; ++i) out(i, j) = (f(i, j) - mu) / sd;
    }
  }
  return out;
}

}  // namespace hyp
