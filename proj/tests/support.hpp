#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "hyp/geometry.hpp"

namespace hyp::test {

inline Tensor gaussian(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> g(0.0, sd);
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.mutable_values()) v = g(rng);
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

inline void check_row(const Tensor& t, std::size_t r, std::initializer_list<double> expected, double tol = 1e-12) {
  REQUIRE(t.cols() == expected.size());
  std::size_t c = 0;
  for (double e : expected) {
    CHECK(t(r, c) == doctest::Approx(e).epsilon(tol).scale(1.0));
    ++c;
  }
}

// Random points on the hyperboloid with space-like coordinates ~ N(0, sd^2).
inline LorentzBatch random_points(std::size_t n, std::size_t d, const Curvature& k, std::mt19937_64& rng,
                                  double sd = 1.0) {
  return project_to_manifold(gaussian(n, d, rng, sd), k);
}

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("hyp_" + tag + "_" + std::to_string(rd()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace hyp::test
