#pragma once

#include <stdexcept>
#include <string>

namespace hyp {

// Incompatible tensor shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Curvature that is not strictly negative, or two batches on different manifolds.
struct CurvatureError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Input outside the domain of a geometric map.
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

// NaN/Inf produced during a computation.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace hyp
