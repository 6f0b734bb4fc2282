#pragma once

// Named gradient checks over the differentiable building blocks, grouped as
// geometry, blocks, attention and model.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hyp/gradcheck.hpp"

namespace hyp {

struct GradCase {
  std::string group;
  std::string name;
  std::function<double(const GradCheckOptions&)> run;  // max relative error
};

std::vector<GradCase> grad_cases(std::uint64_t seed);

}  // namespace hyp
