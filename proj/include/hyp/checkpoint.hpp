#pragma once

// Binary model file:
//   "HYPF"  u32 version  u32 n + n bytes of config JSON  u32 param count
//   per param: u32 n + n bytes of name, u32 rows, u32 cols, rows*cols f64
// All integers and floats little-endian.

#include <filesystem>
#include <stdexcept>

#include "hyp/model.hpp"

namespace hyp {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const Hypformer& model, const std::filesystem::path& path);

// Rebuilds the architecture from the embedded config and fills every
// parameter by name; throws CheckpointError on any mismatch.
Hypformer load_checkpoint(const std::filesystem::path& path);

}  // namespace hyp
