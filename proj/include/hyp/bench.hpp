#pragma once

// Forward + backward timing of one attention block over random points on the
// hyperboloid, with peak tensor memory from the allocation counter.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hyp/attention.hpp"

namespace hyp {

struct BenchOptions {
  std::vector<AttentionKind> kinds{AttentionKind::linear, AttentionKind::softmax};
  std::vector<std::size_t> n_list{1024, 2048, 4096, 8192};
  std::size_t dim = 64;
  std::size_t reps = 5;
  std::uint64_t seed = 0;
  // Softmax sizes whose three N x N buffers would exceed this are skipped.
  double mem_cap_mb = 3072.0;
};

struct BenchRow {
  std::size_t n = 0;
  AttentionKind kind = AttentionKind::linear;
  std::optional<double> median_ms;      // empty when skipped
  std::optional<std::size_t> peak_bytes;
};

// Bytes the softmax path needs for its N x N buffers.
double softmax_buffer_bytes(std::size_t n);

// Smallest observable tick of the steady clock, in milliseconds.
double timer_resolution_ms();

// One forward + backward pass; returns elapsed milliseconds and peak bytes.
std::pair<double, std::size_t> time_attention_once(const LorentzBatch& x, const AttentionParams& params);

// Fixed glibc mmap/trim thresholds; a no-op elsewhere. run_bench calls it.
void pin_allocator_thresholds();

std::vector<BenchRow> run_bench(const BenchOptions& options);

std::string bench_csv(const std::vector<BenchRow>& rows);

}  // namespace hyp
