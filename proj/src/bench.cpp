#include "hyp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cmath>
#include <sstream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "hyp/config.hpp"

namespace hyp {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

LorentzBatch random_points(std::size_t n, std::size_t dim, const Curvature& k, Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  Tensor f = Tensor::zeros(n, dim);
  for (double& v : f.mutable_values()) v = g(rng);
  return lift_euclidean(f, k);
}

}  // namespace

double softmax_buffer_bytes(std::size_t n) { return 3.0 * static_cast<double>(n) * static_cast<double>(n) * 8.0; }

double timer_resolution_ms() {
  double best = 1e9;
  for (int i = 0; i < 20; ++i) {
    const auto a = Clock::now();
    auto b = Clock::now();
    while (b == a) b = Clock::now();
    best = std::min(best, elapsed_ms(a, b));
  }
  return best;
}

std::pair<double, std::size_t> time_attention_once(const LorentzBatch& x, const AttentionParams& params) {
  const std::size_t baseline = memory::current_bytes();
  memory::reset_peak();
  const auto start = Clock::now();
  {
    Tape tape;
    TapeScope scope(tape);
    LorentzBatch y = attention_forward(x, params);
    Tensor l = sum(y.data);
    tape.backward(l);
  }
  const auto stop = Clock::now();
  return {elapsed_ms(start, stop), memory::peak_bytes() - baseline};
}

void pin_allocator_thresholds() {
#if defined(__GLIBC__)
  // Keep freed tensor buffers in the heap instead of unmapping and faulting them back in every pass.
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

std::vector<BenchRow> run_bench(const BenchOptions& opt) {
  pin_allocator_thresholds();
  std::vector<BenchRow> rows;
  Rng rng(opt.seed);
  const Curvature k_in = Curvature::from_value(-1.0, true);
  const Curvature k_attn = Curvature::from_value(-1.0, true);
  const Curvature k_out = Curvature::from_value(-1.0, true);
  for (std::size_t n : opt.n_list) {
    LorentzBatch x = random_points(n, opt.dim, k_in, rng);
    for (AttentionKind kind : opt.kinds) {
      BenchRow row;
      row.n = n;
      row.kind = kind;
      if (kind == AttentionKind::softmax && softmax_buffer_bytes(n) > opt.mem_cap_mb * 1024.0 * 1024.0) {
        rows.push_back(row);
        continue;
      }
      AttentionParams params = make_attention(opt.dim, opt.dim, k_in, k_attn, k_out, kind, 2.0, rng);
      time_attention_once(x, params);  // warmup
      std::vector<double> times;
      std::size_t peak = 0;
      for (std::size_t r = 0; r < opt.reps; ++r) {
        auto [ms, bytes] = time_attention_once(x, params);
        times.push_back(ms);
        peak = std::max(peak, bytes);
      }
      std::sort(times.begin(), times.end());
      const std::size_t h = times.size() / 2;
      row.median_ms = times.size() % 2 == 1 ? times[h] : 0.5 * (times[h - 1] + times[h]);
      row.peak_bytes = peak;
      rows.push_back(row);
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "n,attention,median_ms,peak_bytes\n";
  for (const auto& r : rows) {
    out << r.n << ',' << to_string(r.kind) << ',';
    if (r.median_ms) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.4f", *r.median_ms);
      out << buf << ',' << *r.peak_bytes << '\n';
    } else {
      out << "skipped,skipped\n";
    }
  }
  return out.str();
}

}  // namespace hyp
