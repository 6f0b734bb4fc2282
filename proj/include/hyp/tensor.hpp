#pragma once

// Dense rank-2 tensors with tape-based reverse-mode differentiation.
//
// Every tensor is a rows x cols row-major matrix; scalars are 1x1. Operations
// record themselves on the thread's active Tape only when a tape is installed
// (see TapeScope) and at least one input requires a gradient. Without a tape
// the same calls are plain forward evaluation and are safe to run from
// several threads.

#include <array>
#include <atomic>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hyp {

namespace memory {

// Bytes currently held by tensor buffers, and the high-water mark since the
// last reset_peak(). Used by the benchmark harness.
std::size_t current_bytes();
std::size_t peak_bytes();
void reset_peak();

namespace detail {
void on_alloc(std::size_t bytes);
void on_free(std::size_t bytes);
}  // namespace detail

}  // namespace memory

template <class T>
struct CountingAllocator {
  using value_type = T;

  CountingAllocator() = default;
  template <class U>
  CountingAllocator(const CountingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    memory::detail::on_alloc(n * sizeof(T));
    return std::allocator<T>{}.allocate(n);
  }
  void deallocate(T* p, std::size_t n) noexcept {
    memory::detail::on_free(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const CountingAllocator<U>&) const noexcept {
    return true;
  }
};

using Buffer = std::vector<double, CountingAllocator<double>>;

struct TensorData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Buffer values;
  Buffer grad;  // empty until a gradient is accumulated
  bool requires_grad = false;

  // Zero-filled gradient buffer, allocated on first use.
  Buffer& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorData> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor full(std::size_t rows, std::size_t cols, double value);
  static Tensor from(std::size_t rows, std::size_t cols, std::span<const double> values);
  static Tensor from(std::size_t rows, std::size_t cols, std::initializer_list<double> values);
  static Tensor from(std::size_t rows, std::size_t cols, Buffer&& values);
  static Tensor scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  std::size_t rows() const { return impl_->rows; }
  std::size_t cols() const { return impl_->cols; }
  std::size_t size() const { return impl_->values.size(); }
  std::array<std::size_t, 2> shape() const { return {impl_->rows, impl_->cols}; }

  double operator()(std::size_t r, std::size_t c) const { return impl_->values[r * impl_->cols + c]; }
  double& operator()(std::size_t r, std::size_t c) { return impl_->values[r * impl_->cols + c]; }
  double item() const;

  std::span<const double> values() const { return impl_->values; }
  // Direct writes bypass the tape; meant for parameters and test fixtures.
  std::span<double> mutable_values() { return impl_->values; }

  // Accumulated gradient; all zeros when nothing has been accumulated.
  std::vector<double> grad() const;
  bool has_grad() const { return !impl_->grad.empty(); }
  void zero_grad();

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);

  // Copy of the values with no gradient history.
  Tensor detach() const;

  const std::shared_ptr<TensorData>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorData> impl_;
};

class Tape {
 public:
  struct Node {
    std::string op;
    std::vector<std::shared_ptr<TensorData>> inputs;
    std::shared_ptr<TensorData> output;
    std::function<void(Node&)> backward;
  };

  void push(Node node);
  std::size_t size() const { return nodes_.size(); }
  bool empty() const { return nodes_.empty(); }
  void clear() { nodes_.clear(); }

  // Seeds d(loss)/d(loss) = 1 and replays the records in reverse. Gradients
  // accumulate into every requires_grad tensor. The tape is cleared after.
  void backward(const Tensor& loss);

  // The tape installed on this thread, or nullptr.
  static Tape* current();

 private:
  friend class TapeScope;
  std::vector<Node> nodes_;
};

// Installs a tape as the thread's recording target for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording (for example inside finite-difference evaluation).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

// Runs backward on the thread's active tape. Throws ShapeError for non-scalar
// losses and std::logic_error when no tape is installed.
void backward(const Tensor& loss);

// When on, every recorded op checks its output for NaN/Inf and throws
// NumericalError naming the op. Also enabled by HYPF_DEBUG_NAN=1.
void set_nan_check(bool on);
bool nan_check_enabled();

namespace detail {

// Registers `out` as the result of `op` applied to `inputs`. Records a tape
// node only when a tape is active and some input requires a gradient.
Tensor record(std::string op, Tensor out, std::initializer_list<Tensor> inputs,
              std::function<void(Tape::Node&)> backward);
Tensor record(std::string op, Tensor out, const std::vector<Tensor>& inputs,
              std::function<void(Tape::Node&)> backward);

}  // namespace detail

}  // namespace hyp
