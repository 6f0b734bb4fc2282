#include "hyp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "hyp/errors.hpp"

namespace hyp {

namespace memory {
namespace {
std::atomic<std::size_t> g_current{0};
std::atomic<std::size_t> g_peak{0};
}  // namespace

std::size_t current_bytes() { return g_current.load(); }
std::size_t peak_bytes() { return g_peak.load(); }
void reset_peak() { g_peak.store(g_current.load()); }

namespace detail {
void on_alloc(std::size_t bytes) {
  std::size_t now = g_current.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak.load();
  while (now > peak && !g_peak.compare_exchange_weak(peak, now)) {
  }
}
void on_free(std::size_t bytes) { g_current.fetch_sub(bytes); }
}  // namespace detail
}  // namespace memory

Buffer& TensorData::grad_buffer() {
  if (grad.empty()) grad.assign(values.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return full(rows, cols, 0.0); }

Tensor Tensor::full(std::size_t rows, std::size_t cols, double value) {
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->values.assign(rows * cols, value);
  return Tensor(std::move(d));
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::span<const double> values) {
  if (values.size() != rows * cols) throw ShapeError("Tensor::from: value count does not match shape");
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->values.assign(values.begin(), values.end());
  return Tensor(std::move(d));
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return from(rows, cols, std::span<const double>(values.begin(), values.size()));
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, Buffer&& values) {
  if (values.size() != rows * cols) throw ShapeError("Tensor::from: value count does not match shape");
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->values = std::move(values);
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value) { return full(1, 1, value); }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on a tensor with more than one element");
  return impl_->values[0];
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(impl_->values.size(), 0.0);
  return {impl_->grad.begin(), impl_->grad.end()};
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

Tensor& Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  return *this;
}

Tensor Tensor::detach() const {
  return from(rows(), cols(), std::span<const double>(impl_->values));
}

namespace {
thread_local Tape* t_current_tape = nullptr;

bool env_flag(const char* name) {
  const char* v = std::getenv(name);
  return v != nullptr && std::string(v) == "1";
}

std::atomic<bool> g_nan_check{env_flag("HYPF_DEBUG_NAN")};
}  // namespace

void set_nan_check(bool on) { g_nan_check.store(on); }
bool nan_check_enabled() { return g_nan_check.load(); }

Tape* Tape::current() { return t_current_tape; }

void Tape::push(Node node) { nodes_.push_back(std::move(node)); }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) throw ShapeError("backward: loss must be a scalar");
  if (!loss.requires_grad()) {
    clear();
    return;
  }
  loss.impl()->grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output->grad.empty()) continue;
    it->backward(*it);
    // Intermediate gradients are consumed exactly once.
    Buffer().swap(it->output->grad);
  }
  clear();
}

TapeScope::TapeScope(Tape& tape) : previous_(t_current_tape) { t_current_tape = &tape; }
TapeScope::~TapeScope() { t_current_tape = previous_; }

NoGradScope::NoGradScope() : previous_(t_current_tape) { t_current_tape = nullptr; }
NoGradScope::~NoGradScope() { t_current_tape = previous_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::current();
  if (tape == nullptr) throw std::logic_error("backward: no active tape");
  tape->backward(loss);
}

namespace detail {

namespace {
template <class Range>
Tensor record_impl(std::string op, Tensor out, const Range& inputs,
                   std::function<void(Tape::Node&)> backward) {
  if (nan_check_enabled()) {
    for (double v : out.values()) {
      if (!std::isfinite(v)) throw NumericalError("non-finite value produced by op '" + op + "'");
    }
  }
  Tape* tape = Tape::current();
  if (tape == nullptr) return out;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (!any) return out;
  out.impl()->requires_grad = true;
  Tape::Node node;
  node.op = std::move(op);
  node.inputs.reserve(inputs.size());
  for (const Tensor& t : inputs) node.inputs.push_back(t.impl());
  node.output = out.impl();
  node.backward = std::move(backward);
  tape->push(std::move(node));
  return out;
}
}  // namespace

Tensor record(std::string op, Tensor out, std::initializer_list<Tensor> inputs,
              std::function<void(Tape::Node&)> backward) {
  return record_impl(std::move(op), std::move(out), inputs, std::move(backward));
}

Tensor record(std::string op, Tensor out, const std::vector<Tensor>& inputs,
              std::function<void(Tape::Node&)> backward) {
  return record_impl(std::move(op), std::move(out), inputs, std::move(backward));
}

}  // namespace detail
}  // namespace hyp
