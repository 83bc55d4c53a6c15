#pragma once

// Dense row-major tensors with reverse-mode automatic differentiation.
//
// Every op that consumes a tensor requiring gradients records a GradFn holding
// its inputs and a backward closure. Records carry a monotonically increasing
// sequence number, so sorting the reachable records by descending sequence is a
// valid reverse topological order (the tape). backward() replays it once.
//
// Tensor is a cheap handle: copies share the same node. T is float for
// training and double for gradient checking.

#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nvs/errors.hpp"

namespace nvs {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct TensorImpl;

template <typename T>
struct GradFn {
  std::uint64_t seq = 0;
  const char* name = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  // Reads out.grad and accumulates into inputs[i] that require grad.
  std::function<void(TensorImpl<T>& out)> backward;
};

template <typename T>
struct TensorImpl {
  Shape shape;
  std::shared_ptr<std::vector<T>> storage;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  bool retain_grad = false;
  std::shared_ptr<GradFn<T>> grad_fn;

  std::int64_t numel() const { return static_cast<std::int64_t>(storage->size()); }
  T* data() { return storage->data(); }
  const T* data() const { return storage->data(); }
  /// Gradient buffer, zero-allocated on first use.
  T* grad_data();
};

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, T value);
  static Tensor scalar(T value);
  static Tensor from_data(const Shape& shape, std::vector<T> values);
  template <typename U>
  static Tensor from_span(const Shape& shape, std::span<const U> values) {
    std::vector<T> v(values.begin(), values.end());
    return from_data(shape, std::move(v));
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  /// Extent of an axis; negative axes count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const { return impl_->numel(); }

  std::span<const T> values() const { return {impl_->data(), static_cast<std::size_t>(numel())}; }
  /// Writable view of a leaf's values (parameters, inputs). Throws for op results.
  std::span<T> mutable_values();
  T item() const;
  T value(std::int64_t flat_index) const { return impl_->data()[flat_index]; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool is_leaf() const { return impl_->grad_fn == nullptr; }
  /// Keeps this non-leaf's gradient after backward().
  Tensor& retain_grad();

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return {impl_->grad.data(), impl_->grad.size()}; }
  std::vector<T> grad_or_zeros() const;
  void zero_grad() { impl_->grad.clear(); }

  /// Same values, no history: a gradient-graph leaf that blocks backward flow.
  Tensor detach() const;
  /// Independent copy of the values (a leaf).
  Tensor clone() const;

  /// Accumulates d(this)/d(leaf) into every reachable leaf requiring grad.
  void backward() const;

  TensorImpl<T>* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl<T>>& impl_ptr() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl<T>> impl_;
};

namespace detail {

std::uint64_t next_sequence();

/// Builds an op result; records a GradFn when grad mode is on and any input
/// requires grad.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      const std::vector<const Tensor<T>*>& inputs, const char* name,
                      std::function<void(TensorImpl<T>& out)> backward);

/// Result sharing the storage of `source` (reshape, detach).
template <typename T>
Tensor<T> make_view(const Tensor<T>& source, Shape shape,
                    const std::vector<const Tensor<T>*>& inputs, const char* name,
                    std::function<void(TensorImpl<T>& out)> backward);

template <typename T>
bool needs_grad(const std::shared_ptr<TensorImpl<T>>& impl) {
  return impl && impl->requires_grad;
}

}  // namespace detail

}  // namespace nvs
