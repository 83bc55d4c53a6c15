#include "nvs/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "nvs/simd/kernels.hpp"

namespace nvs {
namespace {

thread_local bool g_grad_enabled = true;

}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
T* TensorImpl<T>::grad_data() {
  if (grad.empty()) grad.assign(storage->size(), T(0));
  return grad.data();
}

namespace detail {

std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> values,
                      const std::vector<const Tensor<T>*>& inputs, const char* name,
                      std::function<void(TensorImpl<T>& out)> backward) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->storage = std::make_shared<std::vector<T>>(std::move(values));
  if (shape_numel(impl->shape) != impl->numel()) {
    throw ShapeError(std::string(name) + ": value count does not match shape " +
                     shape_str(impl->shape));
  }
  if (g_grad_enabled) {
    bool any = false;
    for (const auto* in : inputs) any = any || (in->defined() && in->requires_grad());
    if (any) {
      auto fn = std::make_shared<GradFn<T>>();
      fn->seq = next_sequence();
      fn->name = name;
      for (const auto* in : inputs) fn->inputs.push_back(in->impl_ptr());
      fn->backward = std::move(backward);
      impl->grad_fn = std::move(fn);
      impl->requires_grad = true;
    }
  }
  return Tensor<T>(std::move(impl));
}

template <typename T>
Tensor<T> make_view(const Tensor<T>& source, Shape shape,
                    const std::vector<const Tensor<T>*>& inputs, const char* name,
                    std::function<void(TensorImpl<T>& out)> backward) {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = std::move(shape);
  impl->storage = source.impl()->storage;
  if (shape_numel(impl->shape) != impl->numel()) {
    throw ShapeError(std::string(name) + ": cannot view " + shape_str(source.shape()) + " as " +
                     shape_str(impl->shape));
  }
  if (g_grad_enabled) {
    bool any = false;
    for (const auto* in : inputs) any = any || in->requires_grad();
    if (any) {
      auto fn = std::make_shared<GradFn<T>>();
      fn->seq = next_sequence();
      fn->name = name;
      for (const auto* in : inputs) fn->inputs.push_back(in->impl_ptr());
      fn->backward = std::move(backward);
      impl->grad_fn = std::move(fn);
      impl->requires_grad = true;
    }
  }
  return Tensor<T>(std::move(impl));
}

}  // namespace detail

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape) {
  return full(shape, T(0));
}

template <typename T>
Tensor<T> Tensor<T>::ones(const Shape& shape) {
  return full(shape, T(1));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value) {
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative extent in shape " + shape_str(shape));
  }
  return from_data(shape, std::vector<T>(static_cast<std::size_t>(shape_numel(shape)), value));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value) {
  return from_data({}, std::vector<T>{value});
}

template <typename T>
Tensor<T> Tensor<T>::from_data(const Shape& shape, std::vector<T> values) {
  if (shape_numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("from_data: " + std::to_string(values.size()) +
                     " values do not fill shape " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape;
  impl->storage = std::make_shared<std::vector<T>>(std::move(values));
  return Tensor<T>(std::move(impl));
}

template <typename T>
std::int64_t Tensor<T>::dim(int axis) const {
  const int r = rank();
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_str(shape()));
  }
  return impl_->shape[static_cast<std::size_t>(a)];
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
  if (!is_leaf()) throw std::logic_error("mutable_values() on a non-leaf tensor");
  return {impl_->data(), static_cast<std::size_t>(numel())};
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data()[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad() on a non-leaf tensor");
  impl_->requires_grad = on;
  return *this;
}

template <typename T>
Tensor<T>& Tensor<T>::retain_grad() {
  impl_->retain_grad = true;
  return *this;
}

template <typename T>
std::vector<T> Tensor<T>::grad_or_zeros() const {
  if (impl_->grad.empty()) return std::vector<T>(static_cast<std::size_t>(numel()), T(0));
  return impl_->grad;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = impl_->shape;
  impl->storage = impl_->storage;
  return Tensor<T>(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return from_data(shape(), std::vector<T>(values().begin(), values().end()));
}

template <typename T>
void Tensor<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) {
    throw std::logic_error("backward() on a tensor that is not part of a gradient graph");
  }
  // Collect every recorded op reachable from the loss.
  std::vector<TensorImpl<T>*> nodes;
  std::unordered_set<TensorImpl<T>*> seen;
  std::vector<TensorImpl<T>*> stack{impl_.get()};
  seen.insert(impl_.get());
  while (!stack.empty()) {
    TensorImpl<T>* cur = stack.back();
    stack.pop_back();
    if (!cur->grad_fn) continue;
    nodes.push_back(cur);
    for (const auto& in : cur->grad_fn->inputs) {
      if (in && in->requires_grad && seen.insert(in.get()).second) stack.push_back(in.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(), [](const TensorImpl<T>* a, const TensorImpl<T>* b) {
    return a->grad_fn->seq > b->grad_fn->seq;
  });
  impl_->grad_data()[0] += T(1);
  for (TensorImpl<T>* node : nodes) {
    if (node->grad.empty()) continue;
    node->grad_fn->backward(*node);
    if (!node->retain_grad && node != impl_.get()) {
      node->grad.clear();
      node->grad.shrink_to_fit();
    }
  }
}

template struct TensorImpl<float>;
template struct TensorImpl<double>;
template class Tensor<float>;
template class Tensor<double>;

namespace detail {
template Tensor<float> make_result<float>(Shape, std::vector<float>,
                                          const std::vector<const Tensor<float>*>&, const char*,
                                          std::function<void(TensorImpl<float>&)>);
template Tensor<double> make_result<double>(Shape, std::vector<double>,
                                            const std::vector<const Tensor<double>*>&,
                                            const char*,
                                            std::function<void(TensorImpl<double>&)>);
template Tensor<float> make_view<float>(const Tensor<float>&, Shape,
                                        const std::vector<const Tensor<float>*>&, const char*,
                                        std::function<void(TensorImpl<float>&)>);
template Tensor<double> make_view<double>(const Tensor<double>&, Shape,
                                          const std::vector<const Tensor<double>*>&,
                                          const char*,
                                          std::function<void(TensorImpl<double>&)>);
}  // namespace detail

}  // namespace nvs
