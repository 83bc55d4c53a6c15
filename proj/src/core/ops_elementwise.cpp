#include <cmath>
#include <numbers>

#include "nvs/ops.hpp"
#include "nvs/simd/kernels.hpp"

namespace nvs {
namespace {

template <typename T>
void accumulate(TensorImpl<T>& dst, const T* g) {
  T* d = dst.grad_data();
  simd::add<T>(dst.numel(), d, g, d);
}

// Flat index into `in` for every flat index of the broadcast result `out`.
std::vector<std::int64_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::int64_t> in_stride(r, 0);
  std::int64_t s = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t src = in.size() - 1 - i;
    const std::size_t dst = r - 1 - i;
    in_stride[dst] = in[src] == 1 ? 0 : s;
    s *= in[src];
  }
  const std::int64_t n = shape_numel(out);
  std::vector<std::int64_t> map(static_cast<std::size_t>(n));
  std::vector<std::int64_t> counter(r, 0);
  std::int64_t offset = 0;
  for (std::int64_t flat = 0; flat < n; ++flat) {
    map[static_cast<std::size_t>(flat)] = offset;
    for (std::size_t d = r; d-- > 0;) {
      ++counter[d];
      offset += in_stride[d];
      if (counter[d] < out[d]) break;
      offset -= in_stride[d] * out[d];
      counter[d] = 0;
    }
  }
  return map;
}

template <typename T>
T gelu_value(T x) {
  return T(0.5) * x * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = T(0.5) * (T(1) + std::erf(x / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + x * pdf;
}

}  // namespace

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::int64_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast shapes " + shape_str(a) + " and " + shape_str(b));
    }
    out[r - 1 - i] = da == 1 ? db : da;
  }
  return out;
}

template <typename T>
Tensor<T> unary(UnaryOp op, const Tensor<T>& x) {
  const std::int64_t n = x.numel();
  const T* xv = x.impl()->data();
  std::vector<T> y(static_cast<std::size_t>(n));
  switch (op) {
    case UnaryOp::kNeg:
      for (std::int64_t i = 0; i < n; ++i) y[i] = -xv[i];
      break;
    case UnaryOp::kExp:
      for (std::int64_t i = 0; i < n; ++i) y[i] = std::exp(xv[i]);
      break;
    case UnaryOp::kLog:
      for (std::int64_t i = 0; i < n; ++i) y[i] = std::log(xv[i]);
      break;
    case UnaryOp::kAbs:
      for (std::int64_t i = 0; i < n; ++i) y[i] = std::abs(xv[i]);
      break;
    case UnaryOp::kGelu:
      for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_value(xv[i]);
      break;
    case UnaryOp::kRelu:
      for (std::int64_t i = 0; i < n; ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
      break;
    case UnaryOp::kSigmoid:
      for (std::int64_t i = 0; i < n; ++i) y[i] = T(1) / (T(1) + std::exp(-xv[i]));
      break;
    case UnaryOp::kTanh:
      for (std::int64_t i = 0; i < n; ++i) y[i] = std::tanh(xv[i]);
      break;
    case UnaryOp::kSqrt:
      for (std::int64_t i = 0; i < n; ++i) y[i] = std::sqrt(xv[i]);
      break;
    case UnaryOp::kSquare:
      for (std::int64_t i = 0; i < n; ++i) y[i] = xv[i] * xv[i];
      break;
  }
  return detail::make_result<T>(x.shape(), std::move(y), {&x}, "unary", [op](TensorImpl<T>& out) {
    auto& in = *out.grad_fn->inputs[0];
    const std::int64_t m = out.numel();
    const T* g = out.grad.data();
    const T* xs = in.data();
    const T* ys = out.data();
    T* gx = in.grad_data();
    switch (op) {
      case UnaryOp::kNeg:
        for (std::int64_t i = 0; i < m; ++i) gx[i] -= g[i];
        break;
      case UnaryOp::kExp:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i] * ys[i];
        break;
      case UnaryOp::kLog:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i] / xs[i];
        break;
      case UnaryOp::kAbs:
        for (std::int64_t i = 0; i < m; ++i)
          gx[i] += xs[i] > T(0) ? g[i] : (xs[i] < T(0) ? -g[i] : T(0));
        break;
      case UnaryOp::kGelu:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i] * gelu_grad(xs[i]);
        break;
      case UnaryOp::kRelu:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += xs[i] > T(0) ? g[i] : T(0);
        break;
      case UnaryOp::kSigmoid:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i] * ys[i] * (T(1) - ys[i]);
        break;
      case UnaryOp::kTanh:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i] * (T(1) - ys[i] * ys[i]);
        break;
      case UnaryOp::kSqrt:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i] / (T(2) * ys[i]);
        break;
      case UnaryOp::kSquare:
        for (std::int64_t i = 0; i < m; ++i) gx[i] += g[i] * T(2) * xs[i];
        break;
    }
  });
}

template <typename T>
Tensor<T> binary(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const std::int64_t n = shape_numel(out_shape);
  const bool direct = a.shape() == out_shape && b.shape() == out_shape;
  auto ia = std::make_shared<std::vector<std::int64_t>>();
  auto ib = std::make_shared<std::vector<std::int64_t>>();
  if (!direct) {
    *ia = broadcast_index(a.shape(), out_shape);
    *ib = broadcast_index(b.shape(), out_shape);
  }
  const T* av = a.impl()->data();
  const T* bv = b.impl()->data();
  std::vector<T> y(static_cast<std::size_t>(n));
  if (direct && (op == BinaryOp::kAdd || op == BinaryOp::kSub || op == BinaryOp::kMul)) {
    if (op == BinaryOp::kAdd) simd::add<T>(n, av, bv, y.data());
    if (op == BinaryOp::kSub) simd::sub<T>(n, av, bv, y.data());
    if (op == BinaryOp::kMul) simd::mul<T>(n, av, bv, y.data());
  } else {
    for (std::int64_t i = 0; i < n; ++i) {
      const T u = av[direct ? i : (*ia)[i]];
      const T v = bv[direct ? i : (*ib)[i]];
      switch (op) {
        case BinaryOp::kAdd: y[i] = u + v; break;
        case BinaryOp::kSub: y[i] = u - v; break;
        case BinaryOp::kMul: y[i] = u * v; break;
        case BinaryOp::kDiv: y[i] = u / v; break;
        case BinaryOp::kMin: y[i] = u <= v ? u : v; break;
        case BinaryOp::kMax: y[i] = u >= v ? u : v; break;
      }
    }
  }
  return detail::make_result<T>(
      out_shape, std::move(y), {&a, &b}, "binary", [op, direct, ia, ib](TensorImpl<T>& out) {
        auto& ta = *out.grad_fn->inputs[0];
        auto& tb = *out.grad_fn->inputs[1];
        const std::int64_t m = out.numel();
        const T* g = out.grad.data();
        const T* u = ta.data();
        const T* v = tb.data();
        const bool need_a = ta.requires_grad;
        const bool need_b = tb.requires_grad;
        if (direct && (op == BinaryOp::kAdd || op == BinaryOp::kSub)) {
          if (need_a) accumulate(ta, g);
          if (need_b) {
            T* gb = tb.grad_data();
            if (op == BinaryOp::kAdd) {
              simd::add<T>(m, gb, g, gb);
            } else {
              simd::sub<T>(m, gb, g, gb);
            }
          }
          return;
        }
        T* ga = need_a ? ta.grad_data() : nullptr;
        T* gb = need_b ? tb.grad_data() : nullptr;
        for (std::int64_t i = 0; i < m; ++i) {
          const std::int64_t ja = direct ? i : (*ia)[i];
          const std::int64_t jb = direct ? i : (*ib)[i];
          const T gi = g[i];
          switch (op) {
            case BinaryOp::kAdd:
              if (ga) ga[ja] += gi;
              if (gb) gb[jb] += gi;
              break;
            case BinaryOp::kSub:
              if (ga) ga[ja] += gi;
              if (gb) gb[jb] -= gi;
              break;
            case BinaryOp::kMul:
              if (ga) ga[ja] += gi * v[jb];
              if (gb) gb[jb] += gi * u[ja];
              break;
            case BinaryOp::kDiv:
              if (ga) ga[ja] += gi / v[jb];
              if (gb) gb[jb] -= gi * u[ja] / (v[jb] * v[jb]);
              break;
            case BinaryOp::kMin:
              if (u[ja] <= v[jb]) {
                if (ga) ga[ja] += gi;
              } else if (gb) {
                gb[jb] += gi;
              }
              break;
            case BinaryOp::kMax:
              if (u[ja] >= v[jb]) {
                if (ga) ga[ja] += gi;
              } else if (gb) {
                gb[jb] += gi;
              }
              break;
          }
        }
      });
}

template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T offset) {
  const std::int64_t n = x.numel();
  const T* xv = x.impl()->data();
  std::vector<T> y(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) y[i] = xv[i] * scale + offset;
  return detail::make_result<T>(x.shape(), std::move(y), {&x}, "affine",
                                [scale](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  simd::axpy<T>(out.numel(), scale, out.grad.data(),
                                                in.grad_data());
                                });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor) {
  const std::int64_t n = x.numel();
  const T* xv = x.impl()->data();
  std::vector<T> y(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) y[i] = xv[i] > floor ? xv[i] : floor;
  return detail::make_result<T>(x.shape(), std::move(y), {&x}, "clamp_min",
                                [floor](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  const T* g = out.grad.data();
                                  const T* xs = in.data();
                                  T* gx = in.grad_data();
                                  for (std::int64_t i = 0; i < out.numel(); ++i)
                                    if (xs[i] > floor) gx[i] += g[i];
                                });
}

#define NVS_INSTANTIATE(T)                                                      \
  template Tensor<T> unary<T>(UnaryOp, const Tensor<T>&);                       \
  template Tensor<T> binary<T>(BinaryOp, const Tensor<T>&, const Tensor<T>&);   \
  template Tensor<T> affine<T>(const Tensor<T>&, T, T);                         \
  template Tensor<T> clamp_min<T>(const Tensor<T>&, T);

NVS_INSTANTIATE(float)
NVS_INSTANTIATE(double)
#undef NVS_INSTANTIATE

}  // namespace nvs
