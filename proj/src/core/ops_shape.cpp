#include <algorithm>
#include <cmath>
#include <limits>

#include "nvs/ops.hpp"
#include "nvs/simd/kernels.hpp"

namespace nvs {
namespace {

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return a;
}

// Splits a shape around `axis` into [outer, n, inner].
struct AxisSplit {
  std::int64_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  for (int i = 0; i < axis; ++i) r.outer *= s[static_cast<std::size_t>(i)];
  r.n = s[static_cast<std::size_t>(axis)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

Shape reduced_shape(const Shape& s, int axis, bool keepdim) {
  Shape out = s;
  if (keepdim) {
    out[static_cast<std::size_t>(axis)] = 1;
  } else {
    out.erase(out.begin() + axis);
  }
  return out;
}

template <typename T>
void accumulate(TensorImpl<T>& in, const T* g) {
  simd::add<T>(in.numel(), in.grad_data(), g, in.grad_data());
}

inline std::int64_t reflect(std::int64_t i, std::int64_t n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * n - 2 - i;
  return i;
}

}  // namespace

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.values()) acc += v;
  return detail::make_result<T>({}, {acc}, {&x}, "sum", [](TensorImpl<T>& out) {
    auto& in = *out.grad_fn->inputs[0];
    const T g = out.grad[0];
    T* gi = in.grad_data();
    for (std::int64_t i = 0; i < in.numel(); ++i) gi[i] += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
  return affine(sum(x), T(1) / static_cast<T>(x.numel()), T(0));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis, bool keepdim) {
  const int a = normalize_axis(axis, x.rank(), "sum");
  const AxisSplit s = split_axis(x.shape(), a);
  std::vector<T> y(static_cast<std::size_t>(s.outer * s.inner), T(0));
  const T* xv = x.impl()->data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    T* dst = y.data() + o * s.inner;
    for (std::int64_t j = 0; j < s.n; ++j) {
      const T* src = xv + (o * s.n + j) * s.inner;
      for (std::int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  return detail::make_result<T>(reduced_shape(x.shape(), a, keepdim), std::move(y), {&x}, "sum_axis",
                                [s](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  const T* g = out.grad.data();
                                  for (std::int64_t o = 0; o < s.outer; ++o) {
                                    for (std::int64_t j = 0; j < s.n; ++j) {
                                      T* dst = gi + (o * s.n + j) * s.inner;
                                      const T* src = g + o * s.inner;
                                      for (std::int64_t i = 0; i < s.inner; ++i) dst[i] += src[i];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis, bool keepdim) {
  const int a = normalize_axis(axis, x.rank(), "mean");
  const std::int64_t n = x.dim(a);
  if (n == 0) throw ShapeError("mean over an empty axis");
  return affine(sum(x, a, keepdim), T(1) / static_cast<T>(n), T(0));
}

template <typename T>
Tensor<T> max(const Tensor<T>& x, int axis, bool keepdim) {
  const int a = normalize_axis(axis, x.rank(), "max");
  const AxisSplit s = split_axis(x.shape(), a);
  if (s.n == 0) throw ShapeError("max over an empty axis");
  std::vector<T> y(static_cast<std::size_t>(s.outer * s.inner));
  auto arg = std::make_shared<std::vector<std::int64_t>>(y.size());
  const T* xv = x.impl()->data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      std::int64_t best = 0;
      T bv = xv[o * s.n * s.inner + i];
      for (std::int64_t j = 1; j < s.n; ++j) {
        const T v = xv[(o * s.n + j) * s.inner + i];
        if (v > bv) {
          bv = v;
          best = j;
        }
      }
      y[static_cast<std::size_t>(o * s.inner + i)] = bv;
      (*arg)[static_cast<std::size_t>(o * s.inner + i)] = best;
    }
  }
  return detail::make_result<T>(reduced_shape(x.shape(), a, keepdim), std::move(y), {&x}, "max",
                                [s, arg](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  for (std::int64_t o = 0; o < s.outer; ++o) {
                                    for (std::int64_t i = 0; i < s.inner; ++i) {
                                      const auto k = static_cast<std::size_t>(o * s.inner + i);
                                      gi[(o * s.n + (*arg)[k]) * s.inner + i] += out.grad[k];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int a = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_axis(x.shape(), a);
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const T* xv = x.impl()->data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    for (std::int64_t i = 0; i < s.inner; ++i) {
      const std::int64_t base = o * s.n * s.inner + i;
      T m = -std::numeric_limits<T>::infinity();
      for (std::int64_t j = 0; j < s.n; ++j) m = std::max(m, xv[base + j * s.inner]);
      T z = T(0);
      for (std::int64_t j = 0; j < s.n; ++j) {
        const T e = std::exp(xv[base + j * s.inner] - m);
        y[static_cast<std::size_t>(base + j * s.inner)] = e;
        z += e;
      }
      for (std::int64_t j = 0; j < s.n; ++j) y[static_cast<std::size_t>(base + j * s.inner)] /= z;
    }
  }
  return detail::make_result<T>(x.shape(), std::move(y), {&x}, "softmax", [s](TensorImpl<T>& out) {
    auto& in = *out.grad_fn->inputs[0];
    T* gi = in.grad_data();
    const T* yv = out.data();
    const T* g = out.grad.data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      for (std::int64_t i = 0; i < s.inner; ++i) {
        const std::int64_t base = o * s.n * s.inner + i;
        T dot = T(0);
        for (std::int64_t j = 0; j < s.n; ++j) dot += g[base + j * s.inner] * yv[base + j * s.inner];
        for (std::int64_t j = 0; j < s.n; ++j) {
          const std::int64_t k = base + j * s.inner;
          gi[k] += yv[k] * (g[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  int infer = -1;
  std::int64_t known = 1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one -1 in " + shape_str(shape));
      infer = static_cast<int>(i);
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || x.numel() % known != 0) {
      throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    shape[static_cast<std::size_t>(infer)] = x.numel() / known;
  }
  return detail::make_view<T>(x, std::move(shape), {&x}, "reshape", [](TensorImpl<T>& out) {
    accumulate(*out.grad_fn->inputs[0], out.grad.data());
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& dims) {
  const int r = x.rank();
  if (static_cast<int>(dims.size()) != r) {
    throw ShapeError("permute: " + std::to_string(dims.size()) + " dims for rank " +
                     std::to_string(r));
  }
  std::vector<int> perm(dims.size());
  std::vector<bool> used(dims.size(), false);
  for (std::size_t i = 0; i < dims.size(); ++i) {
    perm[i] = normalize_axis(dims[i], r, "permute");
    if (used[static_cast<std::size_t>(perm[i])]) throw ShapeError("permute: repeated axis");
    used[static_cast<std::size_t>(perm[i])] = true;
  }
  Shape in_stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) {
    in_stride[static_cast<std::size_t>(i)] =
        in_stride[static_cast<std::size_t>(i) + 1] * x.shape()[static_cast<std::size_t>(i) + 1];
  }
  Shape out_shape(static_cast<std::size_t>(r));
  Shape stride(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) {
    out_shape[static_cast<std::size_t>(i)] = x.shape()[static_cast<std::size_t>(perm[i])];
    stride[static_cast<std::size_t>(i)] = in_stride[static_cast<std::size_t>(perm[i])];
  }
  // Source index for every output element.
  const std::int64_t n = x.numel();
  auto map = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
  std::vector<std::int64_t> counter(static_cast<std::size_t>(r), 0);
  std::int64_t offset = 0;
  for (std::int64_t flat = 0; flat < n; ++flat) {
    (*map)[static_cast<std::size_t>(flat)] = offset;
    for (int d = r - 1; d >= 0; --d) {
      const auto du = static_cast<std::size_t>(d);
      ++counter[du];
      offset += stride[du];
      if (counter[du] < out_shape[du]) break;
      offset -= stride[du] * out_shape[du];
      counter[du] = 0;
    }
  }
  std::vector<T> y(static_cast<std::size_t>(n));
  const T* xv = x.impl()->data();
  for (std::int64_t i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = xv[(*map)[static_cast<std::size_t>(i)]];
  return detail::make_result<T>(std::move(out_shape), std::move(y), {&x}, "permute",
                                [map](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  for (std::size_t i = 0; i < map->size(); ++i) {
                                    gi[(*map)[i]] += out.grad[i];
                                  }
                                });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int a, int b) {
  const int r = x.rank();
  std::vector<int> dims(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) dims[static_cast<std::size_t>(i)] = i;
  std::swap(dims[static_cast<std::size_t>(normalize_axis(a, r, "transpose"))],
            dims[static_cast<std::size_t>(normalize_axis(b, r, "transpose"))]);
  return permute(x, dims);
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const int r = parts[0].rank();
  const int a = normalize_axis(axis, r, "concat");
  Shape out_shape = parts[0].shape();
  std::int64_t total = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == r;
    for (int i = 0; ok && i < r; ++i) {
      if (i != a && p.shape()[static_cast<std::size_t>(i)] != out_shape[static_cast<std::size_t>(i)]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: " + shape_str(p.shape()) + " incompatible with " +
                       shape_str(parts[0].shape()) + " along axis " + std::to_string(axis));
    }
    total += p.dim(a);
  }
  out_shape[static_cast<std::size_t>(a)] = total;
  const AxisSplit s = split_axis(out_shape, a);
  std::vector<T> y(static_cast<std::size_t>(shape_numel(out_shape)));
  auto offsets = std::make_shared<std::vector<std::int64_t>>();
  std::int64_t off = 0;
  for (const auto& p : parts) {
    offsets->push_back(off);
    const std::int64_t len = p.dim(a) * s.inner;
    const T* src = p.impl()->data();
    for (std::int64_t o = 0; o < s.outer; ++o) {
      std::copy(src + o * len, src + (o + 1) * len, y.begin() + o * total * s.inner + off * s.inner);
    }
    off += p.dim(a);
  }
  std::vector<const Tensor<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return detail::make_result<T>(
      std::move(out_shape), std::move(y), inputs, "concat", [s, total, offsets, a](TensorImpl<T>& out) {
        for (std::size_t pi = 0; pi < out.grad_fn->inputs.size(); ++pi) {
          auto& in = *out.grad_fn->inputs[pi];
          if (!in.requires_grad) continue;
          const std::int64_t len = in.shape[static_cast<std::size_t>(a)] * s.inner;
          T* gi = in.grad_data();
          for (std::int64_t o = 0; o < s.outer; ++o) {
            const T* src = out.grad.data() + o * total * s.inner + (*offsets)[pi] * s.inner;
            simd::add<T>(len, gi + o * len, src, gi + o * len);
          }
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t end) {
  const int a = normalize_axis(axis, x.rank(), "slice");
  const std::int64_t n = x.dim(a);
  if (start < 0 || end > n || start > end) {
    throw ShapeError("slice [" + std::to_string(start) + "," + std::to_string(end) +
                     ") out of range for axis of extent " + std::to_string(n));
  }
  const AxisSplit s = split_axis(x.shape(), a);
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(a)] = end - start;
  const std::int64_t len = (end - start) * s.inner;
  std::vector<T> y(static_cast<std::size_t>(s.outer * len));
  const T* xv = x.impl()->data();
  for (std::int64_t o = 0; o < s.outer; ++o) {
    const T* src = xv + (o * n + start) * s.inner;
    std::copy(src, src + len, y.begin() + o * len);
  }
  return detail::make_result<T>(std::move(out_shape), std::move(y), {&x}, "slice",
                                [s, n, start, len](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  for (std::int64_t o = 0; o < s.outer; ++o) {
                                    T* dst = gi + (o * n + start) * s.inner;
                                    simd::add<T>(len, dst, out.grad.data() + o * len, dst);
                                  }
                                });
}

template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int top, int bottom, int left, int right) {
  if (x.rank() < 2 || top < 0 || bottom < 0 || left < 0 || right < 0) {
    throw ShapeError("pad2d needs rank >= 2 and non-negative padding, got " + shape_str(x.shape()));
  }
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  const std::int64_t oh = h + top + bottom, ow = w + left + right;
  const std::int64_t planes = x.numel() / std::max<std::int64_t>(1, h * w);
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  std::vector<T> y(static_cast<std::size_t>(planes * oh * ow), T(0));
  const T* xv = x.impl()->data();
  for (std::int64_t p = 0; p < planes; ++p) {
    for (std::int64_t r = 0; r < h; ++r) {
      std::copy(xv + (p * h + r) * w, xv + (p * h + r + 1) * w,
                y.begin() + (p * oh + r + top) * ow + left);
    }
  }
  return detail::make_result<T>(std::move(out_shape), std::move(y), {&x}, "pad2d",
                                [=](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  for (std::int64_t p = 0; p < planes; ++p) {
                                    for (std::int64_t r = 0; r < h; ++r) {
                                      T* dst = gi + (p * h + r) * w;
                                      const T* src = out.grad.data() + (p * oh + r + top) * ow + left;
                                      simd::add<T>(w, dst, src, dst);
                                    }
                                  }
                                });
}

namespace {

// Source taps for x2 upsampling with half-pixel centres and edge clamping.
struct UpTap {
  std::int64_t i0, i1;
  double l;
};

std::vector<UpTap> upsample_taps(std::int64_t n) {
  std::vector<UpTap> taps(static_cast<std::size_t>(2 * n));
  for (std::int64_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) * 0.5 - 0.5;
    if (src < 0.0) src = 0.0;
    const auto i0 = static_cast<std::int64_t>(std::floor(src));
    const std::int64_t i1 = std::min(i0 + 1, n - 1);
    taps[static_cast<std::size_t>(o)] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& x) {
  if (x.rank() < 2) throw ShapeError("upsample_bilinear2x needs rank >= 2");
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  const std::int64_t planes = x.numel() / std::max<std::int64_t>(1, h * w);
  auto ty = std::make_shared<std::vector<UpTap>>(upsample_taps(h));
  auto tx = std::make_shared<std::vector<UpTap>>(upsample_taps(w));
  const std::int64_t oh = 2 * h, ow = 2 * w;
  Shape out_shape = x.shape();
  out_shape[out_shape.size() - 2] = oh;
  out_shape[out_shape.size() - 1] = ow;
  std::vector<T> y(static_cast<std::size_t>(planes * oh * ow));
  const T* xv = x.impl()->data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = xv + p * h * w;
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      const UpTap& a = (*ty)[static_cast<std::size_t>(oy)];
      const T ly = static_cast<T>(a.l);
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        const UpTap& b = (*tx)[static_cast<std::size_t>(ox)];
        const T lx = static_cast<T>(b.l);
        const T top = (T(1) - lx) * src[a.i0 * w + b.i0] + lx * src[a.i0 * w + b.i1];
        const T bot = (T(1) - lx) * src[a.i1 * w + b.i0] + lx * src[a.i1 * w + b.i1];
        y[static_cast<std::size_t>((p * oh + oy) * ow + ox)] = (T(1) - ly) * top + ly * bot;
      }
    }
  }
  return detail::make_result<T>(
      std::move(out_shape), std::move(y), {&x}, "upsample_bilinear2x", [=](TensorImpl<T>& out) {
        auto& in = *out.grad_fn->inputs[0];
        T* gi = in.grad_data();
        for (std::int64_t p = 0; p < planes; ++p) {
          T* dst = gi + p * h * w;
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            const UpTap& a = (*ty)[static_cast<std::size_t>(oy)];
            const T ly = static_cast<T>(a.l);
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const UpTap& b = (*tx)[static_cast<std::size_t>(ox)];
              const T lx = static_cast<T>(b.l);
              const T g = out.grad[static_cast<std::size_t>((p * oh + oy) * ow + ox)];
              dst[a.i0 * w + b.i0] += g * (T(1) - ly) * (T(1) - lx);
              dst[a.i0 * w + b.i1] += g * (T(1) - ly) * lx;
              dst[a.i1 * w + b.i0] += g * ly * (T(1) - lx);
              dst[a.i1 * w + b.i1] += g * ly * lx;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> box_filter3x3(const Tensor<T>& x) {
  if (x.rank() < 2 || x.dim(-2) < 2 || x.dim(-1) < 2) {
    throw ShapeError("box_filter3x3 needs at least 2x2 planes, got " + shape_str(x.shape()));
  }
  const std::int64_t h = x.dim(-2), w = x.dim(-1);
  const std::int64_t planes = x.numel() / (h * w);
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const T* xv = x.impl()->data();
  const T ninth = T(1) / T(9);
  for (std::int64_t p = 0; p < planes; ++p) {
    const T* src = xv + p * h * w;
    for (std::int64_t r = 0; r < h; ++r) {
      for (std::int64_t c = 0; c < w; ++c) {
        T acc = T(0);
        for (int dy = -1; dy <= 1; ++dy) {
          const std::int64_t rr = reflect(r + dy, h);
          for (int dx = -1; dx <= 1; ++dx) acc += src[rr * w + reflect(c + dx, w)];
        }
        y[static_cast<std::size_t>((p * h + r) * w + c)] = acc * ninth;
      }
    }
  }
  return detail::make_result<T>(x.shape(), std::move(y), {&x}, "box_filter3x3",
                                [planes, h, w, ninth](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  for (std::int64_t p = 0; p < planes; ++p) {
                                    T* dst = gi + p * h * w;
                                    for (std::int64_t r = 0; r < h; ++r) {
                                      for (std::int64_t c = 0; c < w; ++c) {
                                        const T g = out.grad[static_cast<std::size_t>((p * h + r) * w + c)] * ninth;
                                        for (int dy = -1; dy <= 1; ++dy) {
                                          const std::int64_t rr = reflect(r + dy, h);
                                          for (int dx = -1; dx <= 1; ++dx) dst[rr * w + reflect(c + dx, w)] += g;
                                        }
                                      }
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> scatter_add(const Tensor<T>& x, const std::vector<std::int64_t>& idx,
                      std::int64_t out_len) {
  if (x.rank() < 1 || x.dim(-1) != static_cast<std::int64_t>(idx.size())) {
    throw ShapeError("scatter_add: " + std::to_string(idx.size()) + " indices for tensor " +
                     shape_str(x.shape()));
  }
  for (auto i : idx) {
    if (i >= out_len) throw ShapeError("scatter_add: index " + std::to_string(i) + " >= " + std::to_string(out_len));
  }
  const std::int64_t n = x.dim(-1);
  const std::int64_t rows = n == 0 ? 0 : x.numel() / n;
  Shape out_shape = x.shape();
  out_shape.back() = out_len;
  std::vector<T> y(static_cast<std::size_t>(shape_numel(out_shape)), T(0));
  const T* xv = x.impl()->data();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t i = 0; i < n; ++i) {
      const std::int64_t t = idx[static_cast<std::size_t>(i)];
      if (t >= 0) y[static_cast<std::size_t>(r * out_len + t)] += xv[r * n + i];
    }
  }
  auto map = std::make_shared<std::vector<std::int64_t>>(idx);
  return detail::make_result<T>(std::move(out_shape), std::move(y), {&x}, "scatter_add",
                                [map, rows, n, out_len](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                    for (std::int64_t i = 0; i < n; ++i) {
                                      const std::int64_t t = (*map)[static_cast<std::size_t>(i)];
                                      if (t >= 0) gi[r * n + i] += out.grad[static_cast<std::size_t>(r * out_len + t)];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, const std::vector<std::int64_t>& idx) {
  if (x.rank() < 1) throw ShapeError("gather needs rank >= 1");
  const std::int64_t len = x.dim(-1);
  for (auto i : idx) {
    if (i < 0 || i >= len) {
      throw ShapeError("gather: index " + std::to_string(i) + " out of range for extent " +
                       std::to_string(len));
    }
  }
  const auto n = static_cast<std::int64_t>(idx.size());
  const std::int64_t rows = len == 0 ? 0 : x.numel() / len;
  Shape out_shape = x.shape();
  out_shape.back() = n;
  std::vector<T> y(static_cast<std::size_t>(rows * n));
  const T* xv = x.impl()->data();
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t i = 0; i < n; ++i) {
      y[static_cast<std::size_t>(r * n + i)] = xv[r * len + idx[static_cast<std::size_t>(i)]];
    }
  }
  auto map = std::make_shared<std::vector<std::int64_t>>(idx);
  return detail::make_result<T>(std::move(out_shape), std::move(y), {&x}, "gather",
                                [map, rows, n, len](TensorImpl<T>& out) {
                                  auto& in = *out.grad_fn->inputs[0];
                                  T* gi = in.grad_data();
                                  for (std::int64_t r = 0; r < rows; ++r) {
                                    for (std::int64_t i = 0; i < n; ++i) {
                                      gi[r * len + (*map)[static_cast<std::size_t>(i)]] +=
                                          out.grad[static_cast<std::size_t>(r * n + i)];
                                    }
                                  }
                                });
}

template <typename T>
Tensor<T> grid_sample(const Tensor<T>& image, const Tensor<T>& xs, const Tensor<T>& ys) {
  if (image.rank() != 3 || xs.rank() != 1 || ys.shape() != xs.shape()) {
    throw ShapeError("grid_sample expects image [C,H,W] and coordinates [N], got " +
                     shape_str(image.shape()) + ", " + shape_str(xs.shape()) + ", " +
                     shape_str(ys.shape()));
  }
  const std::int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::int64_t n = xs.dim(0);
  struct Tap {
    std::int64_t x0, x1, y0, y1;
    T fx, fy;
    bool in_x, in_y;  // coordinate not clamped, so it carries gradient
  };
  auto taps = std::make_shared<std::vector<Tap>>(static_cast<std::size_t>(n));
  const T* xv = xs.impl()->data();
  const T* yv = ys.impl()->data();
  for (std::int64_t i = 0; i < n; ++i) {
    Tap t{};
    T px = xv[i], py = yv[i];
    t.in_x = px >= T(0) && px <= static_cast<T>(w - 1);
    t.in_y = py >= T(0) && py <= static_cast<T>(h - 1);
    px = std::clamp(px, T(0), static_cast<T>(w - 1));
    py = std::clamp(py, T(0), static_cast<T>(h - 1));
    t.x0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(px)), std::max<std::int64_t>(w - 2, 0));
    t.y0 = std::min<std::int64_t>(static_cast<std::int64_t>(std::floor(py)), std::max<std::int64_t>(h - 2, 0));
    t.x1 = std::min(t.x0 + 1, w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.fx = px - static_cast<T>(t.x0);
    t.fy = py - static_cast<T>(t.y0);
    (*taps)[static_cast<std::size_t>(i)] = t;
  }
  std::vector<T> y(static_cast<std::size_t>(c * n));
  const T* iv = image.impl()->data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const T* plane = iv + ch * h * w;
    for (std::int64_t i = 0; i < n; ++i) {
      const Tap& t = (*taps)[static_cast<std::size_t>(i)];
      const T top = (T(1) - t.fx) * plane[t.y0 * w + t.x0] + t.fx * plane[t.y0 * w + t.x1];
      const T bot = (T(1) - t.fx) * plane[t.y1 * w + t.x0] + t.fx * plane[t.y1 * w + t.x1];
      y[static_cast<std::size_t>(ch * n + i)] = (T(1) - t.fy) * top + t.fy * bot;
    }
  }
  return detail::make_result<T>(
      Shape{c, n}, std::move(y), {&image, &xs, &ys}, "grid_sample",
      [taps, c, h, w, n](TensorImpl<T>& out) {
        auto& ti = *out.grad_fn->inputs[0];
        auto& tx = *out.grad_fn->inputs[1];
        auto& ty = *out.grad_fn->inputs[2];
        const T* iv = ti.data();
        T* gi = ti.requires_grad ? ti.grad_data() : nullptr;
        T* gx = tx.requires_grad ? tx.grad_data() : nullptr;
        T* gy = ty.requires_grad ? ty.grad_data() : nullptr;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const T* plane = iv + ch * h * w;
          for (std::int64_t i = 0; i < n; ++i) {
            const Tap& t = (*taps)[static_cast<std::size_t>(i)];
            const T g = out.grad[static_cast<std::size_t>(ch * n + i)];
            if (g == T(0)) continue;
            const T v00 = plane[t.y0 * w + t.x0], v01 = plane[t.y0 * w + t.x1];
            const T v10 = plane[t.y1 * w + t.x0], v11 = plane[t.y1 * w + t.x1];
            if (gi) {
              T* gp = gi + ch * h * w;
              gp[t.y0 * w + t.x0] += g * (T(1) - t.fy) * (T(1) - t.fx);
              gp[t.y0 * w + t.x1] += g * (T(1) - t.fy) * t.fx;
              gp[t.y1 * w + t.x0] += g * t.fy * (T(1) - t.fx);
              gp[t.y1 * w + t.x1] += g * t.fy * t.fx;
            }
            if (gx && t.in_x && w > 1) {
              gx[i] += g * ((T(1) - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
            }
            if (gy && t.in_y && h > 1) {
              gy[i] += g * ((T(1) - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
            }
          }
        }
      });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  const std::int64_t cdim = x.dim(-1);
  if (gamma.shape() != Shape{cdim} || beta.shape() != Shape{cdim}) {
    throw ShapeError("layernorm: gamma/beta must be [" + std::to_string(cdim) + "], got " +
                     shape_str(gamma.shape()) + " and " + shape_str(beta.shape()));
  }
  const std::int64_t rows = cdim == 0 ? 0 : x.numel() / cdim;
  auto xhat = std::make_shared<std::vector<T>>(static_cast<std::size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  std::vector<T> y(static_cast<std::size_t>(x.numel()));
  const T* xv = x.impl()->data();
  const T* gv = gamma.impl()->data();
  const T* bv = beta.impl()->data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = xv + r * cdim;
    T mu = T(0);
    for (std::int64_t i = 0; i < cdim; ++i) mu += row[i];
    mu /= static_cast<T>(cdim);
    T var = T(0);
    for (std::int64_t i = 0; i < cdim; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(cdim);
    const T is = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(r)] = is;
    for (std::int64_t i = 0; i < cdim; ++i) {
      const auto k = static_cast<std::size_t>(r * cdim + i);
      (*xhat)[k] = (row[i] - mu) * is;
      y[k] = (*xhat)[k] * gv[i] + bv[i];
    }
  }
  return detail::make_result<T>(
      x.shape(), std::move(y), {&x, &gamma, &beta}, "layernorm",
      [xhat, inv_std, rows, cdim](TensorImpl<T>& out) {
        auto& tx = *out.grad_fn->inputs[0];
        auto& tg = *out.grad_fn->inputs[1];
        auto& tb = *out.grad_fn->inputs[2];
        const T* g = out.grad.data();
        const T* gam = tg.data();
        T* gx = tx.requires_grad ? tx.grad_data() : nullptr;
        T* gg = tg.requires_grad ? tg.grad_data() : nullptr;
        T* gb = tb.requires_grad ? tb.grad_data() : nullptr;
        std::vector<T> dxh(static_cast<std::size_t>(cdim));
        for (std::int64_t r = 0; r < rows; ++r) {
          const T* gr = g + r * cdim;
          const T* xh = xhat->data() + r * cdim;
          T m1 = T(0), m2 = T(0);
          for (std::int64_t i = 0; i < cdim; ++i) {
            if (gg) gg[i] += gr[i] * xh[i];
            if (gb) gb[i] += gr[i];
            dxh[static_cast<std::size_t>(i)] = gr[i] * gam[i];
            m1 += dxh[static_cast<std::size_t>(i)];
            m2 += dxh[static_cast<std::size_t>(i)] * xh[i];
          }
          if (!gx) continue;
          m1 /= static_cast<T>(cdim);
          m2 /= static_cast<T>(cdim);
          const T is = (*inv_std)[static_cast<std::size_t>(r)];
          T* dst = gx + r * cdim;
          for (std::int64_t i = 0; i < cdim; ++i) {
            dst[i] += is * (dxh[static_cast<std::size_t>(i)] - m1 - xh[i] * m2);
          }
        }
      });
}

#define NVS_INSTANTIATE(T)                                                                     \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> sum<T>(const Tensor<T>&, int, bool);                                      \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> mean<T>(const Tensor<T>&, int, bool);                                     \
  template Tensor<T> max<T>(const Tensor<T>&, int, bool);                                      \
  template Tensor<T> softmax<T>(const Tensor<T>&, int);                                        \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<int>&);                    \
  template Tensor<T> transpose<T>(const Tensor<T>&, int, int);                                 \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                            \
  template Tensor<T> slice<T>(const Tensor<T>&, int, std::int64_t, std::int64_t);              \
  template Tensor<T> pad2d<T>(const Tensor<T>&, int, int, int, int);                           \
  template Tensor<T> upsample_bilinear2x<T>(const Tensor<T>&);                                 \
  template Tensor<T> box_filter3x3<T>(const Tensor<T>&);                                       \
  template Tensor<T> scatter_add<T>(const Tensor<T>&, const std::vector<std::int64_t>&,        \
                                    std::int64_t);                                             \
  template Tensor<T> gather<T>(const Tensor<T>&, const std::vector<std::int64_t>&);            \
  template Tensor<T> grid_sample<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> layernorm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);

NVS_INSTANTIATE(float)
NVS_INSTANTIATE(double)
#undef NVS_INSTANTIATE

}  // namespace nvs
