#include <algorithm>

#include "nvs/ops.hpp"
#include "nvs/simd/kernels.hpp"

namespace nvs {
namespace {

struct MatmulPlan {
  std::int64_t m = 0, n = 0, k = 0;
  Shape batch;
  std::vector<std::int64_t> a_batch;  // matrix index into a for each output batch entry
  std::vector<std::int64_t> b_batch;
};

std::vector<std::int64_t> batch_map(const Shape& in, const Shape& out) {
  // Same odometer as elementwise broadcasting, over batch dims only.
  const std::size_t r = out.size();
  std::vector<std::int64_t> stride(r, 0);
  std::int64_t s = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t src = in.size() - 1 - i;
    const std::size_t dst = r - 1 - i;
    stride[dst] = in[src] == 1 ? 0 : s;
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
      offset += stride[d];
      if (counter[d] < out[d]) break;
      offset -= stride[d] * out[d];
      counter[d] = 0;
    }
  }
  return map;
}

template <typename T>
void im2col(const T* x, std::int64_t c, std::int64_t h, std::int64_t w, int kh, int kw,
            int stride, int pad, std::int64_t oh, std::int64_t ow, T* cols) {
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = cols + ((ch * kh + ki) * kw + kj) * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * stride - pad + ki;
          T* dst = row + oy * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* src = x + (ch * h + iy) * w;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * stride - pad + kj;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::int64_t c, std::int64_t h, std::int64_t w, int kh, int kw,
            int stride, int pad, std::int64_t oh, std::int64_t ow, T* x) {
  for (std::int64_t ch = 0; ch < c; ++ch) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = cols + ((ch * kh + ki) * kw + kj) * oh * ow;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          T* dst = x + (ch * h + iy) * w;
          const T* src = row + oy * ow;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a, bool trans_b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul needs rank >= 2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  auto plan = std::make_shared<MatmulPlan>();
  const std::int64_t a0 = a.dim(-2), a1 = a.dim(-1), b0 = b.dim(-2), b1 = b.dim(-1);
  plan->m = trans_a ? a1 : a0;
  plan->k = trans_a ? a0 : a1;
  const std::int64_t kb = trans_b ? b1 : b0;
  plan->n = trans_b ? b0 : b1;
  if (plan->k != kb) {
    throw ShapeError("matmul inner dimension mismatch: " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const Shape a_batch(a.shape().begin(), a.shape().end() - 2);
  const Shape b_batch(b.shape().begin(), b.shape().end() - 2);
  plan->batch = broadcast_shapes(a_batch, b_batch);
  plan->a_batch = batch_map(a_batch, plan->batch);
  plan->b_batch = batch_map(b_batch, plan->batch);
  const std::int64_t m = plan->m, n = plan->n, k = plan->k;
  const std::int64_t batches = shape_numel(plan->batch);
  std::vector<T> y(static_cast<std::size_t>(batches * m * n));
  const T* av = a.impl()->data();
  const T* bv = b.impl()->data();
  for (std::int64_t i = 0; i < batches; ++i) {
    simd::gemm<T>(trans_a, trans_b, m, n, k, T(1), av + plan->a_batch[i] * m * k, a1,
                  bv + plan->b_batch[i] * k * n, b1, T(0), y.data() + i * m * n, n);
  }
  Shape out_shape = plan->batch;
  out_shape.push_back(m);
  out_shape.push_back(n);
  return detail::make_result<T>(
      std::move(out_shape), std::move(y), {&a, &b}, "matmul",
      [plan, trans_a, trans_b, a1, b1](TensorImpl<T>& out) {
        auto& ta = *out.grad_fn->inputs[0];
        auto& tb = *out.grad_fn->inputs[1];
        const std::int64_t m = plan->m, n = plan->n, k = plan->k;
        const T* g = out.grad.data();
        const T* av = ta.data();
        const T* bv = tb.data();
        const std::int64_t batches = static_cast<std::int64_t>(plan->a_batch.size());
        if (ta.requires_grad) {
          T* ga = ta.grad_data();
          for (std::int64_t i = 0; i < batches; ++i) {
            const T* gi = g + i * m * n;
            const T* bi = bv + plan->b_batch[i] * k * n;
            T* gai = ga + plan->a_batch[i] * m * k;
            if (!trans_a) {
              simd::gemm<T>(false, !trans_b, m, k, n, T(1), gi, n, bi, b1, T(1), gai, k);
            } else {
              simd::gemm<T>(trans_b, true, k, m, n, T(1), bi, b1, gi, n, T(1), gai, m);
            }
          }
        }
        if (tb.requires_grad) {
          T* gb = tb.grad_data();
          for (std::int64_t i = 0; i < batches; ++i) {
            const T* gi = g + i * m * n;
            const T* ai = av + plan->a_batch[i] * m * k;
            T* gbi = gb + plan->b_batch[i] * k * n;
            if (!trans_b) {
              simd::gemm<T>(!trans_a, false, k, n, m, T(1), ai, a1, gi, n, T(1), gbi, n);
            } else {
              simd::gemm<T>(true, trans_a, n, k, m, T(1), gi, n, ai, a1, T(1), gbi, k);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                 int padding) {
  const bool batched = x.rank() == 4;
  if ((x.rank() != 3 && x.rank() != 4) || w.rank() != 4) {
    throw ShapeError("conv2d expects x [C,H,W] or [B,C,H,W] and w [O,C,kh,kw], got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  const std::int64_t batch = batched ? x.dim(0) : 1;
  const std::int64_t c = x.dim(-3), h = x.dim(-2), wd = x.dim(-1);
  const std::int64_t o = w.dim(0);
  const int kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
  if (w.dim(1) != c) {
    throw ShapeError("conv2d channel mismatch: input " + shape_str(x.shape()) + ", kernel " +
                     shape_str(w.shape()));
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d needs stride >= 1 and padding >= 0");
  if (kh > h + 2 * padding || kw > wd + 2 * padding) {
    throw ShapeError("conv2d kernel " + shape_str(w.shape()) + " larger than padded input " +
                     shape_str(x.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != o)) {
    throw ShapeError("conv2d bias must be [" + std::to_string(o) + "], got " +
                     shape_str(bias.shape()));
  }
  const std::int64_t oh = (h + 2 * padding - kh) / stride + 1;
  const std::int64_t ow = (wd + 2 * padding - kw) / stride + 1;
  const std::int64_t ckk = c * kh * kw;
  const std::int64_t hw = oh * ow;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && padding == 0;
  std::vector<T> y(static_cast<std::size_t>(batch * o * hw));
  std::vector<T> cols(pointwise ? 0 : static_cast<std::size_t>(ckk * hw));
  const T* xv = x.impl()->data();
  const T* wv = w.impl()->data();
  for (std::int64_t bi = 0; bi < batch; ++bi) {
    const T* xb = xv + bi * c * h * wd;
    const T* src = xb;
    if (!pointwise) {
      im2col(xb, c, h, wd, kh, kw, stride, padding, oh, ow, cols.data());
      src = cols.data();
    }
    T* yb = y.data() + bi * o * hw;
    simd::gemm<T>(false, false, o, hw, ckk, T(1), wv, ckk, src, hw, T(0), yb, hw);
    if (bias.defined()) {
      const T* bv = bias.impl()->data();
      for (std::int64_t oc = 0; oc < o; ++oc) {
        T* row = yb + oc * hw;
        for (std::int64_t i = 0; i < hw; ++i) row[i] += bv[oc];
      }
    }
  }
  Shape out_shape = batched ? Shape{batch, o, oh, ow} : Shape{o, oh, ow};
  std::vector<const Tensor<T>*> inputs{&x, &w};
  if (bias.defined()) inputs.push_back(&bias);
  return detail::make_result<T>(
      std::move(out_shape), std::move(y), inputs, "conv2d",
      [=](TensorImpl<T>& out) {
        auto& tx = *out.grad_fn->inputs[0];
        auto& tw = *out.grad_fn->inputs[1];
        TensorImpl<T>* tb = out.grad_fn->inputs.size() > 2 ? out.grad_fn->inputs[2].get() : nullptr;
        const T* g = out.grad.data();
        std::vector<T> buf(pointwise ? 0 : static_cast<std::size_t>(ckk * hw));
        for (std::int64_t bi = 0; bi < batch; ++bi) {
          const T* gb = g + bi * o * hw;
          const T* xb = tx.data() + bi * c * h * wd;
          if (tw.requires_grad) {
            const T* src = xb;
            if (!pointwise) {
              im2col(xb, c, h, wd, kh, kw, stride, padding, oh, ow, buf.data());
              src = buf.data();
            }
            simd::gemm<T>(false, true, o, ckk, hw, T(1), gb, hw, src, hw, T(1), tw.grad_data(),
                          ckk);
          }
          if (tx.requires_grad) {
            T* gx = tx.grad_data() + bi * c * h * wd;
            if (pointwise) {
              simd::gemm<T>(true, false, ckk, hw, o, T(1), tw.data(), ckk, gb, hw, T(1), gx, hw);
            } else {
              simd::gemm<T>(true, false, ckk, hw, o, T(1), tw.data(), ckk, gb, hw, T(0),
                            buf.data(), hw);
              col2im(buf.data(), c, h, wd, kh, kw, stride, padding, oh, ow, gx);
            }
          }
          if (tb && tb->requires_grad) {
            T* gbias = tb->grad_data();
            for (std::int64_t oc = 0; oc < o; ++oc) {
              const T* row = gb + oc * hw;
              T acc = T(0);
              for (std::int64_t i = 0; i < hw; ++i) acc += row[i];
              gbias[oc] += acc;
            }
          }
        }
      });
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           int padding) {
  if (x.rank() != 3 || w.rank() != 4 || w.dim(1) != 1 || w.dim(0) != x.dim(0) ||
      w.dim(2) != w.dim(3)) {
    throw ShapeError("depthwise_conv2d expects x [C,H,W] and w [C,1,k,k], got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  }
  const std::int64_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int k = static_cast<int>(w.dim(2));
  const std::int64_t oh = h + 2 * padding - k + 1;
  const std::int64_t ow = wd + 2 * padding - k + 1;
  if (oh < 1 || ow < 1) throw ShapeError("depthwise_conv2d kernel larger than padded input");
  std::vector<T> y(static_cast<std::size_t>(c * oh * ow), T(0));
  const T* xv = x.impl()->data();
  const T* wv = w.impl()->data();
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const T b = bias.defined() ? bias.impl()->data()[ch] : T(0);
    for (std::int64_t oy = 0; oy < oh; ++oy) {
      for (std::int64_t ox = 0; ox < ow; ++ox) {
        T acc = b;
        for (int ki = 0; ki < k; ++ki) {
          const std::int64_t iy = oy - padding + ki;
          if (iy < 0 || iy >= h) continue;
          for (int kj = 0; kj < k; ++kj) {
            const std::int64_t ix = ox - padding + kj;
            if (ix < 0 || ix >= wd) continue;
            acc += wv[(ch * k + ki) * k + kj] * xv[(ch * h + iy) * wd + ix];
          }
        }
        y[(ch * oh + oy) * ow + ox] = acc;
      }
    }
  }
  std::vector<const Tensor<T>*> inputs{&x, &w};
  if (bias.defined()) inputs.push_back(&bias);
  return detail::make_result<T>(
      Shape{c, oh, ow}, std::move(y), inputs, "depthwise_conv2d", [=](TensorImpl<T>& out) {
        auto& tx = *out.grad_fn->inputs[0];
        auto& tw = *out.grad_fn->inputs[1];
        TensorImpl<T>* tb = out.grad_fn->inputs.size() > 2 ? out.grad_fn->inputs[2].get() : nullptr;
        const T* g = out.grad.data();
        const T* xs = tx.data();
        const T* ws = tw.data();
        T* gx = tx.requires_grad ? tx.grad_data() : nullptr;
        T* gw = tw.requires_grad ? tw.grad_data() : nullptr;
        T* gbias = (tb && tb->requires_grad) ? tb->grad_data() : nullptr;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          for (std::int64_t oy = 0; oy < oh; ++oy) {
            for (std::int64_t ox = 0; ox < ow; ++ox) {
              const T gv = g[(ch * oh + oy) * ow + ox];
              if (gbias) gbias[ch] += gv;
              for (int ki = 0; ki < k; ++ki) {
                const std::int64_t iy = oy - padding + ki;
                if (iy < 0 || iy >= h) continue;
                for (int kj = 0; kj < k; ++kj) {
                  const std::int64_t ix = ox - padding + kj;
                  if (ix < 0 || ix >= wd) continue;
                  const std::int64_t xi = (ch * h + iy) * wd + ix;
                  const std::int64_t wi = (ch * k + ki) * k + kj;
                  if (gx) gx[xi] += gv * ws[wi];
                  if (gw) gw[wi] += gv * xs[xi];
                }
              }
            }
          }
        }
      });
}

#define NVS_INSTANTIATE(T)                                                                    \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&, bool, bool);               \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int,     \
                               int);                                                          \
  template Tensor<T> depthwise_conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                         int);

NVS_INSTANTIATE(float)
NVS_INSTANTIATE(double)
#undef NVS_INSTANTIATE

}  // namespace nvs
