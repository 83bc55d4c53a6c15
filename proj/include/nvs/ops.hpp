#pragma once

// Differentiable tensor operations. All ops are templates over float/double
// and are explicitly instantiated for both.
//
// Broadcasting aligns trailing dimensions; an extent of 1 stretches.

#include <cstdint>
#include <vector>

#include "nvs/tensor.hpp"

namespace nvs {

enum class UnaryOp { kNeg, kExp, kLog, kAbs, kGelu, kRelu, kSigmoid, kTanh, kSqrt, kSquare };
enum class BinaryOp { kAdd, kSub, kMul, kDiv, kMin, kMax };

Shape broadcast_shapes(const Shape& a, const Shape& b);

template <typename T>
Tensor<T> unary(UnaryOp op, const Tensor<T>& x);
/// Elementwise binary with broadcasting. kMin/kMax send ties to `a`.
template <typename T>
Tensor<T> binary(BinaryOp op, const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> neg(const Tensor<T>& x) { return unary(UnaryOp::kNeg, x); }
template <typename T> Tensor<T> exp(const Tensor<T>& x) { return unary(UnaryOp::kExp, x); }
template <typename T> Tensor<T> log(const Tensor<T>& x) { return unary(UnaryOp::kLog, x); }
template <typename T> Tensor<T> abs(const Tensor<T>& x) { return unary(UnaryOp::kAbs, x); }
/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x) { return unary(UnaryOp::kGelu, x); }
template <typename T> Tensor<T> relu(const Tensor<T>& x) { return unary(UnaryOp::kRelu, x); }
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x) { return unary(UnaryOp::kSigmoid, x); }
template <typename T> Tensor<T> tanh(const Tensor<T>& x) { return unary(UnaryOp::kTanh, x); }
template <typename T> Tensor<T> sqrt(const Tensor<T>& x) { return unary(UnaryOp::kSqrt, x); }
template <typename T> Tensor<T> square(const Tensor<T>& x) { return unary(UnaryOp::kSquare, x); }

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary(BinaryOp::kAdd, a, b); }
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) { return binary(BinaryOp::kSub, a, b); }
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary(BinaryOp::kMul, a, b); }
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) { return binary(BinaryOp::kDiv, a, b); }
template <typename T>
Tensor<T> minimum(const Tensor<T>& a, const Tensor<T>& b) { return binary(BinaryOp::kMin, a, b); }
template <typename T>
Tensor<T> maximum(const Tensor<T>& a, const Tensor<T>& b) { return binary(BinaryOp::kMax, a, b); }

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }
template <typename T>
Tensor<T> operator/(const Tensor<T>& a, const Tensor<T>& b) { return div(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a) { return neg(a); }

/// x * s + o with constant scalars; one recorded op.
template <typename T>
Tensor<T> affine(const Tensor<T>& x, T scale, T offset);
template <typename T>
Tensor<T> operator*(const Tensor<T>& x, T s) { return affine(x, s, T(0)); }
template <typename T>
Tensor<T> operator*(T s, const Tensor<T>& x) { return affine(x, s, T(0)); }
template <typename T>
Tensor<T> operator+(const Tensor<T>& x, T o) { return affine(x, T(1), o); }

/// max(x, floor); gradient is zero where clamped.
template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor);

/// op(a) @ op(b) over the last two dims; leading dims broadcast.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false);

/// x: [C,H,W] or [B,C,H,W]; w: [O,C,kh,kw]; bias: [O] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int stride,
                 int padding);
/// Per-channel stride-1 convolution. x: [C,H,W]; w: [C,1,k,k] with odd k.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           int padding);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);
template <typename T>
Tensor<T> sum(const Tensor<T>& x, int axis, bool keepdim = false);
template <typename T>
Tensor<T> mean(const Tensor<T>& x);
template <typename T>
Tensor<T> mean(const Tensor<T>& x, int axis, bool keepdim = false);
/// Subgradient goes to the first maximal index.
template <typename T>
Tensor<T> max(const Tensor<T>& x, int axis, bool keepdim = false);
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis = -1);

/// Storage-sharing reshape; one extent may be -1.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);
template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& dims);
template <typename T>
Tensor<T> transpose(const Tensor<T>& x, int a, int b);
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);
/// [start, end) along axis.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, std::int64_t start, std::int64_t end);
/// Zero padding of the last two dims.
template <typename T>
Tensor<T> pad2d(const Tensor<T>& x, int top, int bottom, int left, int right);
/// x2 bilinear upsampling of the last two dims (half-pixel centres, edge clamp).
template <typename T>
Tensor<T> upsample_bilinear2x(const Tensor<T>& x);
/// 3x3 mean filter of the last two dims with reflection padding (needs H, W >= 2).
template <typename T>
Tensor<T> box_filter3x3(const Tensor<T>& x);

/// out[..., idx[i]] += x[..., i]; negative indices are dropped. Differentiable
/// wrt x only.
template <typename T>
Tensor<T> scatter_add(const Tensor<T>& x, const std::vector<std::int64_t>& idx,
                      std::int64_t out_len);
/// out[..., i] = x[..., idx[i]].
template <typename T>
Tensor<T> gather(const Tensor<T>& x, const std::vector<std::int64_t>& idx);
/// Bilinear lookup of image [C,H,W] at pixel coordinates (xs[i], ys[i]), clamped
/// to the border. Returns [C,N]; differentiable wrt image and coordinates.
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& image, const Tensor<T>& xs, const Tensor<T>& ys);

/// Normalizes the last axis, then applies gamma/beta of shape [C].
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                    T eps = T(1e-5));

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return x.detach();
}

}  // namespace nvs
