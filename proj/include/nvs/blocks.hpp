#pragma once

// Network building blocks over Tensor<T>. Feature maps are [C,H,W]; attention
// works on token rows [n,C].

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nvs/ops.hpp"
#include "nvs/rng.hpp"

namespace nvs {

enum class Init {
  kZeros,
  kOnes,
  kTruncNormal,  // std 0.02, truncated at 2 std
  kFanIn,        // normal, std 1/sqrt(fan_in)
  kInducing,     // normal, std 1/sqrt(last extent)
};

/// Named, ordered trainable tensors. Names are unique; registration order is
/// the order of every serialization and optimizer pass.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, const Shape& shape, Init init, Rng& rng,
                std::int64_t fan_in = 0);
  const Tensor<T>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Tensor<T>>& tensors() const { return tensors_; }
  std::int64_t count() const;
  void zero_grad();
  void set_trainable(bool on);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
  std::map<std::string, std::size_t> index_;
};

/// y = x W + b with W [in,out].
template <typename T>
struct Linear {
  Tensor<T> w, b;
  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng,
         Init init = Init::kTruncNormal, bool bias = true);
  /// x [n,in] -> [n,out]
  Tensor<T> tokens(const Tensor<T>& x) const;
  /// Per-pixel: x [in,H,W] -> [out,H,W]
  Tensor<T> map(const Tensor<T>& x) const;
};

template <typename T>
struct Conv {
  Tensor<T> w, b;
  int stride = 1, padding = 0;
  Conv() = default;
  Conv(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t out, int kernel,
       int stride, int padding, Rng& rng, Init init = Init::kFanIn);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

template <typename T>
struct LayerNorm {
  Tensor<T> gamma, beta;
  LayerNorm() = default;
  LayerNorm(ParamStore<T>& ps, const std::string& name, std::int64_t dim, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const { return layernorm(x, gamma, beta); }
};

/// Two linear layers with GELU between.
template <typename T>
struct Mlp2 {
  Linear<T> fc1, fc2;
  Mlp2() = default;
  Mlp2(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t hidden,
       std::int64_t out, Rng& rng, Init last = Init::kTruncNormal);
  Tensor<T> tokens(const Tensor<T>& x) const { return fc2.tokens(gelu(fc1.tokens(x))); }
};

/// Multi-head softmax attention with query/key/value/output projections.
template <typename T>
struct Attention {
  Linear<T> q, k, v, o;
  int heads = 4;
  Attention() = default;
  Attention(ParamStore<T>& ps, const std::string& name, std::int64_t dim, int heads, Rng& rng);
  /// x [n,d] attends over y [k,d] -> [n,d]
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& y) const;
};

/// Mix-FFN: 1x1 (C -> 2C), depthwise 3x3, GELU, 1x1 (2C -> C, zero-initialized).
template <typename T>
struct MixFfn {
  Linear<T> fc1, fc2;
  Tensor<T> dw, dw_b;
  MixFfn() = default;
  MixFfn(ParamStore<T>& ps, const std::string& name, std::int64_t dim, Rng& rng);
  /// Branch only, x [C,H,W] -> [C,H,W].
  Tensor<T> branch(const Tensor<T>& x) const;
  /// Branch plus residual.
  Tensor<T> operator()(const Tensor<T>& x) const { return add(x, branch(x)); }
};

/// MAB(X, Y) = LN(H + rFF(H)), H = LN(X + Attention(X, Y)); rFF = Linear(d,2d), GELU, Linear(2d,d).
template <typename T>
struct Mab {
  Attention<T> attn;
  LayerNorm<T> ln1, ln2;
  Mlp2<T> rff;
  Mab() = default;
  Mab(ParamStore<T>& ps, const std::string& name, std::int64_t dim, int heads, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& y) const;
};

/// ISAB_m(X) = MAB(X, MAB(I, X)) with m learned inducing points I.
template <typename T>
struct Isab {
  Tensor<T> inducing;  // [m,d]
  Mab<T> mab_in, mab_out;
  Isab() = default;
  Isab(ParamStore<T>& ps, const std::string& name, std::int64_t dim, std::int64_t m, int heads,
       Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Window offsets (dy, dx) of an r x r window without the centre, in table order.
std::vector<std::pair<int, int>> window_offsets(int r);

/// Local set attention over an r x r window with a hashed relative encoding.
template <typename T>
struct LocalSetAttention {
  Mlp2<T> abs_enc;    // delta_local^abs: 3 -> 32
  Tensor<T> rel;      // delta_local^rel: [r*r - 1, 32], rows follow window_offsets(r)
  Linear<T> psi;      // C + 32 -> 32
  Linear<T> phi;      // C + 32 -> C
  int r = 5;
  LocalSetAttention() = default;
  LocalSetAttention(ParamStore<T>& ps, const std::string& name, std::int64_t dim, int r,
                    Rng& rng);
  /// f [C,H,W]; x_local [3,H,W] holds X_w - X_img per pixel.
  Tensor<T> operator()(const Tensor<T>& f, const Tensor<T>& x_local) const;
};

/// Pre-activation residual block: [x2 bilinear] -> GELU -> conv3 -> GELU -> conv3 (+ skip).
template <typename T>
struct ResNetBlock {
  Conv<T> conv1, conv2, skip;
  bool upsample = false;
  bool has_skip_conv = false;
  ResNetBlock() = default;
  ResNetBlock(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t out,
              bool upsample, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// Overlapping patch embedding: conv7 s2 -> GELU -> conv3 s2 (x4 downsampling).
template <typename T>
struct PatchEmbed {
  Conv<T> conv1, conv2;
  PatchEmbed() = default;
  PatchEmbed(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t out,
             Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
};

/// [C,H,W] <-> [H*W,C]
template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& x);
template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& x, std::int64_t h, std::int64_t w);

}  // namespace nvs
