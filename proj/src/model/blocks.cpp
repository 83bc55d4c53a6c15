#include "nvs/blocks.hpp"

#include <cmath>
#include <stdexcept>

#include "nvs/errors.hpp"

namespace nvs {

template <typename T>
Tensor<T> ParamStore<T>::add(const std::string& name, const Shape& shape, Init init, Rng& rng,
                             std::int64_t fan_in) {
  if (index_.count(name)) throw std::logic_error("duplicate parameter name " + name);
  std::vector<T> v(static_cast<std::size_t>(shape_numel(shape)));
  switch (init) {
    case Init::kZeros: break;
    case Init::kOnes:
      for (auto& x : v) x = T(1);
      break;
    case Init::kTruncNormal:
      for (auto& x : v) x = static_cast<T>(rng.trunc_normal(0.02));
      break;
    case Init::kFanIn: {
      const double sd = 1.0 / std::sqrt(static_cast<double>(std::max<std::int64_t>(fan_in, 1)));
      for (auto& x : v) x = static_cast<T>(rng.normal(0.0, sd));
      break;
    }
    case Init::kInducing: {
      const double sd = 1.0 / std::sqrt(static_cast<double>(shape.back()));
      for (auto& x : v) x = static_cast<T>(rng.normal(0.0, sd));
      break;
    }
  }
  auto t = Tensor<T>::from_data(shape, std::move(v));
  t.set_requires_grad(true);
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(t);
  return t;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no parameter named " + name);
  return tensors_[it->second];
}

template <typename T>
std::int64_t ParamStore<T>::count() const {
  std::int64_t n = 0;
  for (const auto& t : tensors_) n += t.numel();
  return n;
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

template <typename T>
void ParamStore<T>::set_trainable(bool on) {
  for (auto& t : tensors_) t.set_requires_grad(on);
}

template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& x) {
  return transpose(reshape(x, {x.dim(0), x.dim(1) * x.dim(2)}), 0, 1);
}

template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& x, std::int64_t h, std::int64_t w) {
  return reshape(transpose(x, 0, 1), {x.dim(1), h, w});
}

template <typename T>
Linear<T>::Linear(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t out,
                  Rng& rng, Init init, bool bias) {
  w = ps.add(name + ".w", {in, out}, init, rng, in);
  if (bias) b = ps.add(name + ".b", {out}, Init::kZeros, rng);
}

template <typename T>
Tensor<T> Linear<T>::tokens(const Tensor<T>& x) const {
  Tensor<T> y = matmul(x, w);
  return b.defined() ? add(y, b) : y;
}

template <typename T>
Tensor<T> Linear<T>::map(const Tensor<T>& x) const {
  const std::int64_t h = x.dim(1), wd = x.dim(2);
  // W^T [out,in] @ x [in,HW]
  Tensor<T> y = matmul(w, reshape(x, {x.dim(0), h * wd}), true, false);
  if (b.defined()) y = add(y, reshape(b, {b.dim(0), 1}));
  return reshape(y, {w.dim(1), h, wd});
}

template <typename T>
Conv<T>::Conv(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t out,
              int kernel, int stride_, int padding_, Rng& rng, Init init)
    : stride(stride_), padding(padding_) {
  w = ps.add(name + ".w", {out, in, kernel, kernel}, init, rng, in * kernel * kernel);
  b = ps.add(name + ".b", {out}, Init::kZeros, rng);
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return conv2d(x, w, b, stride, padding);
}

template <typename T>
LayerNorm<T>::LayerNorm(ParamStore<T>& ps, const std::string& name, std::int64_t dim, Rng& rng) {
  gamma = ps.add(name + ".gamma", {dim}, Init::kOnes, rng);
  beta = ps.add(name + ".beta", {dim}, Init::kZeros, rng);
}

template <typename T>
Mlp2<T>::Mlp2(ParamStore<T>& ps, const std::string& name, std::int64_t in, std::int64_t hidden,
              std::int64_t out, Rng& rng, Init last)
    : fc1(ps, name + ".fc1", in, hidden, rng), fc2(ps, name + ".fc2", hidden, out, rng, last) {}

template <typename T>
Attention<T>::Attention(ParamStore<T>& ps, const std::string& name, std::int64_t dim, int heads_,
                        Rng& rng)
    : q(ps, name + ".q", dim, dim, rng),
      k(ps, name + ".k", dim, dim, rng),
      v(ps, name + ".v", dim, dim, rng),
      o(ps, name + ".o", dim, dim, rng),
      heads(heads_) {
  if (dim % heads_ != 0) {
    throw ShapeError("attention width " + std::to_string(dim) + " not divisible by " +
                     std::to_string(heads_) + " heads");
  }
}

template <typename T>
Tensor<T> Attention<T>::operator()(const Tensor<T>& x, const Tensor<T>& y) const {
  const std::int64_t d = q.w.dim(0);
  if (x.rank() != 2 || y.rank() != 2 || x.dim(1) != d || y.dim(1) != d) {
    throw ShapeError("attention expects [n," + std::to_string(d) + "] rows, got " +
                     shape_str(x.shape()) + " and " + shape_str(y.shape()));
  }
  const std::int64_t n = x.dim(0), m = y.dim(0), dh = d / heads;
  auto split = [&](const Tensor<T>& t, std::int64_t rows) {
    return permute(reshape(t, {rows, heads, dh}), {1, 0, 2});  // [h,rows,dh]
  };
  const Tensor<T> qh = split(q.tokens(x), n);
  const Tensor<T> kh = split(k.tokens(y), m);
  const Tensor<T> vh = split(v.tokens(y), m);
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Tensor<T> att = softmax(affine(matmul(qh, kh, false, true), scale, T(0)), -1);  // [h,n,m]
  const Tensor<T> ctx = reshape(permute(matmul(att, vh), {1, 0, 2}), {n, d});
  return o.tokens(ctx);
}

template <typename T>
MixFfn<T>::MixFfn(ParamStore<T>& ps, const std::string& name, std::int64_t dim, Rng& rng)
    : fc1(ps, name + ".fc1", dim, 2 * dim, rng) {
  dw = ps.add(name + ".dw.w", {2 * dim, 1, 3, 3}, Init::kFanIn, rng, 9);
  dw_b = ps.add(name + ".dw.b", {2 * dim}, Init::kZeros, rng);
  fc2 = Linear<T>(ps, name + ".fc2", 2 * dim, dim, rng, Init::kZeros);
}

template <typename T>
Tensor<T> MixFfn<T>::branch(const Tensor<T>& x) const {
  return fc2.map(gelu(depthwise_conv2d(fc1.map(x), dw, dw_b, 1)));
}

template <typename T>
Mab<T>::Mab(ParamStore<T>& ps, const std::string& name, std::int64_t dim, int heads, Rng& rng)
    : attn(ps, name + ".attn", dim, heads, rng),
      ln1(ps, name + ".ln1", dim, rng),
      ln2(ps, name + ".ln2", dim, rng),
      rff(ps, name + ".rff", dim, 2 * dim, dim, rng, Init::kZeros) {}

template <typename T>
Tensor<T> Mab<T>::operator()(const Tensor<T>& x, const Tensor<T>& y) const {
  const Tensor<T> h = ln1(add(x, attn(x, y)));
  return ln2(add(h, rff.tokens(h)));
}

template <typename T>
Isab<T>::Isab(ParamStore<T>& ps, const std::string& name, std::int64_t dim, std::int64_t m,
              int heads, Rng& rng) {
  inducing = ps.add(name + ".inducing", {m, dim}, Init::kInducing, rng);
  mab_in = Mab<T>(ps, name + ".mab_in", dim, heads, rng);
  mab_out = Mab<T>(ps, name + ".mab_out", dim, heads, rng);
}

template <typename T>
Tensor<T> Isab<T>::operator()(const Tensor<T>& x) const {
  const Tensor<T> g = mab_in(inducing, x);
  return mab_out(x, g);
}

std::vector<std::pair<int, int>> window_offsets(int r) {
  if (r < 3 || r % 2 == 0) throw DomainError("local window size must be odd and >= 3");
  const int h = r / 2;
  std::vector<std::pair<int, int>> out;
  for (int dy = -h; dy <= h; ++dy) {
    for (int dx = -h; dx <= h; ++dx) {
      if (dy != 0 || dx != 0) out.emplace_back(dy, dx);
    }
  }
  return out;
}

template <typename T>
LocalSetAttention<T>::LocalSetAttention(ParamStore<T>& ps, const std::string& name,
                                        std::int64_t dim, int r_, Rng& rng)
    : r(r_) {
  const auto offsets = window_offsets(r_);
  abs_enc = Mlp2<T>(ps, name + ".abs", 3, 32, 32, rng);
  rel = ps.add(name + ".rel", {static_cast<std::int64_t>(offsets.size()), 32}, Init::kInducing, rng);
  psi = Linear<T>(ps, name + ".psi", dim + 32, 32, rng);
  phi = Linear<T>(ps, name + ".phi", dim + 32, dim, rng);
}

template <typename T>
Tensor<T> LocalSetAttention<T>::operator()(const Tensor<T>& f, const Tensor<T>& x_local) const {
  const std::int64_t h = f.dim(1), w = f.dim(2);
  if (x_local.shape() != Shape{3, h, w}) {
    throw ShapeError("local attention coordinates " + shape_str(x_local.shape()) +
                     " do not match features " + shape_str(f.shape()));
  }
  const std::int64_t hw = h * w;
  const Tensor<T> enc = abs_enc.tokens(map_to_tokens(x_local));           // [HW,32]
  const Tensor<T> l = concat<T>({map_to_tokens(f), enc}, 1);              // [HW,C+32]
  const Tensor<T> a = psi.tokens(l);                                      // [HW,32]
  const Tensor<T> values = tokens_to_map(phi.tokens(l), h, w);            // [C,H,W]
  // Cosine similarity of every pixel against every table row: [K,HW].
  const Tensor<T> dots = matmul(rel, a, false, true);
  const Tensor<T> na = reshape(sum(square(a), 1), {1, hw});
  const Tensor<T> nr = sum(square(rel), 1, true);                         // [K,1]
  const T eps = T(1e-8);
  const Tensor<T> corr = div(dots, sqrt(clamp_min(mul(nr, na), eps * eps)));
  const int half = r / 2;
  const Tensor<T> padded = pad2d(values, half, half, half, half);
  const auto offsets = window_offsets(r);
  Tensor<T> out;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const auto [dy, dx] = offsets[k];
    const Tensor<T> shifted =
        slice(slice(padded, 1, half + dy, half + dy + h), 2, half + dx, half + dx + w);
    const Tensor<T> ck = reshape(slice(corr, 0, static_cast<std::int64_t>(k), static_cast<std::int64_t>(k) + 1), {1, h, w});
    const Tensor<T> term = mul(shifted, ck);
    out = out.defined() ? add(out, term) : term;
  }
  return out;
}

template <typename T>
ResNetBlock<T>::ResNetBlock(ParamStore<T>& ps, const std::string& name, std::int64_t in,
                            std::int64_t out, bool upsample_, Rng& rng)
    : upsample(upsample_), has_skip_conv(in != out) {
  conv1 = Conv<T>(ps, name + ".conv1", in, out, 3, 1, 1, rng);
  conv2 = Conv<T>(ps, name + ".conv2", out, out, 3, 1, 1, rng, Init::kZeros);
  if (has_skip_conv) skip = Conv<T>(ps, name + ".skip", in, out, 1, 1, 0, rng);
}

template <typename T>
Tensor<T> ResNetBlock<T>::operator()(const Tensor<T>& x) const {
  const Tensor<T> in = upsample ? upsample_bilinear2x(x) : x;
  const Tensor<T> h = conv2(gelu(conv1(gelu(in))));
  return add(has_skip_conv ? skip(in) : in, h);
}

template <typename T>
PatchEmbed<T>::PatchEmbed(ParamStore<T>& ps, const std::string& name, std::int64_t in,
                          std::int64_t out, Rng& rng)
    : conv1(ps, name + ".conv1", in, out, 7, 2, 3, rng),
      conv2(ps, name + ".conv2", out, out, 3, 2, 1, rng) {}

template <typename T>
Tensor<T> PatchEmbed<T>::operator()(const Tensor<T>& x) const {
  if (x.rank() != 3 || x.dim(1) % 4 != 0 || x.dim(2) % 4 != 0) {
    throw ShapeError("patch embedding needs [C,H,W] with H, W divisible by 4, got " +
                     shape_str(x.shape()));
  }
  return conv2(gelu(conv1(x)));
}

#define NVS_INSTANTIATE(T)                                                         \
  template class ParamStore<T>;                                                    \
  template struct Linear<T>;                                                       \
  template struct Conv<T>;                                                         \
  template struct LayerNorm<T>;                                                    \
  template struct Mlp2<T>;                                                         \
  template struct Attention<T>;                                                    \
  template struct MixFfn<T>;                                                       \
  template struct Mab<T>;                                                          \
  template struct Isab<T>;                                                         \
  template struct LocalSetAttention<T>;                                            \
  template struct ResNetBlock<T>;                                                  \
  template struct PatchEmbed<T>;                                                   \
  template Tensor<T> map_to_tokens<T>(const Tensor<T>&);                           \
  template Tensor<T> tokens_to_map<T>(const Tensor<T>&, std::int64_t, std::int64_t);

NVS_INSTANTIATE(float)
NVS_INSTANTIATE(double)
#undef NVS_INSTANTIATE

}  // namespace nvs
