#include "nvs/model.hpp"

#include <cmath>
#include <string>

#include "nvs/errors.hpp"

namespace nvs {

void ViewNetConfig::validate() const {
  if (image_size < 16 || image_size % 16 != 0) {
    throw ValidationError("image_size must be a positive multiple of 16, got " +
                          std::to_string(image_size));
  }
  if (channels < 4 || channels % 4 != 0 || channels % heads != 0 || (channels + 32) % heads != 0) {
    throw ValidationError("channels must be a multiple of 4 and of the head count");
  }
  if (encoder_blocks < 0 || renderer_blocks < 0 || inducing < 1 || heads < 1) {
    throw ValidationError("block counts must be non-negative and inducing/heads positive");
  }
  if (window < 3 || window % 2 == 0) throw ValidationError("window must be odd and >= 3");
}

void DepthNetConfig::validate() const {
  if (widths.empty()) throw ValidationError("depth network needs at least one level");
  for (int w : widths) {
    if (w < 1) throw ValidationError("depth network widths must be positive");
  }
  if (!(min_depth > 0) || !(max_depth > min_depth)) {
    throw ValidationError("depth range needs 0 < min_depth < max_depth");
  }
}

SceneGeometry make_geometry(const CameraModel& camera, const std::vector<double>& depth) {
  SceneGeometry g;
  g.camera = camera;
  g.small_camera = scale_intrinsics(camera, 0.25);
  g.maps = unproject(g.small_camera, downsample_depth(depth, camera.width, camera.height, 4));
  return g;
}

template <typename T>
Tensor<T> RendererBlock<T>::operator()(const Tensor<T>& z, std::int64_t h, std::int64_t w) const {
  const Tensor<T> hid = ln1(add(z, attn(z, z)));
  const Tensor<T> ff = map_to_tokens(ffn.branch(tokens_to_map(hid, h, w)));
  return ln2(add(hid, ff));
}

template <typename T>
Tensor<T> Renderer<T>::run(const Tensor<T>& embedded) const {
  const std::int64_t h = embedded.dim(1), w = embedded.dim(2);
  Tensor<T> z = map_to_tokens(embedded);
  for (const auto& b : blocks) z = b(z, h, w);
  return up2(up1(tokens_to_map(z, h, w)));
}

namespace {

template <typename T>
Renderer<T> make_renderer(ParamStore<T>& ps, const std::string& name, const ViewNetConfig& c,
                          Rng& rng) {
  Renderer<T> r;
  const std::int64_t ch = c.channels;
  r.embed = PatchEmbed<T>(ps, name + ".embed", ch, ch, rng);
  for (int i = 0; i < c.renderer_blocks; ++i) {
    const std::string p = name + ".block" + std::to_string(i);
    RendererBlock<T> b;
    b.attn = Attention<T>(ps, p + ".attn", ch, c.heads, rng);
    b.ln1 = LayerNorm<T>(ps, p + ".ln1", ch, rng);
    b.ln2 = LayerNorm<T>(ps, p + ".ln2", ch, rng);
    b.ffn = MixFfn<T>(ps, p + ".ffn", ch, rng);
    r.blocks.push_back(std::move(b));
  }
  r.up1 = ResNetBlock<T>(ps, name + ".up1", ch, ch, true, rng);
  r.up2 = ResNetBlock<T>(ps, name + ".up2", ch, ch, true, rng);
  return r;
}

template <typename T>
Tensor<T> coords_tensor(const std::vector<double>& v, const Shape& shape) {
  std::vector<T> out(v.begin(), v.end());
  return Tensor<T>::from_data(shape, std::move(out));
}

}  // namespace

template <typename T>
ViewNet<T>::ViewNet(const ViewNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  auto& ps = params_;
  const std::int64_t c = config_.channels;
  embed = PatchEmbed<T>(ps, "view.embed", 3, c, rng);
  for (int i = 0; i < config_.encoder_blocks; ++i) {
    const std::string p = "view.enc" + std::to_string(i);
    GlsaBlock<T> b;
    b.global_pos = Mlp2<T>(ps, p + ".global_pos", 3, 32, 32, rng);
    b.isab = Isab<T>(ps, p + ".isab", c + 32, config_.inducing, config_.heads, rng);
    b.global_out = Linear<T>(ps, p + ".global_out", c + 32, c, rng);
    b.local = LocalSetAttention<T>(ps, p + ".local", c, config_.window, rng);
    b.ffn = MixFfn<T>(ps, p + ".ffn", c, rng);
    encoder.push_back(std::move(b));
  }
  explicit_renderer = make_renderer<T>(ps, "view.er", config_, rng);
  implicit_renderer = make_renderer<T>(ps, "view.ir", config_, rng);
  pose_enc = Mlp2<T>(ps, "view.ir.pose", 7, c, c, rng);
  const std::int64_t widths[4] = {c, c / 2, c / 4, c / 4};
  decoder.emplace_back(ps, "view.dec0", 2 * c, widths[0], false, rng);
  decoder.emplace_back(ps, "view.dec1", widths[0], widths[1], true, rng);
  decoder.emplace_back(ps, "view.dec2", widths[1], widths[2], true, rng);
  decoder.emplace_back(ps, "view.dec3", widths[2], widths[3], false, rng);
  to_rgb = Conv<T>(ps, "view.to_rgb", widths[3], 3, 3, 1, 1, rng);
}

template <typename T>
Tensor<T> ViewNet<T>::encode(const Tensor<T>& image, const SceneGeometry& geo) const {
  const int s = config_.image_size;
  if (image.shape() != Shape{3, s, s}) {
    throw ShapeError("view network expects image [3," + std::to_string(s) + "," +
                     std::to_string(s) + "], got " + shape_str(image.shape()));
  }
  const std::int64_t h = s / 4, w = s / 4, hw = h * w;
  if (geo.maps.width != w || geo.maps.height != h) {
    throw ShapeError("coordinate maps " + std::to_string(geo.maps.width) + "x" +
                     std::to_string(geo.maps.height) + " do not match features " +
                     std::to_string(w) + "x" + std::to_string(h));
  }
  Tensor<T> f = embed(image);
  if (encoder.empty()) return f;
  const Tensor<T> xw_tokens = coords_tensor<T>(geo.maps.x_w, {hw, 3});
  std::vector<double> local(static_cast<std::size_t>(3 * hw));
  for (std::int64_t i = 0; i < hw; ++i) {
    for (int k = 0; k < 3; ++k) {
      const auto src = static_cast<std::size_t>(3 * i + k);
      local[static_cast<std::size_t>(k * hw + i)] = geo.maps.x_w[src] - geo.maps.x_img[src];
    }
  }
  const Tensor<T> x_local = coords_tensor<T>(local, {3, h, w});
  for (const auto& b : encoder) {
    const Tensor<T> tokens = map_to_tokens(f);
    const Tensor<T> g_in = concat<T>({tokens, b.global_pos.tokens(xw_tokens)}, 1);
    const Tensor<T> g_global = tokens_to_map(b.global_out.tokens(b.isab(g_in)), h, w);
    const Tensor<T> g_local = b.local(f, x_local);
    f = b.ffn(add(add(f, g_global), g_local));
  }
  return f;
}

template <typename T>
Tensor<T> ViewNet<T>::render_explicit(const Tensor<T>& f_n, const SceneGeometry& geo,
                                      const RelativePose& pose, Tensor<T>* warped,
                                      OutOfViewMask* mask) const {
  const FlowField flow = reproject(geo.small_camera, geo.maps, pose);
  SplatResult<T> sp = splat_forward(f_n, flow, depth_importance<T>(flow));
  if (mask) *mask = derive_out_of_view_mask(sp.weight, flow.width, flow.height);
  if (warped) *warped = sp.warped;
  return explicit_renderer.run(explicit_renderer.embed(sp.warped));
}

template <typename T>
Tensor<T> ViewNet<T>::render_implicit(const Tensor<T>& f_n, const RelativePose& pose) const {
  const auto p7 = pose_params(pose).vec();
  const Tensor<T> pv = Tensor<T>::from_data({1, 7}, std::vector<T>(p7.begin(), p7.end()));
  const Tensor<T> code = reshape(pose_enc.tokens(pv), {config_.channels, 1, 1});
  return implicit_renderer.run(add(implicit_renderer.embed(f_n), code));
}

template <typename T>
RenderedPair<T> ViewNet<T>::render(const Tensor<T>& f_n, const SceneGeometry& geo,
                                   const RelativePose& pose) const {
  RenderedPair<T> pair;
  pair.h_e = render_explicit(f_n, geo, pose, &pair.warped, &pair.mask);
  pair.h_i = render_implicit(f_n, pose);
  return pair;
}

template <typename T>
Tensor<T> ViewNet<T>::decode(const Tensor<T>& h_e, const Tensor<T>& h_i) const {
  if (h_e.shape() != h_i.shape()) {
    throw ShapeError("renderer outputs differ: " + shape_str(h_e.shape()) + " vs " +
                     shape_str(h_i.shape()));
  }
  Tensor<T> x = concat<T>({h_e, h_i}, 0);
  for (const auto& b : decoder) x = b(x);
  return tanh(to_rgb(gelu(x)));
}

template <typename T>
typename ViewNet<T>::Output ViewNet<T>::forward(const Tensor<T>& image, const SceneGeometry& geo,
                                                const RelativePose& pose) const {
  Output out;
  const Tensor<T> f_n = encode(image, geo);
  out.pair = render(f_n, geo, pose);
  out.image = decode(out.pair.h_e, out.pair.h_i);
  return out;
}

template <typename T>
DepthNet<T>::DepthNet(const DepthNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const auto& w = config_.widths;
  const std::size_t levels = w.size();
  for (std::size_t i = 0; i < levels; ++i) {
    const std::int64_t in = i == 0 ? 3 : w[i - 1];
    down_.emplace_back(params_, "depth.down" + std::to_string(i), in, w[i], 3, i == 0 ? 1 : 2, 1, rng);
  }
  for (std::size_t j = 0; j + 1 < levels; ++j) {
    up_.emplace_back(params_, "depth.up" + std::to_string(j), w[j + 1] + w[j], w[j], 3, 1, 1, rng);
  }
  head_ = Conv<T>(params_, "depth.head", w[0], 1, 3, 1, 1, rng);
}

template <typename T>
Tensor<T> DepthNet<T>::forward(const Tensor<T>& image) const {
  const std::int64_t step = std::int64_t{1} << (down_.size() - 1);
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) % step || image.dim(2) % step) {
    throw ShapeError("depth network expects [3,H,W] with H, W divisible by " +
                     std::to_string(step) + ", got " + shape_str(image.shape()));
  }
  std::vector<Tensor<T>> skips;
  Tensor<T> x = image;
  for (const auto& c : down_) {
    x = gelu(c(x));
    skips.push_back(x);
  }
  for (std::size_t j = up_.size(); j-- > 0;) {
    x = gelu(up_[j](concat<T>({upsample_bilinear2x(x), skips[j]}, 0)));
  }
  const Tensor<T> disp = sigmoid(head_(x));  // [1,H,W]
  const T inv_min = static_cast<T>(1.0 / config_.min_depth);
  const T inv_max = static_cast<T>(1.0 / config_.max_depth);
  const Tensor<T> inv_depth = affine(disp, inv_min - inv_max, inv_max);
  return reshape(div(Tensor<T>::scalar(T(1)), inv_depth), {image.dim(1), image.dim(2)});
}

template <typename T>
std::vector<double> norm_ratio_map(const Tensor<T>& h_e, const Tensor<T>& h_i, double eps) {
  if (h_e.shape() != h_i.shape() || h_e.rank() != 3) {
    throw ShapeError("norm ratio needs two [C,H,W] maps of equal shape");
  }
  const std::int64_t c = h_e.dim(0), hw = h_e.dim(1) * h_e.dim(2);
  std::vector<double> out(static_cast<std::size_t>(hw));
  for (std::int64_t p = 0; p < hw; ++p) {
    double se = 0, si = 0;
    for (std::int64_t k = 0; k < c; ++k) {
      const double a = h_e.value(k * hw + p), b = h_i.value(k * hw + p);
      se += a * a;
      si += b * b;
    }
    out[static_cast<std::size_t>(p)] = std::sqrt(se) / std::max(std::sqrt(si), eps);
  }
  return out;
}

template struct RendererBlock<float>;
template struct RendererBlock<double>;
template struct Renderer<float>;
template struct Renderer<double>;
template class ViewNet<float>;
template class ViewNet<double>;
template class DepthNet<float>;
template class DepthNet<double>;
template std::vector<double> norm_ratio_map<float>(const Tensor<float>&, const Tensor<float>&, double);
template std::vector<double> norm_ratio_map<double>(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace nvs
