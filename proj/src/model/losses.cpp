#include "nvs/losses.hpp"

#include <cmath>
#include <string>

#include "nvs/errors.hpp"

namespace nvs {

void LossWeights::validate() const {
  const double all[] = {alpha, smooth, perceptual, adversarial, ts_in, ts_out};
  for (double w : all) {
    if (!(w >= 0) || !std::isfinite(w)) throw ValidationError("loss weights must be finite and >= 0");
  }
  if (alpha > 1) throw ValidationError("alpha must lie in [0,1]");
}

namespace {

template <typename T>
Tensor<T> to_unit(const Tensor<T>& x) {
  return affine(x, T(0.5), T(0.5));
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shapes differ, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
Tensor<T> constant(const Shape& shape, std::vector<T> v) {
  return Tensor<T>::from_data(shape, std::move(v));
}

}  // namespace

template <typename T>
Tensor<T> ssim_map(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "ssim");
  const T c1 = T(0.01 * 0.01), c2 = T(0.03 * 0.03);
  const Tensor<T> x = to_unit(a), y = to_unit(b);
  const Tensor<T> mx = box_filter3x3(x), my = box_filter3x3(y);
  const Tensor<T> sx = sub(box_filter3x3(square(x)), square(mx));
  const Tensor<T> sy = sub(box_filter3x3(square(y)), square(my));
  const Tensor<T> sxy = sub(box_filter3x3(mul(x, y)), mul(mx, my));
  const Tensor<T> num = mul(affine(mul(mx, my), T(2), c1), affine(sxy, T(2), c2));
  const Tensor<T> den = mul(affine(add(square(mx), square(my)), T(1), c1),
                            affine(add(sx, sy), T(1), c2));
  return div(num, den);
}

template <typename T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b) {
  return mean(ssim_map(a, b));
}

template <typename T>
Tensor<T> inverse_warp(const Tensor<T>& source, const Tensor<T>& depth, const CameraModel& camera,
                       const RelativePose& pose) {
  camera.validate();
  pose.validate();
  const std::int64_t h = camera.height, w = camera.width, n = h * w;
  if (source.rank() != 3 || source.dim(1) != h || source.dim(2) != w ||
      depth.shape() != Shape{h, w}) {
    throw ShapeError("inverse_warp: image " + shape_str(source.shape()) + " and depth " +
                     shape_str(depth.shape()) + " do not match a " + std::to_string(w) + "x" +
                     std::to_string(h) + " camera");
  }
  if (pose.is_identity()) return source;
  std::vector<T> rays[3];
  for (auto& r : rays) r.resize(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < h; ++v) {
    for (std::int64_t u = 0; u < w; ++u) {
      const Eigen::Vector3d ray((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
      const Eigen::Vector3d a = pose.R * ray;
      for (int k = 0; k < 3; ++k) rays[k][static_cast<std::size_t>(v * w + u)] = static_cast<T>(a[k]);
    }
  }
  const Tensor<T> d = reshape(depth, {n});
  Tensor<T> p[3];
  for (int k = 0; k < 3; ++k) {
    p[k] = affine(mul(d, constant<T>({n}, std::move(rays[k]))), T(1), static_cast<T>(pose.t[k]));
  }
  const Tensor<T> z = clamp_min(p[2], T(1e-3));
  const Tensor<T> xs = affine(div(p[0], z), static_cast<T>(camera.fx), static_cast<T>(camera.cx));
  const Tensor<T> ys = affine(div(p[1], z), static_cast<T>(camera.fy), static_cast<T>(camera.cy));
  return reshape(grid_sample(source, xs, ys), {source.dim(0), h, w});
}

template <typename T>
Tensor<T> photometric_error(const Tensor<T>& a, const Tensor<T>& b, double alpha) {
  const Tensor<T> dssim =
      affine(ssim_map(a, b), static_cast<T>(-alpha / 2), static_cast<T>(alpha / 2));
  const Tensor<T> l1 = affine(abs(sub(a, b)), static_cast<T>(0.5 * (1 - alpha)), T(0));
  return mean(add(dssim, l1), 0);
}

template <typename T>
Tensor<T> smoothness_loss(const Tensor<T>& depth, const Tensor<T>& image) {
  if (depth.rank() != 2 || image.rank() != 3 || image.dim(1) != depth.dim(0) ||
      image.dim(2) != depth.dim(1)) {
    throw ShapeError("smoothness_loss: depth " + shape_str(depth.shape()) + " vs image " +
                     shape_str(image.shape()));
  }
  const std::int64_t h = depth.dim(0), w = depth.dim(1);
  const Tensor<T> disp = div(Tensor<T>::scalar(T(1)), depth);
  const Tensor<T> dn = div(disp, mean(disp));
  const Tensor<T> img = to_unit(image.detach());
  auto edge_weight = [](const Tensor<T>& g) { return exp(neg(mean(abs(g), 0))); };
  const Tensor<T> dx = sub(slice(dn, 1, 1, w), slice(dn, 1, 0, w - 1));
  const Tensor<T> dy = sub(slice(dn, 0, 1, h), slice(dn, 0, 0, h - 1));
  const Tensor<T> ix = sub(slice(img, 2, 1, w), slice(img, 2, 0, w - 1));
  const Tensor<T> iy = sub(slice(img, 1, 1, h), slice(img, 1, 0, h - 1));
  return add(mean(mul(abs(dx), edge_weight(ix))), mean(mul(abs(dy), edge_weight(iy))));
}

template <typename T>
DepthLoss<T> depth_loss(const Tensor<T>& reference, const std::vector<Tensor<T>>& neighbors,
                        const std::vector<RelativePose>& poses, const Tensor<T>& depth,
                        const CameraModel& camera, const LossWeights& weights) {
  weights.validate();
  if (neighbors.empty()) throw DomainError("depth_loss needs at least one neighbour frame");
  if (poses.size() != neighbors.size()) {
    throw DomainError("depth_loss: " + std::to_string(neighbors.size()) + " neighbours but " +
                      std::to_string(poses.size()) + " poses");
  }
  const std::int64_t n = camera.width * camera.height;
  std::vector<Tensor<T>> reproj;
  std::vector<double> identity_min(static_cast<std::size_t>(n), INFINITY);
  for (std::size_t k = 0; k < neighbors.size(); ++k) {
    require_same(reference, neighbors[k], "depth_loss");
    const Tensor<T> warped = inverse_warp(neighbors[k], depth, camera, poses[k]);
    reproj.push_back(reshape(photometric_error(reference, warped, weights.alpha), {1, n}));
    NoGradGuard ng;
    const Tensor<T> id = photometric_error(reference, neighbors[k], weights.alpha);
    for (std::int64_t p = 0; p < n; ++p) {
      auto& m = identity_min[static_cast<std::size_t>(p)];
      m = std::min(m, static_cast<double>(id.value(p)));
    }
  }
  const Tensor<T> min_rep = neg(max(neg(concat(reproj, 0)), 0));  // [n]
  std::vector<T> keep(static_cast<std::size_t>(n), T(0));
  std::int64_t kept = 0;
  for (std::int64_t p = 0; p < n; ++p) {
    if (static_cast<double>(min_rep.value(p)) < identity_min[static_cast<std::size_t>(p)]) {
      keep[static_cast<std::size_t>(p)] = T(1);
      ++kept;
    }
  }
  DepthLoss<T> out;
  out.kept_fraction = static_cast<double>(kept) / static_cast<double>(n);
  const T norm = kept > 0 ? T(1) / static_cast<T>(kept) : T(0);
  out.reprojection = affine(sum(mul(min_rep, constant<T>({n}, std::move(keep)))), norm, T(0));
  out.smoothness = smoothness_loss(depth, reference);
  out.total = add(out.reprojection, affine(out.smoothness, static_cast<T>(weights.smooth), T(0)));
  return out;
}

namespace {

template <typename T>
Tensor<T> cosine_map(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> dot = sum(mul(a, b), 0);
  const Tensor<T> nn = mul(sum(square(a), 0), sum(square(b), 0));
  return div(dot, sqrt(clamp_min(nn, static_cast<T>(kCosineEps * kCosineEps))));
}

// -sum_p m(p) cos(p) / sum_p m(p), or 0 when the region is empty.
template <typename T>
Tensor<T> masked_negative_mean(const Tensor<T>& cos, std::vector<T> m) {
  double total = 0;
  for (T v : m) total += v;
  if (total == 0) return Tensor<T>::scalar(T(0));
  const Tensor<T> w = constant<T>(cos.shape(), std::move(m));
  return affine(sum(mul(cos, w)), static_cast<T>(-1.0 / total), T(0));
}

}  // namespace

template <typename T>
TsLoss<T> ts_loss(const Tensor<T>& h_e, const Tensor<T>& h_i, const OutOfViewMask& mask,
                  const LossWeights& weights, bool detach) {
  require_same(h_e, h_i, "ts_loss");
  if (h_e.rank() != 3 || h_e.dim(1) != mask.height || h_e.dim(2) != mask.width) {
    throw ShapeError("ts_loss: mask " + std::to_string(mask.width) + "x" +
                     std::to_string(mask.height) + " does not match features " +
                     shape_str(h_e.shape()));
  }
  const std::size_t n = mask.o.size();
  std::vector<T> m_in(n), m_out(n);
  for (std::size_t p = 0; p < n; ++p) {
    m_out[p] = mask.o[p] ? T(1) : T(0);
    m_in[p] = T(1) - m_out[p];
  }
  TsLoss<T> out;
  if (detach) {
    out.in = masked_negative_mean(cosine_map(h_i, h_e.detach()), std::move(m_in));
    out.out = masked_negative_mean(cosine_map(h_i.detach(), h_e), std::move(m_out));
  } else {
    const Tensor<T> cos = cosine_map(h_i, h_e);
    out.in = masked_negative_mean(cos, std::move(m_in));
    out.out = masked_negative_mean(cos, std::move(m_out));
  }
  out.total = add(affine(out.in, static_cast<T>(weights.ts_in), T(0)),
                  affine(out.out, static_cast<T>(weights.ts_out), T(0)));
  return out;
}

template <typename T>
PerceptualExtractor<T>::PerceptualExtractor(std::uint64_t seed, std::vector<int> widths) {
  Rng rng(seed);
  std::int64_t in = 3;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    layers_.emplace_back(params_, "perceptual" + std::to_string(i), in, widths[i], 3, 2, 1, rng);
    in = widths[i];
  }
  params_.set_trainable(false);
}

template <typename T>
std::vector<Tensor<T>> PerceptualExtractor<T>::features(const Tensor<T>& image) const {
  std::vector<Tensor<T>> out;
  Tensor<T> x = image;
  for (const auto& l : layers_) {
    x = gelu(l(x));
    out.push_back(x);
  }
  return out;
}

template <typename T>
ReconstructionLoss<T> l1_and_perceptual(const Tensor<T>& pred, const Tensor<T>& target,
                                        const PerceptualExtractor<T>& extractor) {
  require_same(pred, target, "l1_and_perceptual");
  ReconstructionLoss<T> out;
  out.l1 = mean(abs(sub(pred, target)));
  const auto fp = extractor.features(pred);
  const auto ft = extractor.features(target);
  out.perceptual = Tensor<T>::scalar(T(0));
  for (std::size_t l = 0; l < fp.size(); ++l) {
    out.perceptual = add(out.perceptual, mean(abs(sub(fp[l], ft[l]))));
  }
  return out;
}

template <typename T>
PatchDiscriminator<T>::PatchDiscriminator(ParamStore<T>& ps, const std::string& name,
                                          std::int64_t width, Rng& rng) {
  const std::int64_t chans[5] = {3, width, 2 * width, 4 * width, 1};
  for (int i = 0; i < 4; ++i) {
    layers.emplace_back(ps, name + ".conv" + std::to_string(i), chans[i], chans[i + 1], 3,
                        i < 3 ? 2 : 1, 1, rng);
  }
}

template <typename T>
Tensor<T> PatchDiscriminator<T>::operator()(const Tensor<T>& image) const {
  Tensor<T> x = image;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = layers[i](x);
    if (i + 1 < layers.size()) x = gelu(x);
  }
  return x;
}

template <typename T>
Discriminators<T>::Discriminators(std::uint64_t seed, std::int64_t width) {
  Rng rng(seed);
  global = PatchDiscriminator<T>(params_, "disc.global", width, rng);
  local = PatchDiscriminator<T>(params_, "disc.local", width, rng);
}

CropWindow random_crop(std::int64_t height, std::int64_t width, Rng& rng) {
  CropWindow c;
  c.size = std::min(height, width) / 2;
  if (c.size < 1) throw ShapeError("image too small to crop");
  c.x = rng.uniform_int(0, width - c.size);
  c.y = rng.uniform_int(0, height - c.size);
  return c;
}

namespace {

template <typename T>
Tensor<T> crop(const Tensor<T>& x, const CropWindow& c) {
  return slice(slice(x, 1, c.y, c.y + c.size), 2, c.x, c.x + c.size);
}

template <typename T>
Tensor<T> hinge_d(const Tensor<T>& real_logits, const Tensor<T>& fake_logits) {
  return add(mean(relu(affine(real_logits, T(-1), T(1)))),
             mean(relu(affine(fake_logits, T(1), T(1)))));
}

}  // namespace

template <typename T>
AdversarialLosses<T> adversarial_losses(const Tensor<T>& fake, const Tensor<T>& real,
                                        const Discriminators<T>& disc, const CropWindow& win) {
  require_same(fake, real, "adversarial_losses");
  if (win.size < 1 || win.y + win.size > fake.dim(1) || win.x + win.size > fake.dim(2)) {
    throw ShapeError("crop window outside the image");
  }
  const Tensor<T> fd = fake.detach();
  AdversarialLosses<T> out;
  out.d_loss = add(hinge_d(disc.global(real), disc.global(fd)),
                   hinge_d(disc.local(crop(real, win)), disc.local(crop(fd, win))));
  out.g_loss = neg(add(mean(disc.global(fake)), mean(disc.local(crop(fake, win)))));
  return out;
}

template <typename T>
Tensor<T> total_view_loss(const Tensor<T>& l1, const Tensor<T>& perceptual,
                          const Tensor<T>& g_adv, const TsLoss<T>& ts, const LossWeights& weights,
                          ViewLossReport* report) {
  weights.validate();
  Tensor<T> total = Tensor<T>::scalar(T(0));
  ViewLossReport r;
  auto term = [&](const Tensor<T>& x, double w, double& slot) {
    if (!x.defined()) return;
    slot = static_cast<double>(x.item());
    total = add(total, affine(x, static_cast<T>(w), T(0)));
  };
  term(l1, 1.0, r.l1);
  term(perceptual, weights.perceptual, r.perceptual);
  term(g_adv, weights.adversarial, r.adversarial);
  term(ts.in, weights.ts_in, r.ts_in);
  term(ts.out, weights.ts_out, r.ts_out);
  r.total = static_cast<double>(total.item());
  if (report) *report = r;
  return total;
}

#define NVS_INSTANTIATE(T)                                                                     \
  template Tensor<T> ssim_map<T>(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> ssim<T>(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> inverse_warp<T>(const Tensor<T>&, const Tensor<T>&, const CameraModel&,   \
                                     const RelativePose&);                                     \
  template Tensor<T> photometric_error<T>(const Tensor<T>&, const Tensor<T>&, double);         \
  template Tensor<T> smoothness_loss<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template DepthLoss<T> depth_loss<T>(const Tensor<T>&, const std::vector<Tensor<T>>&,         \
                                      const std::vector<RelativePose>&, const Tensor<T>&,      \
                                      const CameraModel&, const LossWeights&);                 \
  template TsLoss<T> ts_loss<T>(const Tensor<T>&, const Tensor<T>&, const OutOfViewMask&,      \
                                const LossWeights&, bool);                                     \
  template class PerceptualExtractor<T>;                                                       \
  template ReconstructionLoss<T> l1_and_perceptual<T>(const Tensor<T>&, const Tensor<T>&,      \
                                                      const PerceptualExtractor<T>&);          \
  template struct PatchDiscriminator<T>;                                                       \
  template class Discriminators<T>;                                                            \
  template AdversarialLosses<T> adversarial_losses<T>(const Tensor<T>&, const Tensor<T>&,      \
                                                      const Discriminators<T>&,                \
                                                      const CropWindow&);                      \
  template Tensor<T> total_view_loss<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,  \
                                        const TsLoss<T>&, const LossWeights&, ViewLossReport*);

NVS_INSTANTIATE(float)
NVS_INSTANTIATE(double)

}  // namespace nvs
