#include "nvs/warp.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "nvs/errors.hpp"
#include "nvs/ops.hpp"

namespace nvs {
namespace {

struct SplatEntries {
  std::vector<std::int64_t> src, tgt;
  std::vector<double> bilinear;
};

// Row-major over source pixels, then the four corners in a fixed order.
SplatEntries build_entries(const FlowField& flow) {
  SplatEntries e;
  const int w = flow.width, h = flow.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  e.src.reserve(4 * n);
  e.tgt.reserve(4 * n);
  e.bilinear.reserve(4 * n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!flow.valid[i]) continue;
    const double x = flow.target_x[i], y = flow.target_y[i];
    if (!std::isfinite(x) || !std::isfinite(y)) {
      throw DomainError("non-finite flow at valid pixel " + std::to_string(i));
    }
    // Landing points far outside the frame cannot touch it.
    if (x <= -1.0 || y <= -1.0 || x >= w || y >= h) continue;
    const double x0 = std::floor(x), y0 = std::floor(y);
    const double fx = x - x0, fy = y - y0;
    const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
    const int dx[4] = {0, 1, 0, 1}, dy[4] = {0, 0, 1, 1};
    for (int k = 0; k < 4; ++k) {
      if (!(wts[k] > 0)) continue;
      const auto tx = static_cast<std::int64_t>(x0) + dx[k];
      const auto ty = static_cast<std::int64_t>(y0) + dy[k];
      if (tx < 0 || ty < 0 || tx >= w || ty >= h) continue;
      e.src.push_back(static_cast<std::int64_t>(i));
      e.tgt.push_back(ty * w + tx);
      e.bilinear.push_back(wts[k]);
    }
  }
  return e;
}

}  // namespace

std::vector<double> splat_coverage(const FlowField& flow) {
  const SplatEntries e = build_entries(flow);
  std::vector<double> cov(static_cast<std::size_t>(flow.width) * flow.height, 0.0);
  for (std::size_t k = 0; k < e.tgt.size(); ++k) cov[static_cast<std::size_t>(e.tgt[k])] += e.bilinear[k];
  return cov;
}

template <typename T>
SplatResult<T> splat_forward(const Tensor<T>& features, const FlowField& flow,
                             const Tensor<T>& importance, double alpha, double tau) {
  const std::int64_t hw = static_cast<std::int64_t>(flow.width) * flow.height;
  if (features.rank() != 3 || features.dim(1) != flow.height || features.dim(2) != flow.width) {
    throw ShapeError("splat_forward: features " + shape_str(features.shape()) +
                     " do not match flow " + std::to_string(flow.height) + "x" +
                     std::to_string(flow.width));
  }
  if (importance.numel() != hw) {
    throw ShapeError("splat_forward: importance " + shape_str(importance.shape()) +
                     " does not match flow");
  }
  const std::int64_t c = features.dim(0);
  const SplatEntries e = build_entries(flow);
  SplatResult<T> out;
  out.weight.assign(static_cast<std::size_t>(hw), 0.0);
  for (std::size_t k = 0; k < e.tgt.size(); ++k) out.weight[static_cast<std::size_t>(e.tgt[k])] += e.bilinear[k];
  std::vector<T> covered(static_cast<std::size_t>(hw));
  std::vector<T> uncovered(static_cast<std::size_t>(hw));
  for (std::int64_t i = 0; i < hw; ++i) {
    const bool cov = out.weight[static_cast<std::size_t>(i)] >= tau;
    covered[static_cast<std::size_t>(i)] = cov ? T(1) : T(0);
    uncovered[static_cast<std::size_t>(i)] = cov ? T(0) : T(1);
  }
  const Shape chw{c, flow.height, flow.width};
  const Tensor<T> covered_t = Tensor<T>::from_data({1, hw}, std::move(covered));
  if (e.src.empty()) {
    out.warped = reshape(mul(reshape(features, {c, hw}), Tensor<T>::zeros({1, hw})), chw);
    return out;
  }
  // Logit per entry: alpha * importance + log(bilinear). Subtracting the
  // per-target maximum (a constant, so gradients are unchanged) keeps the
  // largest weight at exactly 1.
  const auto ne = static_cast<std::int64_t>(e.src.size());
  const Tensor<T> imp = gather(reshape(importance, {hw}), e.src);
  std::vector<T> log_b(static_cast<std::size_t>(ne));
  for (std::int64_t k = 0; k < ne; ++k) log_b[static_cast<std::size_t>(k)] = static_cast<T>(std::log(e.bilinear[static_cast<std::size_t>(k)]));
  std::vector<T> logits(static_cast<std::size_t>(ne));
  std::vector<T> tmax(static_cast<std::size_t>(hw), -std::numeric_limits<T>::infinity());
  const T a = static_cast<T>(alpha);
  for (std::int64_t k = 0; k < ne; ++k) {
    const auto ku = static_cast<std::size_t>(k);
    const T scaled = imp.value(k) * a + T(0);
    logits[ku] = scaled + log_b[ku];
    T& m = tmax[static_cast<std::size_t>(e.tgt[ku])];
    if (logits[ku] > m) m = logits[ku];
  }
  std::vector<T> shift(static_cast<std::size_t>(ne));
  for (std::int64_t k = 0; k < ne; ++k) {
    shift[static_cast<std::size_t>(k)] = tmax[static_cast<std::size_t>(e.tgt[static_cast<std::size_t>(k)])];
  }
  const Tensor<T> logit =
      sub(add(affine(imp, a, T(0)), Tensor<T>::from_data({ne}, std::move(log_b))),
          Tensor<T>::from_data({ne}, std::move(shift)));
  const Tensor<T> w = exp(logit);                                    // [E]
  const Tensor<T> src_feat = gather(reshape(features, {c, hw}), e.src);  // [C,E]
  const Tensor<T> num = scatter_add(mul(src_feat, w), e.tgt, hw);     // [C,HW]
  const Tensor<T> den = scatter_add(reshape(w, {1, ne}), e.tgt, hw);  // [1,HW]
  const Tensor<T> safe_den = add(den, Tensor<T>::from_data({1, hw}, std::move(uncovered)));
  out.warped = reshape(mul(div(num, safe_den), covered_t), chw);
  return out;
}

template <typename T>
Tensor<T> depth_importance(const FlowField& flow) {
  const std::size_t n = static_cast<std::size_t>(flow.width) * flow.height;
  std::vector<T> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = flow.valid[i] ? static_cast<T>(-flow.target_depth[i]) : T(0);
  return Tensor<T>::from_data({flow.height, flow.width}, std::move(v));
}

double OutOfViewMask::ratio() const {
  if (o.empty()) return 0.0;
  std::size_t count = 0;
  for (auto v : o) count += v;
  return static_cast<double>(count) / static_cast<double>(o.size());
}

OutOfViewMask derive_out_of_view_mask(const std::vector<double>& weight, int width, int height,
                                      double tau) {
  if (weight.size() != static_cast<std::size_t>(width) * height) {
    throw ShapeError("coverage map does not match " + std::to_string(width) + "x" +
                     std::to_string(height));
  }
  OutOfViewMask m;
  m.width = width;
  m.height = height;
  m.o.resize(weight.size());
  for (std::size_t i = 0; i < weight.size(); ++i) m.o[i] = weight[i] < tau ? 1 : 0;
  return m;
}

OutOfViewMask out_of_view_mask(const CameraModel& camera, const std::vector<double>& depth,
                               const RelativePose& pose, int factor) {
  const CameraModel small = scale_intrinsics(camera, 1.0 / factor);
  const CoordinateMaps maps =
      unproject(small, downsample_depth(depth, camera.width, camera.height, factor));
  const FlowField flow = reproject(small, maps, pose);
  return derive_out_of_view_mask(splat_coverage(flow), small.width, small.height);
}

template SplatResult<float> splat_forward<float>(const Tensor<float>&, const FlowField&,
                                                 const Tensor<float>&, double, double);
template SplatResult<double> splat_forward<double>(const Tensor<double>&, const FlowField&,
                                                   const Tensor<double>&, double, double);
template Tensor<float> depth_importance<float>(const FlowField&);
template Tensor<double> depth_importance<double>(const FlowField&);

}  // namespace nvs
