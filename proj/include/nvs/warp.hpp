#pragma once

// Softmax forward splatting of feature maps along a flow field, and the
// out-of-view mask derived from splat coverage.
//
// Each valid source pixel spreads bilinear mass over the (up to) four target
// pixels around its landing point; contributions competing for a target are
// weighted by exp(alpha * importance). Coverage (the bilinear mass alone)
// decides which targets count as reached.

#include <cstdint>
#include <vector>

#include "nvs/camera.hpp"
#include "nvs/tensor.hpp"

namespace nvs {

inline constexpr double kSplatSharpness = 10.0;
inline constexpr double kCoverageThreshold = 1e-4;

template <typename T>
struct SplatResult {
  Tensor<T> warped;            // [C,H,W]
  std::vector<double> weight;  // H*W bilinear coverage, >= 0
};

/// features [C,H,W], importance [H,W] (or [H*W]); both differentiable. Targets
/// with coverage below tau hold zero. Throws DomainError on non-finite flow at
/// a valid pixel.
template <typename T>
SplatResult<T> splat_forward(const Tensor<T>& features, const FlowField& flow,
                             const Tensor<T>& importance, double alpha = kSplatSharpness,
                             double tau = kCoverageThreshold);

/// Negative target-view depth (nearer wins); zero at invalid pixels.
template <typename T>
Tensor<T> depth_importance(const FlowField& flow);

/// Bilinear coverage only (no features, no importance).
std::vector<double> splat_coverage(const FlowField& flow);

struct OutOfViewMask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> o;  // 1 = not reached by any source pixel

  double ratio() const;
};

OutOfViewMask derive_out_of_view_mask(const std::vector<double>& weight, int width, int height,
                                      double tau = kCoverageThreshold);

/// Quarter-resolution mask for a full-resolution depth map and relative pose.
OutOfViewMask out_of_view_mask(const CameraModel& camera, const std::vector<double>& depth,
                               const RelativePose& pose, int factor = 4);

}  // namespace nvs
