#pragma once

// Training objectives for DepthNet and ViewNet. Images are [3,H,W] in [-1,1]
// unless stated otherwise.

#include <cstdint>
#include <vector>

#include "nvs/blocks.hpp"
#include "nvs/camera.hpp"
#include "nvs/warp.hpp"

namespace nvs {

struct LossWeights {
  double alpha = 0.85;       // SSIM vs L1 mix in the reprojection term
  double smooth = 1e-3;      // lambda_sm
  double perceptual = 1.0;   // lambda_c
  double adversarial = 0.1;  // lambda_adv
  double ts_in = 1.0;        // lambda_in
  double ts_out = 1.0;       // lambda_out

  void validate() const;
};

inline constexpr double kCosineEps = 1e-8;

/// Per-pixel SSIM over 3x3 reflect-padded windows; inputs in [-1,1] are
/// mapped to [0,1] first. Same shape as the inputs.
template <typename T>
Tensor<T> ssim_map(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> ssim(const Tensor<T>& a, const Tensor<T>& b);

/// Backward warp: samples `source` at the projection of every pixel of the
/// reference camera lifted with `depth` [H,W] and moved by `pose`.
template <typename T>
Tensor<T> inverse_warp(const Tensor<T>& source, const Tensor<T>& depth, const CameraModel& camera,
                       const RelativePose& pose);

/// alpha/2 (1 - SSIM) + (1 - alpha) |a - b|, averaged over channels -> [H,W].
template <typename T>
Tensor<T> photometric_error(const Tensor<T>& a, const Tensor<T>& b, double alpha);

/// Edge-aware smoothness of the mean-normalized inverse depth.
template <typename T>
Tensor<T> smoothness_loss(const Tensor<T>& depth, const Tensor<T>& image);

template <typename T>
struct DepthLoss {
  Tensor<T> total, reprojection, smoothness;
  double kept_fraction = 0;  // pixels surviving the auto-mask
};

/// `poses[k]` maps reference-camera coordinates into neighbour k's camera.
template <typename T>
DepthLoss<T> depth_loss(const Tensor<T>& reference, const std::vector<Tensor<T>>& neighbors,
                        const std::vector<RelativePose>& poses, const Tensor<T>& depth,
                        const CameraModel& camera, const LossWeights& weights);

template <typename T>
struct TsLoss {
  Tensor<T> in, out, total;
};

/// Negative masked cosine similarity between h_e and h_i [C,h,w]. With
/// `detach` the in-view term only trains h_i and the out-of-view term only h_e.
template <typename T>
TsLoss<T> ts_loss(const Tensor<T>& h_e, const Tensor<T>& h_i, const OutOfViewMask& mask,
                  const LossWeights& weights, bool detach = true);

/// Frozen random strided conv pyramid standing in for a pretrained feature net.
template <typename T>
class PerceptualExtractor {
 public:
  explicit PerceptualExtractor(std::uint64_t seed, std::vector<int> widths = {16, 32, 64});
  std::vector<Tensor<T>> features(const Tensor<T>& image) const;

 private:
  ParamStore<T> params_;
  std::vector<Conv<T>> layers_;
};

template <typename T>
struct ReconstructionLoss {
  Tensor<T> l1, perceptual;
};

template <typename T>
ReconstructionLoss<T> l1_and_perceptual(const Tensor<T>& pred, const Tensor<T>& target,
                                        const PerceptualExtractor<T>& extractor);

/// Four strided convs ending in a one-channel logit map.
template <typename T>
struct PatchDiscriminator {
  std::vector<Conv<T>> layers;
  PatchDiscriminator() = default;
  PatchDiscriminator(ParamStore<T>& ps, const std::string& name, std::int64_t width, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& image) const;
};

/// Global discriminator on the full image, local one on a half-extent crop.
template <typename T>
class Discriminators {
 public:
  Discriminators(std::uint64_t seed, std::int64_t width = 32);
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }
  PatchDiscriminator<T> global, local;

 private:
  ParamStore<T> params_;
};

struct CropWindow {
  std::int64_t x = 0, y = 0, size = 0;
};
/// Random half-extent square crop for an image of the given size.
CropWindow random_crop(std::int64_t height, std::int64_t width, Rng& rng);

template <typename T>
struct AdversarialLosses {
  Tensor<T> g_loss, d_loss;
};

/// Hinge losses summed over both discriminators. `fake` is detached inside
/// d_loss; both use the same crop.
template <typename T>
AdversarialLosses<T> adversarial_losses(const Tensor<T>& fake, const Tensor<T>& real,
                                        const Discriminators<T>& disc, const CropWindow& crop);

struct ViewLossReport {
  double l1 = 0, perceptual = 0, adversarial = 0, ts_in = 0, ts_out = 0, total = 0;
};

/// l1 + lambda_c perceptual + lambda_adv g_adv + lambda_in ts_in + lambda_out ts_out.
/// Undefined components count as zero.
template <typename T>
Tensor<T> total_view_loss(const Tensor<T>& l1, const Tensor<T>& perceptual,
                          const Tensor<T>& g_adv, const TsLoss<T>& ts, const LossWeights& weights,
                          ViewLossReport* report = nullptr);

}  // namespace nvs
