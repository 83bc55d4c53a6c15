#pragma once

// ViewNet (encoder, explicit and implicit renderers, decoder) and DepthNet.

#include <cstdint>
#include <vector>

#include "nvs/blocks.hpp"
#include "nvs/camera.hpp"
#include "nvs/warp.hpp"

namespace nvs {

struct ViewNetConfig {
  int image_size = 64;
  int channels = 256;       // C
  int encoder_blocks = 8;   // N
  int renderer_blocks = 6;  // M
  int window = 5;           // r
  int inducing = 32;        // m
  int heads = 4;

  void validate() const;
};

struct DepthNetConfig {
  std::vector<int> widths{16, 32, 64, 128};
  double min_depth = 0.5;
  double max_depth = 12.0;

  void validate() const;
};

/// Quarter-resolution geometry shared by the encoder and the explicit renderer.
struct SceneGeometry {
  CameraModel camera;        // full resolution
  CameraModel small_camera;  // camera scaled by 1/4
  CoordinateMaps maps;       // at quarter resolution
};

SceneGeometry make_geometry(const CameraModel& camera, const std::vector<double>& depth);

template <typename T>
struct RenderedPair {
  Tensor<T> h_e, h_i;  // [C,H/4,W/4]
  OutOfViewMask mask;
  Tensor<T> warped;    // f_N splatted into the target view, before the renderer
};

template <typename T>
struct GlsaBlock {
  Mlp2<T> global_pos;  // delta_global: 3 -> 32
  Isab<T> isab;        // at C + 32
  Linear<T> global_out;  // C + 32 -> C
  LocalSetAttention<T> local;
  MixFfn<T> ffn;
};

/// MAB(Z, Z) whose feed-forward branch is a Mix-FFN on the token grid.
template <typename T>
struct RendererBlock {
  Attention<T> attn;
  LayerNorm<T> ln1, ln2;
  MixFfn<T> ffn;
  Tensor<T> operator()(const Tensor<T>& z, std::int64_t h, std::int64_t w) const;
};

template <typename T>
struct Renderer {
  PatchEmbed<T> embed;
  std::vector<RendererBlock<T>> blocks;
  ResNetBlock<T> up1, up2;
  Tensor<T> run(const Tensor<T>& tokens_map) const;  // embedded map [C,h/4,w/4] -> [C,h,w]
};

template <typename T>
class ViewNet {
 public:
  ViewNet(const ViewNetConfig& config, std::uint64_t seed);

  /// image [3,H,W] in [-1,1] -> f_N [C,H/4,W/4]
  Tensor<T> encode(const Tensor<T>& image, const SceneGeometry& geo) const;
  RenderedPair<T> render(const Tensor<T>& f_n, const SceneGeometry& geo,
                         const RelativePose& pose) const;
  Tensor<T> render_explicit(const Tensor<T>& f_n, const SceneGeometry& geo,
                            const RelativePose& pose, Tensor<T>* warped = nullptr,
                            OutOfViewMask* mask = nullptr) const;
  Tensor<T> render_implicit(const Tensor<T>& f_n, const RelativePose& pose) const;
  /// concat(h_e, h_i) -> image [3,H,W] in [-1,1]
  Tensor<T> decode(const Tensor<T>& h_e, const Tensor<T>& h_i) const;

  struct Output {
    Tensor<T> image;
    RenderedPair<T> pair;
  };
  /// One pass: encode, both renderers, decode.
  Output forward(const Tensor<T>& image, const SceneGeometry& geo, const RelativePose& pose) const;

  const ViewNetConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  // Exposed for tests.
  PatchEmbed<T> embed;
  std::vector<GlsaBlock<T>> encoder;
  Renderer<T> explicit_renderer, implicit_renderer;
  Mlp2<T> pose_enc;  // delta_pos: 7 -> C
  std::vector<ResNetBlock<T>> decoder;
  Conv<T> to_rgb;

 private:
  ViewNetConfig config_;
  ParamStore<T> params_;
};

template <typename T>
class DepthNet {
 public:
  DepthNet(const DepthNetConfig& config, std::uint64_t seed);
  /// image [3,H,W] in [-1,1] -> depth [H,W] strictly inside (min_depth, max_depth)
  Tensor<T> forward(const Tensor<T>& image) const;
  const DepthNetConfig& config() const { return config_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

 private:
  DepthNetConfig config_;
  ParamStore<T> params_;
  std::vector<Conv<T>> down_;
  std::vector<Conv<T>> up_;
  Conv<T> head_;
};

/// Per-pixel |h_e(p)| / max(|h_i(p)|, eps), row-major over the map.
template <typename T>
std::vector<double> norm_ratio_map(const Tensor<T>& h_e, const Tensor<T>& h_i, double eps = 1e-8);

}  // namespace nvs
