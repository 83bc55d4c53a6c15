#pragma once

// Training loops for DepthNet and ViewNet plus checkpoint-backed model loading.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "nvs/checkpoint.hpp"
#include "nvs/config.hpp"
#include "nvs/image_io.hpp"
#include "nvs/losses.hpp"
#include "nvs/model.hpp"
#include "nvs/optim.hpp"
#include "nvs/synth.hpp"

namespace nvs {

/// A generated dataset with its images and depth maps in memory.
struct LoadedDataset {
  std::string dir;
  Dataset manifest;
  std::vector<Image> refs, gts;
  std::vector<std::vector<double>> depths;
  std::size_t size() const { return manifest.entries.size(); }
};
LoadedDataset load_dataset(const std::string& dir);

std::vector<double> depth_to_vector(const Tensor<float>& depth);
std::vector<double> predict_depth(const DepthNet<float>& net, const Image& image);

// ---------------------------------------------------------------- DepthNet

struct DepthStepLog {
  int step = 0;
  double lr = 0, total = 0, reprojection = 0, smoothness = 0, kept = 0;
};

class DepthTrainer {
 public:
  /// Scenes come from the dataset's scene seeds plus `depth_extra_scenes`
  /// procedural ones. Neighbour frames are re-drawn every step.
  DepthTrainer(const RunConfig& config, const std::vector<std::uint64_t>& scene_seeds);
  DepthStepLog step();
  int steps_done() const { return step_; }
  DepthNet<float>& net() { return net_; }
  TensorTable checkpoint() const;
  void restore(const TensorTable& table);

 private:
  RunConfig config_;
  CameraModel camera_;
  std::vector<Scene> scenes_;
  DepthNet<float> net_;
  AdamW opt_;
  int step_ = 0;
};

/// Mean |pred - gt| / gt over every pixel of `count` scenes unseen in training.
double depth_abs_rel(const DepthNet<float>& net, std::uint64_t seed, int count, int image_size);
std::uint64_t held_out_scene_seed(std::uint64_t seed, int index);

// ---------------------------------------------------------------- ViewNet

struct ViewStepLog {
  int step = 0;
  double lr = 0;
  ViewLossReport loss;
  double d_loss = 0;
};

class ViewTrainer {
 public:
  /// `depth` null means ground-truth depth. A DepthNet is run once per sample
  /// under no-grad and never updated.
  ViewTrainer(const RunConfig& config, const LoadedDataset& data,
              std::shared_ptr<DepthNet<float>> depth);
  ViewStepLog step();
  int steps_done() const { return step_; }
  ViewNet<float>& net() { return net_; }
  TensorTable checkpoint() const;
  void restore(const TensorTable& table);
  /// Depth map the generator sees for sample i.
  const std::vector<double>& depth_for(std::size_t i) const { return depths_[i]; }
  std::uint64_t batch_seed(int step) const;

 private:
  RunConfig config_;
  const LoadedDataset* data_;
  CameraModel camera_;
  std::shared_ptr<DepthNet<float>> depth_net_;
  std::vector<std::vector<float>> depth_snapshot_;
  std::vector<std::vector<double>> depths_;
  ViewNet<float> net_;
  Discriminators<float> disc_;
  PerceptualExtractor<float> perceptual_;
  AdamW gen_opt_, disc_opt_;
  int step_ = 0;

  void check_depth_frozen() const;
};

// ---------------------------------------------------------------- loading

struct LoadedModel {
  RunConfig config;
  std::unique_ptr<ViewNet<float>> view;
  std::shared_ptr<DepthNet<float>> depth;  // null when trained on ground-truth depth
  int step = 0;
};
LoadedModel load_model(const std::string& checkpoint_path);

/// CSV header shared by the view training log.
std::string view_log_header();
std::string view_log_row(const ViewStepLog& log);
std::string depth_log_header();
std::string depth_log_row(const DepthStepLog& log);

}  // namespace nvs
