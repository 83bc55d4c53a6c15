#pragma once

// Run configuration: line-oriented `key = value` text with `#` comments.

#include <cstdint>
#include <string>

#include "nvs/losses.hpp"
#include "nvs/model.hpp"

namespace nvs {

struct OptimConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double weight_decay = 0.01;
  double warmup_fraction = 0.01;
  double eps = 1e-8;
};

struct RunConfig {
  ViewNetConfig view;
  DepthNetConfig depth;
  LossWeights weights;
  bool ts_detach = true;
  OptimConfig optim;            // ViewNet generator
  double disc_lr = 2e-4;
  int disc_width = 32;
  int steps = 500;
  int batch = 4;
  std::uint64_t seed = 1;
  int checkpoint_every = 100;
  // Share of training samples replaced by (reference, reference, identity pose).
  double identity_fraction = 0.25;
  // DepthNet training.
  int depth_steps = 1000;
  int depth_batch = 4;
  double depth_lr = 1e-3;
  int neighbors = 2;
  int depth_extra_scenes = 0;   // procedural scenes added to the dataset's
  std::string data;
  std::string out;

  void validate() const;
};

/// Throws ValidationError naming the line for unknown keys and bad values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
std::string config_to_text(const RunConfig& c);

}  // namespace nvs
