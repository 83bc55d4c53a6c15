#pragma once

// AdamW (decoupled weight decay) and the warmup-then-cosine schedule.

#include <string>
#include <vector>

#include "nvs/blocks.hpp"
#include "nvs/checkpoint.hpp"
#include "nvs/config.hpp"

namespace nvs {

/// Linear ramp over the first max(1, round(warmup_fraction * total)) steps, then
/// cosine decay to 0 at `total`. `step` is 0-based.
double scheduled_lr(double base, int step, int total, double warmup_fraction);

class AdamW {
 public:
  AdamW(ParamStore<float>& params, const OptimConfig& config);

  /// Applies one update with learning rate `lr` using the accumulated grads.
  /// Weight decay touches only rank >= 2 tensors (weights, not biases or norms).
  void step(double lr);
  long long steps_taken() const { return t_; }

  void store(TensorTable& table, const std::string& prefix) const;
  void restore(const TensorTable& table, const std::string& prefix);

 private:
  ParamStore<float>* params_;
  OptimConfig config_;
  std::vector<std::vector<float>> m_, v_;
  long long t_ = 0;
};

}  // namespace nvs
