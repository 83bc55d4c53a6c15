#pragma once

// Central finite-difference gradient checking for double-precision graphs.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nvs/tensor.hpp"

namespace nvs::testing {

struct GradcheckOptions {
  double step = 1e-4;
  double atol = 1e-6;
  double rtol = 1e-3;
  // Coordinates probed per tensor; all of them when the tensor is smaller.
  int max_coords = 24;
  std::uint64_t seed = 1;
};

struct GradcheckResult {
  bool ok = true;
  int checked = 0;
  // Coordinates that only matched a one-sided difference (a kink within one step).
  int one_sided = 0;
  double worst_excess = 0.0;
  std::string failure;
};

/// `loss` must rebuild the graph from the current values of `wrt` each call.
GradcheckResult gradcheck(const std::function<Tensor<double>()>& loss,
                          const std::vector<Tensor<double>>& wrt,
                          const GradcheckOptions& options = {});

/// Fixed random linear functional of y, so every output entry contributes.
Tensor<double> project(const Tensor<double>& y, std::uint64_t seed);

/// Uniform values in [lo, hi) as a leaf requiring grad.
Tensor<double> random_leaf(const Shape& shape, std::uint64_t seed, double lo = -1.0,
                           double hi = 1.0, bool requires_grad = true);

}  // namespace nvs::testing

#include "nvs/blocks.hpp"

namespace nvs::testing {

/// Overwrites every parameter with uniform values in [-scale, scale] (keeps
/// layer-norm gains near 1), so zero-initialized branches carry gradient.
void randomize(ParamStore<double>& ps, std::uint64_t seed, double scale = 0.5);
void randomize(ParamStore<float>& ps, std::uint64_t seed, double scale = 0.5);

}  // namespace nvs::testing
