#pragma once

// Loop-based reference implementations shared by unit and acceptance tests.

#include <cstdint>
#include <vector>

#include "nvs/blocks.hpp"

namespace nvs::testing {

std::vector<double> linear(const Linear<double>& l, const std::vector<double>& x);
double gelu(double x);
std::vector<double> mlp(const Mlp2<double>& m, const std::vector<double>& x);

struct LsaCase {
  Tensor<double> f, x_local;
  std::vector<double> x_img, x_w;
  double focal;
};

/// Random features and depths on an h x w grid with a centred pinhole camera.
LsaCase make_lsa_case(int c, int h, int w, std::uint64_t seed, bool flat = false);

/// Local set attention that re-encodes every pair's relative position from the
/// coordinate maps and looks the table row up by the recovered pixel offset.
std::vector<double> naive_lsa(const LocalSetAttention<double>& lsa, const Tensor<double>& f,
                              const std::vector<double>& x_img, const std::vector<double>& x_w,
                              double focal, int h, int w);

}  // namespace nvs::testing
