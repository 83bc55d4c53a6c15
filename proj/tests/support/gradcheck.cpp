#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "nvs/ops.hpp"

namespace nvs::testing {

GradcheckResult gradcheck(const std::function<Tensor<double>()>& loss,
                          const std::vector<Tensor<double>>& wrt,
                          const GradcheckOptions& options) {
  GradcheckResult result;
  for (const auto& t : wrt) t.impl()->grad.clear();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : wrt) analytic.push_back(t.grad_or_zeros());

  auto eval = [&] {
    NoGradGuard guard;
    return loss().item();
  };
  std::mt19937_64 rng(options.seed);
  for (std::size_t ti = 0; ti < wrt.size(); ++ti) {
    Tensor<double> t = wrt[ti];
    const auto n = static_cast<std::size_t>(t.numel());
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(std::min<std::size_t>(n, static_cast<std::size_t>(options.max_coords)));
    auto values = t.mutable_values();
    for (std::size_t c : coords) {
      const double x0 = values[c];
      values[c] = x0 + options.step;
      const double fp = eval();
      values[c] = x0 - options.step;
      const double fm = eval();
      values[c] = x0;
      const double fd = (fp - fm) / (2.0 * options.step);
      const double ad = analytic[ti][c];
      ++result.checked;
      const double tol = options.atol + options.rtol * std::abs(fd);
      const double err = std::abs(ad - fd);
      if (err <= tol) continue;
      // A kink inside the stencil: accept if the analytic value matches either side.
      const double f0 = eval();
      const double fwd = (fp - f0) / options.step;
      const double bwd = (f0 - fm) / options.step;
      const double tol_fwd = options.atol + options.rtol * std::abs(fwd) + 10.0 * options.step;
      const double tol_bwd = options.atol + options.rtol * std::abs(bwd) + 10.0 * options.step;
      if (std::abs(ad - fwd) <= tol_fwd || std::abs(ad - bwd) <= tol_bwd) {
        ++result.one_sided;
        continue;
      }
      result.worst_excess = std::max(result.worst_excess, err - tol);
      if (result.ok) {
        std::ostringstream os;
        os << "tensor " << ti << " " << shape_str(t.shape()) << " coord " << c
           << ": analytic " << ad << " vs numeric " << fd;
        result.failure = os.str();
      }
      result.ok = false;
    }
  }
  return result;
}

Tensor<double> project(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> w(static_cast<std::size_t>(y.numel()));
  for (auto& v : w) v = dist(rng);
  return sum(mul(y, Tensor<double>::from_data(y.shape(), std::move(w))));
}

Tensor<double> random_leaf(const Shape& shape, std::uint64_t seed, double lo, double hi,
                           bool requires_grad) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& x : v) x = dist(rng);
  auto t = Tensor<double>::from_data(shape, std::move(v));
  t.set_requires_grad(requires_grad);
  return t;
}

}  // namespace nvs::testing

namespace nvs::testing {
namespace {

template <typename T>
void randomize_impl(ParamStore<T>& ps, std::uint64_t seed, double scale) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (std::size_t i = 0; i < ps.tensors().size(); ++i) {
    Tensor<T> t = ps.tensors()[i];
    const bool gain = ps.names()[i].find(".gamma") != std::string::npos;
    for (auto& v : t.mutable_values()) v = static_cast<T>((gain ? 1.0 : 0.0) + dist(rng));
  }
}

}  // namespace

void randomize(ParamStore<double>& ps, std::uint64_t seed, double scale) {
  randomize_impl(ps, seed, scale);
}
void randomize(ParamStore<float>& ps, std::uint64_t seed, double scale) {
  randomize_impl(ps, seed, scale);
}

}  // namespace nvs::testing
