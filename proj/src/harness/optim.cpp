#include "nvs/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace nvs {

double scheduled_lr(double base, int step, int total, double warmup_fraction) {
  if (total < 1 || step < 0) throw ValidationError("schedule needs total >= 1 and step >= 0");
  const int warmup = std::clamp(static_cast<int>(std::lround(warmup_fraction * total)), 1, total);
  if (step < warmup) return base * (step + 1) / warmup;
  if (total == warmup) return base;
  const double progress = std::min(1.0, static_cast<double>(step - warmup) / (total - warmup));
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

AdamW::AdamW(ParamStore<float>& params, const OptimConfig& config)
    : params_(&params), config_(config) {
  for (const auto& t : params.tensors()) {
    m_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0f);
    v_.emplace_back(static_cast<std::size_t>(t.numel()), 0.0f);
  }
}

void AdamW::step(double lr) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const auto& tensors = params_->tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    auto p = tensors[i];
    if (!p.has_grad()) continue;
    const auto g = p.grad_or_zeros();
    auto w = p.mutable_values();
    const double decay = p.rank() >= 2 ? lr * config_.weight_decay : 0.0;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = static_cast<float>(b1 * m[k] + (1 - b1) * g[k]);
      v[k] = static_cast<float>(b2 * v[k] + (1 - b2) * static_cast<double>(g[k]) * g[k]);
      const double update = (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.eps);
      w[k] = static_cast<float>(w[k] - decay * w[k] - lr * update);
    }
  }
}

void AdamW::store(TensorTable& table, const std::string& prefix) const {
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const auto& name = params_->names()[i];
    const auto& shape = params_->tensors()[i].shape();
    table[prefix + "m." + name] = StoredTensor{shape, m_[i]};
    table[prefix + "v." + name] = StoredTensor{shape, v_[i]};
  }
  put_scalar(table, prefix + "t", static_cast<double>(t_));
}

void AdamW::restore(const TensorTable& table, const std::string& prefix) {
  for (std::size_t i = 0; i < m_.size(); ++i) {
    const auto& name = params_->names()[i];
    for (auto [key, dst] : {std::pair{prefix + "m." + name, &m_[i]}, std::pair{prefix + "v." + name, &v_[i]}}) {
      const auto it = table.find(key);
      if (it == table.end() || it->second.data.size() != dst->size()) {
        throw IoError("checkpoint lacks optimizer state " + key);
      }
      *dst = it->second.data;
    }
  }
  t_ = static_cast<long long>(get_scalar(table, prefix + "t"));
}

}  // namespace nvs
