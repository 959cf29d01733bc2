#include "lrd/train/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace lrd {

double learning_rate_at(const OptimizerConfig& cfg, std::int64_t step, std::int64_t total_steps) {
  double lr = cfg.lr;
  for (double frac : cfg.milestones) {
    if (step >= std::llround(frac * static_cast<double>(total_steps))) lr *= cfg.decay;
  }
  if (step < cfg.warmup_steps) {
    const double t = static_cast<double>(step) / cfg.warmup_steps;
    lr *= cfg.warmup_factor + (1.0 - cfg.warmup_factor) * t;
  }
  return lr;
}

Sgd::Sgd(OptimizerConfig cfg, ParamList params, std::int64_t total_steps)
    : cfg_(std::move(cfg)), params_(std::move(params)) {
  cfg_.validate();
  state_.total_steps = total_steps;
  state_.momentum.resize(params_.size());
}

void Sgd::step() {
  const auto rate = static_cast<float>(lr());
  const auto mom = static_cast<float>(cfg_.momentum);
  const auto wd = static_cast<float>(cfg_.weight_decay);
  double sq = 0.0;
  for (const auto& param : params_) {
    if (!param.tensor.requires_grad() || !param.tensor.has_grad()) continue;
    for (float g : param.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  last_grad_norm_ = std::sqrt(sq);
  float clip = 1.0f;
  if (cfg_.grad_clip_norm > 0.0 && last_grad_norm_ > cfg_.grad_clip_norm) {
    clip = static_cast<float>(cfg_.grad_clip_norm / last_grad_norm_);
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor p = params_[i].tensor;
    if (!p.requires_grad() || !p.has_grad()) continue;
    auto g = p.grad();
    auto v = p.data_mut();
    auto& buf = state_.momentum[i];
    const bool first = buf.empty();
    if (first) buf.resize(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) {
      const float d = clip * g[j] + wd * v[j];
      buf[j] = first ? d : mom * buf[j] + d;
      v[j] -= rate * buf[j];
    }
    p.clear_grad();
  }
  ++state_.step;
}

void Sgd::restore(OptimizerState state) {
  if (state.momentum.size() != params_.size()) {
    throw std::invalid_argument("optimizer state holds " + std::to_string(state.momentum.size()) +
                                " buffers for " + std::to_string(params_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!state.momentum[i].empty() && static_cast<std::int64_t>(state.momentum[i].size()) != params_[i].tensor.numel()) {
      throw std::invalid_argument("optimizer buffer size mismatch for " + params_[i].name);
    }
  }
  state_ = std::move(state);
}

}  // namespace lrd
