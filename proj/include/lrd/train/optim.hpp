#pragma once

#include <cstdint>
#include <vector>

#include "lrd/model/params.hpp"
#include "lrd/train/config.hpp"

namespace lrd {

/// Learning rate at 0-based step `step` of a run with `total_steps` steps.
double learning_rate_at(const OptimizerConfig& cfg, std::int64_t step, std::int64_t total_steps);

struct OptimizerState {
  std::int64_t step = 0;
  std::int64_t total_steps = 0;
  /// One buffer per parameter, empty until the parameter first gets a gradient.
  std::vector<std::vector<float>> momentum;
};

/// Momentum SGD with coupled weight decay:
///   buf = momentum * buf + (grad + wd * p);  p -= lr * buf
/// With grad_clip_norm > 0 the raw gradients are first scaled by
/// min(1, clip / global_norm).
/// Parameters without a gradient buffer (not reached by the loss) are skipped
/// entirely, weight decay included.
class Sgd {
 public:
  Sgd(OptimizerConfig cfg, ParamList params, std::int64_t total_steps);

  double lr() const { return learning_rate_at(cfg_, state_.step, state_.total_steps); }
  /// Applies the update, advances the step counter and releases all grads.
  void step();

  const ParamList& params() const { return params_; }
  const OptimizerState& state() const { return state_; }
  /// Global gradient norm seen by the last step, before clipping.
  double last_grad_norm() const { return last_grad_norm_; }
  void restore(OptimizerState state);

 private:
  OptimizerConfig cfg_;
  ParamList params_;
  OptimizerState state_;
  double last_grad_norm_ = 0.0;
};

}  // namespace lrd
