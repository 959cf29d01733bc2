#include "lrd/train/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

namespace lrd {

namespace {

std::string normalise(std::string s) {
  for (char& c : s) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

}  // namespace

void ScaleJitterConfig::validate() const {
  require(alpha_min > 0.0 && alpha_min <= alpha_max && alpha_max <= 1.0,
          "jitter: need 0 < alpha_min <= alpha_max <= 1");
}

std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint32_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), purpose};
  return std::mt19937_64(seq);
}

double sample_scale(const ScaleJitterConfig& cfg, std::mt19937_64& rng) {
  if (cfg.alpha_min == cfg.alpha_max) return cfg.alpha_min;
  std::uniform_real_distribution<double> dist(cfg.alpha_min, cfg.alpha_max);
  return dist(rng);
}

void LossWeights::validate() const {
  require(gamma >= 0.0 && gamma <= 1.0, "loss.gamma must be in [0,1]");
  require(lambda >= 0.0 && std::isfinite(lambda), "loss.lambda must be finite and >= 0");
  require(tau >= 0.0 && std::isfinite(tau), "loss.tau must be finite and >= 0");
}

void OptimizerConfig::validate() const {
  require(lr > 0.0 && std::isfinite(lr), "optim.lr must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "optim.momentum must be in [0,1)");
  require(weight_decay >= 0.0, "optim.weight_decay must be >= 0");
  require(decay > 0.0 && decay <= 1.0, "optim.decay must be in (0,1]");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    require(milestones[i] > 0.0 && milestones[i] <= 1.0, "optim.milestones must be fractions in (0,1]");
    if (i > 0) require(milestones[i] > milestones[i - 1], "optim.milestones must be strictly increasing");
  }
  require(warmup_steps >= 0, "optim.warmup_steps must be >= 0");
  require(warmup_factor > 0.0 && warmup_factor <= 1.0, "optim.warmup_factor must be in (0,1]");
  require(grad_clip_norm >= 0.0 && std::isfinite(grad_clip_norm), "optim.grad_clip_norm must be >= 0");
}

std::string to_string(TeacherMode m) {
  switch (m) {
    case TeacherMode::Aligned: return "aligned";
    case TeacherMode::Vanilla: return "vanilla";
    case TeacherMode::Single: return "single";
  }
  return "?";
}

TeacherMode parse_teacher_mode(const std::string& s) {
  const auto n = normalise(s);
  if (n == "aligned") return TeacherMode::Aligned;
  if (n == "vanilla") return TeacherMode::Vanilla;
  if (n == "single") return TeacherMode::Single;
  throw std::invalid_argument("teacher.mode: expected aligned, vanilla or single, got '" + s + "'");
}

std::string to_string(FusionStrategy s) { return s == FusionStrategy::TwoStep ? "two-step" : "joint"; }

FusionStrategy parse_fusion_strategy(const std::string& s) {
  const auto n = normalise(s);
  if (n == "two_step") return FusionStrategy::TwoStep;
  if (n == "joint") return FusionStrategy::Joint;
  throw std::invalid_argument("strategy: expected two-step or joint, got '" + s + "'");
}

std::string to_string(KdReduction r) { return r == KdReduction::Mean ? "mean" : "sum"; }

KdReduction parse_kd_reduction(const std::string& s) {
  const auto n = normalise(s);
  if (n == "mean") return KdReduction::Mean;
  if (n == "sum") return KdReduction::Sum;
  throw std::invalid_argument("loss.kd_reduction: expected mean or sum, got '" + s + "'");
}

ResolutionSpec ExperimentConfig::resolution() const {
  return ResolutionSpec::make(data.scene.image_size, data.scene.image_size, k);
}

void ExperimentConfig::validate() const {
  int m = 0;
  try {
    m = shift_offset(k);
  } catch (const std::exception& e) {
    throw std::invalid_argument(std::string("k: ") + e.what());
  }
  backbone.validate();
  head.validate();
  fusion.validate(backbone.pyramid_channels);
  jitter.validate();
  loss.validate();
  optim.validate();
  data.scene.validate();
  require(data.train_images >= 1, "data.train_images must be >= 1");
  require(data.val_images >= 1, "data.val_images must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(data.train_images >= batch_size, "data.train_images must be >= batch_size");
  require(log_interval >= 1, "log_interval must be >= 1");
  require(teacher.fusion_epochs >= 0, "teacher.fusion_epochs must be >= 0");
  require(student.epochs >= 1, "student.epochs must be >= 1");
  require(!out_dir.empty(), "out_dir must not be empty");

  const int head_levels = backbone.max_level - (backbone.min_level + m) + 1;
  require(head_levels >= kMinAlignedLevels,
          "k: level shift m=" + std::to_string(m) + " leaves " + std::to_string(std::max(0, head_levels)) +
              " aligned levels; at least " + std::to_string(kMinAlignedLevels) + " are required");
  require(head.num_levels() == head_levels,
          "head.scale_bounds: " + std::to_string(head_levels) + " head levels (" +
              std::to_string(backbone.min_level + m) + ".." + std::to_string(backbone.max_level) + ") need " +
              std::to_string(head_levels - 1) + " bounds, got " + std::to_string(head.scale_bounds.size()));
  require(head.num_classes == data.scene.num_classes, "head.num_classes must equal data.num_classes");

  const int side = data.scene.image_size;
  require(side % k == 0, "data.image_size must be divisible by k");
  const int deepest = backbone.deepest_stage_level();
  const std::int64_t high_mult = std::int64_t{1} << std::max(backbone.max_level, deepest);
  const std::int64_t low_mult = std::int64_t{1} << std::max(backbone.max_level - m, deepest);
  const std::int64_t pair_mult = std::max<std::int64_t>(high_mult, k * low_mult);
  require(side % pair_mult == 0, "data.image_size must be a multiple of " + std::to_string(pair_mult));
  require((side / k) % low_mult == 0,
          "data.image_size / k must be a multiple of " + std::to_string(low_mult));
  if (teacher.mode != TeacherMode::Aligned) {
    require((side / k) % high_mult == 0, "teacher.mode " + to_string(teacher.mode) +
                                             ": data.image_size / k must be a multiple of " +
                                             std::to_string(high_mult));
  }
}

}  // namespace lrd
