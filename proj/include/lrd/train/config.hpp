#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lrd/data/synthetic.hpp"
#include "lrd/model/fusion.hpp"
#include "lrd/model/head.hpp"
#include "lrd/model/pyramid.hpp"

namespace lrd {

struct ScaleJitterConfig {
  double alpha_min = 0.8;
  double alpha_max = 1.0;
  void validate() const;
};

/// Independent generator for one purpose (initialisation, shuffling, jitter,
/// ...) of a run with the given seed.
std::mt19937_64 seeded_stream(std::uint64_t seed, std::uint32_t purpose);

/// Uniform draw in [alpha_min, alpha_max].
double sample_scale(const ScaleJitterConfig& cfg, std::mt19937_64& rng);

enum class KdReduction { Mean, Sum };

struct LossWeights {
  double lambda = 1.0;  // fused-branch detection loss
  double gamma = 0.2;   // share of the feature-matching term in the student loss
  double tau = 3.0;     // feature-matching magnitude
  KdReduction kd_reduction = KdReduction::Mean;
  void validate() const;
};

struct OptimizerConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Fractions of the total step count where the rate is multiplied by `decay`.
  std::vector<double> milestones{8.0 / 12.0, 11.0 / 12.0};
  double decay = 0.1;
  /// Linear ramp from warmup_factor * lr to lr over the first warmup_steps.
  int warmup_steps = 100;
  double warmup_factor = 1.0 / 3.0;
  /// Global L2 norm the raw gradients are rescaled to when they exceed it;
  /// 0 disables clipping.
  double grad_clip_norm = 10.0;
  void validate() const;
};

/// How the low-resolution branch of a teacher is trained.
///  Aligned: shifted pyramid, shared head levels (label s-m pairs with s).
///  Vanilla: the low image runs through the same levels as the high image.
///  Single:  high-resolution branch only.
enum class TeacherMode { Aligned, Vanilla, Single };
enum class FusionStrategy { TwoStep, Joint };

std::string to_string(TeacherMode m);
TeacherMode parse_teacher_mode(const std::string& s);
std::string to_string(FusionStrategy s);
FusionStrategy parse_fusion_strategy(const std::string& s);
std::string to_string(KdReduction r);
KdReduction parse_kd_reduction(const std::string& s);

struct TeacherConfig {
  TeacherMode mode = TeacherMode::Aligned;
  FusionStrategy strategy = FusionStrategy::TwoStep;
  /// Whether a fusion module is trained at all (single-H teachers have none).
  bool fusion = true;
  /// Epochs of the fusion-only phase of the two-step strategy.
  int fusion_epochs = 4;
};

struct StudentConfig {
  int epochs = 12;
  bool kd = true;
};

struct DataConfig {
  SyntheticSceneSpec scene;
  int train_images = 2000;
  /// Validation samples follow the training samples in the same stream.
  int val_images = 200;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int k = 2;
  BackboneConfig backbone;
  HeadConfig head;
  FusionConfig fusion;
  ScaleJitterConfig jitter;
  LossWeights loss;
  OptimizerConfig optim;
  TeacherConfig teacher;
  StudentConfig student;
  DataConfig data;
  int epochs = 12;
  int batch_size = 8;
  /// A metrics row every this many optimizer steps.
  int log_interval = 1;
  std::string out_dir = "runs";

  int level_shift() const { return shift_offset(k); }
  ResolutionSpec resolution() const;
  /// Levels the head sees on the high-resolution pyramid.
  int head_min_level() const { return backbone.min_level + level_shift(); }
  int head_max_level() const { return backbone.max_level; }

  /// Checks every field and the cross-field constraints; messages name the
  /// offending key.
  void validate() const;
};

}  // namespace lrd
