#pragma once

#include <functional>
#include <vector>

#include "lrd/data/eval.hpp"
#include "lrd/data/synthetic.hpp"
#include "lrd/train/config.hpp"
#include "lrd/train/detector.hpp"
#include "lrd/train/optim.hpp"
#include "lrd/train/report.hpp"

namespace lrd {

struct TrainingData {
  Dataset train;
  Dataset val;
};

TrainingData make_training_data(const DataConfig& cfg);

/// Receives every logged row; rows have already passed the identity audit.
using MetricsSink = std::function<void(const MetricsRow&)>;

/// Epoch e visits the samples in the order of a permutation drawn from `rng`;
/// a trailing partial batch is dropped.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t samples, int batch_size, std::mt19937_64& rng);

struct TrainResult {
  OptimizerState optimizer;
  std::int64_t steps = 0;
};

/// Multi-scale training of backbone and head (and fusion, for the joint
/// strategy). Phase name "align" or "joint".
TrainResult train_teacher_phase1(Detector& model, const Dataset& data, const ExperimentConfig& cfg,
                                 const MetricsSink& sink);

/// Fusion-only phase: backbone and head frozen, unjittered pairs, phase "fusion".
TrainResult train_fusion_phase(Detector& model, const Dataset& data, const ExperimentConfig& cfg,
                               const MetricsSink& sink);

Detector train_teacher_two_step(const Dataset& data, const ExperimentConfig& cfg, const MetricsSink& sink);
Detector train_teacher_joint(const Dataset& data, const ExperimentConfig& cfg, const MetricsSink& sink);
/// Dispatches on cfg.teacher (strategy, and whether a fusion module exists).
Detector train_teacher(const Dataset& data, const ExperimentConfig& cfg, const MetricsSink& sink);

/// Fresh aligned detector whose backbone and head copy the teacher's values.
Detector init_student(const Detector& teacher, const ExperimentConfig& cfg);

/// Trains a student initialised from the teacher; gamma is forced to 0 when
/// cfg.student.kd is false. Phase "student". The teacher is only read.
Detector train_student(const Detector& teacher, const Dataset& data, const ExperimentConfig& cfg,
                       const MetricsSink& sink);

enum class EvalInput { High, Low, Fused };
std::string to_string(EvalInput in);
EvalInput parse_eval_input(const std::string& s);

/// Detections in the high-resolution frame. Low inputs of aligned models go
/// through the shifted pyramid; other models see them natively and their
/// boxes are scaled back up by k.
std::vector<std::vector<Box>> predict(const Detector& model, const Dataset& data, EvalInput input,
                                      const ResolutionSpec& spec, int batch_size = 16);

EvalResult evaluate_detector(const Detector& model, const Dataset& data, EvalInput input,
                             const ExperimentConfig& cfg);

}  // namespace lrd
