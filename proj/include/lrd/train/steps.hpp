#pragma once

#include <random>
#include <span>
#include <vector>

#include "lrd/data/synthetic.hpp"
#include "lrd/train/config.hpp"
#include "lrd/train/detector.hpp"
#include "lrd/train/optim.hpp"
#include "lrd/train/report.hpp"

namespace lrd {

/// Normalised high-resolution images and their boxes in that frame.
struct TrainBatch {
  Tensor images;
  std::vector<std::vector<Box>> boxes;
};

TrainBatch make_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Low-resolution counterpart of a batch: exact k x k box average.
Tensor low_resolution(const TrainBatch& batch, int k);

/// A jittered branch input: the image resized to `content` pixels and
/// zero-padded to the pyramid's multiple; boxes moved into the frame the
/// branch's strides are expressed in.
struct BranchInput {
  Tensor image;
  std::vector<std::vector<Box>> boxes;
  double factor = 1.0;  // applied scale, after quantisation
};

/// Scales an image whose sides are k_image times a base side by alpha. The
/// base side is rounded to whole pixels first and the output is k_image times
/// that, so one alpha gives pixel-aligned high (k_image = k) and low
/// (k_image = 1) branches. The result is zero-padded to `multiple`. Boxes,
/// given in the high frame, are scaled by the applied factor and divided by
/// `box_divisor`.
BranchInput jitter_branch(const Tensor& image, const std::vector<std::vector<Box>>& boxes, double alpha,
                          int k_image, std::int64_t multiple, double box_divisor);

/// Detection loss of `head` on a pyramid with boxes in the pyramid's stride frame.
DetectionLoss<float> branch_loss(const Head& head, const FeaturePyramid& pyramid,
                                 const std::vector<std::vector<Box>>& boxes);

struct TeacherStepOptions {
  TeacherMode mode = TeacherMode::Aligned;
  /// Adds lambda * (fused detection loss); the branches then share one scale
  /// draw so the fused pair stays pixel-aligned.
  bool with_fusion = false;
  double lambda = 1.0;
};

struct Objective {
  Tensor total;
  LossReport report;
};

/// Builds the teacher objective for given branch scales without stepping.
Objective teacher_objective(const Detector& model, const TrainBatch& batch, const ResolutionSpec& spec,
                            double alpha_high, double alpha_low, const TeacherStepOptions& opt);

/// One multi-scale teacher step: independent scale draws for the two branches
/// (one shared draw when fusion is trained jointly), backward, SGD update.
LossReport teacher_step(Detector& model, const TrainBatch& batch, const ResolutionSpec& spec,
                        const ScaleJitterConfig& jitter, std::mt19937_64& rng, Sgd& optimizer,
                        const TeacherStepOptions& opt);

/// teacher_step in aligned mode without fusion: L_Align = L_high + L_low.
LossReport aligned_ms_step(Detector& model, const TrainBatch& batch, const ResolutionSpec& spec,
                           const ScaleJitterConfig& jitter, std::mt19937_64& rng, Sgd& optimizer);

/// Fusion-only step on the unjittered pair; the optimizer should own only the
/// fusion parameters. L_F = L_T = lambda * L_fused.
LossReport fusion_step(Detector& model, const TrainBatch& batch, const ResolutionSpec& spec, double lambda,
                       Sgd& optimizer);

/// tau * sum over pairs of the mean (or sum) of |teacher - student|, teacher
/// values detached. Shapes must agree pairwise.
template <typename T>
BasicTensor<T> feature_matching_loss(const std::vector<BasicTensor<T>>& teacher,
                                     const std::vector<BasicTensor<T>>& student, double tau, KdReduction reduction);

/// tau * sum over teacher levels s of the mean (or sum) of |T_s - S_{s-m}|.
/// Teacher features are constants. Throws AlignmentError when a level is
/// missing or shapes differ.
Tensor kd_loss(const FeaturePyramid& teacher, const FeaturePyramid& student, int m, double tau,
               KdReduction reduction = KdReduction::Mean);

/// Pyramid the student imitates: fused levels for a fusion teacher, high
/// levels otherwise. Computed without a graph.
FeaturePyramid teacher_targets(const Detector& teacher, const TrainBatch& batch, const ResolutionSpec& spec);

/// L_S = gamma * L_KD + (1 - gamma) * L_low on the unjittered low image. With
/// gamma = 0 the teacher is not run and L_KD is absent from the report.
Objective student_objective(const Detector& student, const Detector& teacher, const TrainBatch& batch,
                            const ResolutionSpec& spec, const LossWeights& weights);

LossReport student_step(Detector& student, const Detector& teacher, const TrainBatch& batch,
                        const ResolutionSpec& spec, const LossWeights& weights, Sgd& optimizer);

}  // namespace lrd
