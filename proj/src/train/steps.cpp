#include "lrd/train/steps.hpp"

#include <algorithm>
#include <cmath>

#include "lrd/tensor/ops.hpp"

namespace lrd {

TrainBatch make_batch(const Dataset& data, std::span<const std::size_t> indices) {
  TrainBatch b;
  b.images = batch_images(data, indices);
  for (std::size_t i : indices) b.boxes.push_back(data.at(i).boxes);
  return b;
}

Tensor low_resolution(const TrainBatch& batch, int k) { return downsample_image(batch.images, k); }

BranchInput jitter_branch(const Tensor& image, const std::vector<std::vector<Box>>& boxes, double alpha, int k_image,
                          std::int64_t multiple, double box_divisor) {
  const std::int64_t h = image.dim(2), w = image.dim(3);
  if (k_image < 1 || h % k_image != 0 || w % k_image != 0) {
    throw InputSizeError("jitter_branch: image sides must be divisible by " + std::to_string(k_image));
  }
  const std::int64_t lh = h / k_image, lw = w / k_image;
  const std::int64_t nh = std::max<std::int64_t>(1, std::llround(static_cast<double>(lh) * alpha));
  const std::int64_t nw = std::max<std::int64_t>(1, std::llround(static_cast<double>(lw) * alpha));
  BranchInput out;
  out.image = pad_to_multiple(resize_image(image, nh * k_image, nw * k_image), multiple);
  const double fy = static_cast<double>(nh) / static_cast<double>(lh);
  const double fx = static_cast<double>(nw) / static_cast<double>(lw);
  out.factor = fy;
  out.boxes.reserve(boxes.size());
  for (const auto& img : boxes) {
    std::vector<Box> scaled;
    scaled.reserve(img.size());
    for (Box b : img) {
      b.x0 = static_cast<float>(b.x0 * fx / box_divisor);
      b.x1 = static_cast<float>(b.x1 * fx / box_divisor);
      b.y0 = static_cast<float>(b.y0 * fy / box_divisor);
      b.y1 = static_cast<float>(b.y1 * fy / box_divisor);
      scaled.push_back(b);
    }
    out.boxes.push_back(std::move(scaled));
  }
  return out;
}

DetectionLoss<float> branch_loss(const Head& head, const FeaturePyramid& pyramid,
                                 const std::vector<std::vector<Box>>& boxes) {
  std::vector<ImageTargets> targets;
  targets.reserve(boxes.size());
  for (const auto& b : boxes) targets.push_back(assign_targets(b, pyramid, head.config()));
  return detection_loss<float>(head.forward(pyramid), targets, head.config());
}

namespace {

std::int64_t pow2(int e) { return std::int64_t{1} << e; }

// Side multiples. The high multiple is also k times the aligned low multiple so
// that padded high and low images of the same content stay aligned.
std::int64_t native_multiple(const Detector& d) {
  return pow2(std::max(d.head_max_level(), d.backbone().config().deepest_stage_level()));
}
std::int64_t aligned_multiple(const Detector& d) {
  return pow2(std::max(d.head_max_level() - d.level_shift(), d.backbone().config().deepest_stage_level()));
}
std::int64_t high_multiple(const Detector& d) {
  return std::max(native_multiple(d), pow2(d.level_shift()) * aligned_multiple(d));
}

void record(LossReport& r, const std::string& prefix, const DetectionLoss<float>& l) {
  r.set(prefix + "_cls", l.cls.item());
  r.set(prefix + "_reg", l.reg.item());
  r.set(prefix + "_ctr", l.ctr.item());
  r.set(prefix, l.total.item());
}

void record_gates(LossReport& r, const FusedPyramid& fp) {
  for (const auto& [s, w] : fp.weights) {
    if (!w.defined()) continue;
    // [N,2] or [N,2,C]: the first half of each row weighs the high input.
    const std::int64_t n = w.dim(0);
    const std::int64_t per = w.numel() / (2 * n);
    const auto v = w.data();
    double hi = 0, lo = 0;
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t c = 0; c < per; ++c) {
        hi += v[static_cast<std::size_t>(i * 2 * per + c)];
        lo += v[static_cast<std::size_t>(i * 2 * per + per + c)];
      }
    }
    const double count = static_cast<double>(n * per);
    r.gates[s] = {hi / count, lo / count};
  }
}

void finish(Objective& obj, Sgd& optimizer) {
  obj.report.check_finite();
  if (obj.total.requires_grad()) obj.total.backward();
  optimizer.step();
}

}  // namespace

Objective teacher_objective(const Detector& model, const TrainBatch& batch, const ResolutionSpec& spec,
                            double alpha_high, double alpha_low, const TeacherStepOptions& opt) {
  if (spec.m != model.level_shift()) throw std::invalid_argument("resolution spec and model disagree on the level shift");
  const int k = spec.k;
  Objective obj;
  const BranchInput high = jitter_branch(batch.images, batch.boxes, alpha_high, k, high_multiple(model), 1.0);
  const FeaturePyramid p_high = model.high_pyramid(high.image);
  const auto l_high = branch_loss(model.head(), p_high, high.boxes);
  record(obj.report, "L_high", l_high);
  obj.total = l_high.total;

  const Tensor low_image = opt.mode == TeacherMode::Single && !opt.with_fusion ? Tensor() : low_resolution(batch, k);
  std::optional<FeaturePyramid> p_low_aligned;
  if (opt.mode != TeacherMode::Single) {
    FeaturePyramid p_low;
    std::vector<std::vector<Box>> low_boxes;
    if (opt.mode == TeacherMode::Aligned) {
      BranchInput low = jitter_branch(low_image, batch.boxes, alpha_low, 1, aligned_multiple(model), 1.0);
      p_low = model.aligned_low_pyramid(low.image);
      p_low_aligned = p_low;
      low_boxes = std::move(low.boxes);
    } else {
      BranchInput low = jitter_branch(low_image, batch.boxes, alpha_low, 1, native_multiple(model), k);
      p_low = model.native_low_pyramid(low.image);
      low_boxes = std::move(low.boxes);
    }
    const auto l_low = branch_loss(model.head(), p_low, low_boxes);
    record(obj.report, "L_low", l_low);
    obj.total = add(l_high.total, l_low.total);
    obj.report.set("L_Align", obj.total.item());
  }

  if (opt.with_fusion) {
    if (!p_low_aligned) {
      BranchInput low = jitter_branch(low_image, batch.boxes, alpha_low, 1, aligned_multiple(model), 1.0);
      p_low_aligned = model.aligned_low_pyramid(low.image);
    }
    auto fused_loss = [&] {
      const FusedPyramid fp = model.fuse(p_high, *p_low_aligned);
      record_gates(obj.report, fp);
      return branch_loss(model.head(), fp.pyramid, high.boxes);
    };
    if (opt.lambda > 0.0) {
      const auto l_fused = fused_loss();
      record(obj.report, "L_fused", l_fused);
      const Tensor l_f = scale(l_fused.total, static_cast<float>(opt.lambda));
      obj.report.set("L_F", l_f.item());
      obj.total = add(obj.total, l_f);
    } else {
      // A zero weight keeps the fused branch out of the graph entirely.
      NoGradGuard guard;
      record(obj.report, "L_fused", fused_loss());
      obj.report.set("L_F", 0.0);
    }
  }
  obj.report.set("L_T", obj.total.item());
  return obj;
}

LossReport teacher_step(Detector& model, const TrainBatch& batch, const ResolutionSpec& spec,
                        const ScaleJitterConfig& jitter, std::mt19937_64& rng, Sgd& optimizer,
                        const TeacherStepOptions& opt) {
  const double alpha_high = sample_scale(jitter, rng);
  const double alpha_low = sample_scale(jitter, rng);
  Objective obj = teacher_objective(model, batch, spec, alpha_high, opt.with_fusion ? alpha_high : alpha_low, opt);
  finish(obj, optimizer);
  return obj.report;
}

LossReport aligned_ms_step(Detector& model, const TrainBatch& batch, const ResolutionSpec& spec,
                           const ScaleJitterConfig& jitter, std::mt19937_64& rng, Sgd& optimizer) {
  return teacher_step(model, batch, spec, jitter, rng, optimizer, TeacherStepOptions{});
}

LossReport fusion_step(Detector& model, const TrainBatch& batch, const ResolutionSpec& spec, double lambda,
                       Sgd& optimizer) {
  if (spec.m != model.level_shift()) throw std::invalid_argument("resolution spec and model disagree on the level shift");
  FeaturePyramid p_high, p_low;
  {
    NoGradGuard guard;
    p_high = model.high_pyramid(batch.images);
    p_low = model.aligned_low_pyramid(low_resolution(batch, spec.k));
  }
  Objective obj;
  auto fused_loss = [&] {
    const FusedPyramid fp = model.fuse(p_high, p_low);
    record_gates(obj.report, fp);
    return branch_loss(model.head(), fp.pyramid, batch.boxes);
  };
  if (lambda > 0.0) {
    const auto l_fused = fused_loss();
    record(obj.report, "L_fused", l_fused);
    obj.total = scale(l_fused.total, static_cast<float>(lambda));
  } else {
    NoGradGuard guard;
    record(obj.report, "L_fused", fused_loss());
    obj.total = Tensor::scalar(0.0f);
  }
  obj.report.set("L_F", obj.total.item());
  obj.report.set("L_T", obj.total.item());
  finish(obj, optimizer);
  return obj.report;
}

template <typename T>
BasicTensor<T> feature_matching_loss(const std::vector<BasicTensor<T>>& teacher,
                                     const std::vector<BasicTensor<T>>& student, double tau, KdReduction reduction) {
  if (teacher.size() != student.size() || teacher.empty()) {
    throw AlignmentError("feature matching: " + std::to_string(teacher.size()) + " teacher levels vs " +
                         std::to_string(student.size()) + " student levels");
  }
  BasicTensor<T> acc;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    if (teacher[i].shape() != student[i].shape()) {
      throw AlignmentError("feature matching: teacher " + shape_str(teacher[i].shape()) + " vs student " +
                           shape_str(student[i].shape()));
    }
    const BasicTensor<T> diff = abs(sub(student[i], teacher[i].detach()));
    const BasicTensor<T> term = reduction == KdReduction::Mean ? mean(diff) : sum(diff);
    acc = acc.defined() ? add(acc, term) : term;
  }
  return scale(acc, static_cast<T>(tau));
}

template Tensor feature_matching_loss<float>(const std::vector<Tensor>&, const std::vector<Tensor>&, double,
                                             KdReduction);
template Tensor64 feature_matching_loss<double>(const std::vector<Tensor64>&, const std::vector<Tensor64>&, double,
                                                KdReduction);

Tensor kd_loss(const FeaturePyramid& teacher, const FeaturePyramid& student, int m, double tau,
               KdReduction reduction) {
  if (teacher.levels.size() != student.levels.size()) {
    throw AlignmentError("feature matching: teacher has " + std::to_string(teacher.levels.size()) +
                         " levels, student " + std::to_string(student.levels.size()));
  }
  std::vector<Tensor> t, s;
  for (const auto& [label, feat] : teacher.levels) {
    auto it = student.levels.find(label - m);
    if (it == student.levels.end()) {
      throw AlignmentError("feature matching: no student level " + std::to_string(label - m) +
                           " for teacher level " + std::to_string(label));
    }
    if (it->second.shape() != feat.shape()) {
      throw AlignmentError("feature matching: teacher level " + std::to_string(label) + " is " +
                           shape_str(feat.shape()) + " but student level " + std::to_string(label - m) + " is " +
                           shape_str(it->second.shape()));
    }
    t.push_back(feat);
    s.push_back(it->second);
  }
  return feature_matching_loss(t, s, tau, reduction);
}

FeaturePyramid teacher_targets(const Detector& teacher, const TrainBatch& batch, const ResolutionSpec& spec) {
  NoGradGuard guard;
  FeaturePyramid high = teacher.high_pyramid(batch.images);
  if (!teacher.has_fusion()) return high;
  return teacher.fuse(high, teacher.aligned_low_pyramid(low_resolution(batch, spec.k))).pyramid;
}

Objective student_objective(const Detector& student, const Detector& teacher, const TrainBatch& batch,
                            const ResolutionSpec& spec, const LossWeights& weights) {
  if (spec.m != student.level_shift()) throw std::invalid_argument("resolution spec and student disagree on the level shift");
  Objective obj;
  const FeaturePyramid p_student = student.aligned_low_pyramid(low_resolution(batch, spec.k));
  const auto l_low = branch_loss(student.head(), p_student, batch.boxes);
  record(obj.report, "L_low", l_low);
  if (weights.gamma > 0.0) {
    const FeaturePyramid targets = teacher_targets(teacher, batch, spec);
    const Tensor kd = kd_loss(targets, p_student, spec.m, weights.tau, weights.kd_reduction);
    obj.report.set("L_KD", kd.item());
    obj.total = add(scale(kd, static_cast<float>(weights.gamma)), scale(l_low.total, static_cast<float>(1.0 - weights.gamma)));
  } else {
    obj.total = l_low.total;
  }
  obj.report.set("L_S", obj.total.item());
  return obj;
}

LossReport student_step(Detector& student, const Detector& teacher, const TrainBatch& batch,
                        const ResolutionSpec& spec, const LossWeights& weights, Sgd& optimizer) {
  Objective obj = student_objective(student, teacher, batch, spec, weights);
  finish(obj, optimizer);
  return obj.report;
}

}  // namespace lrd
