#include "lrd/train/loops.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <stdexcept>

#include "lrd/train/steps.hpp"

namespace lrd {

namespace {

// Purposes for seeded_stream; 1, 2 and 4 are taken by model initialisation.
constexpr std::uint32_t kShuffleTeacher = 3;
constexpr std::uint32_t kJitter = 5;
constexpr std::uint32_t kShuffleFusion = 6;
constexpr std::uint32_t kShuffleStudent = 7;

void emit(const MetricsSink& sink, const MetricsRow& row, const LossWeights& w) {
  const auto problems = audit_report(row.report.values(), w);
  if (!problems.empty()) {
    throw std::logic_error("loss identity violated at " + row.phase + " step " + std::to_string(row.step) + ": " +
                           problems.front());
  }
  if (sink) sink(row);
}

bool should_log(std::int64_t step, std::int64_t total, int interval) {
  return step % interval == 0 || step == total;
}

}  // namespace

TrainingData make_training_data(const DataConfig& cfg) {
  TrainingData d;
  d.train = generate_dataset(cfg.scene, cfg.train_images, 0);
  d.val = generate_dataset(cfg.scene, cfg.val_images, static_cast<std::uint64_t>(cfg.train_images));
  return d;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t samples, int batch_size, std::mt19937_64& rng) {
  std::vector<std::size_t> order(samples);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<std::size_t>> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i + bs <= samples; i += bs) out.emplace_back(order.begin() + i, order.begin() + i + bs);
  return out;
}

TrainResult train_teacher_phase1(Detector& model, const Dataset& data, const ExperimentConfig& cfg,
                                 const MetricsSink& sink) {
  const bool joint = cfg.teacher.strategy == FusionStrategy::Joint && model.has_fusion();
  const ParamList params = joint ? model.parameters() : model.detector_parameters();
  set_trainable(params, true);
  const auto spec = cfg.resolution();
  const std::int64_t per_epoch = static_cast<std::int64_t>(data.size()) / cfg.batch_size;
  Sgd opt(cfg.optim, params, per_epoch * cfg.epochs);
  auto shuffle = seeded_stream(cfg.seed, kShuffleTeacher);
  auto jitter = seeded_stream(cfg.seed, kJitter);
  TeacherStepOptions step_opt;
  step_opt.mode = cfg.teacher.mode;
  step_opt.with_fusion = joint;
  step_opt.lambda = cfg.loss.lambda;
  const std::string phase = joint ? "joint" : "align";

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(data.size(), cfg.batch_size, shuffle)) {
      const TrainBatch batch = make_batch(data, idx);
      const double lr = opt.lr();
      LossReport report = teacher_step(model, batch, spec, cfg.jitter, jitter, opt, step_opt);
      const std::int64_t step = opt.state().step;
      if (should_log(step, opt.state().total_steps, cfg.log_interval)) {
        emit(sink, MetricsRow{phase, step, epoch + 1, lr, std::move(report)}, cfg.loss);
      }
    }
  }
  return TrainResult{opt.state(), opt.state().step};
}

TrainResult train_fusion_phase(Detector& model, const Dataset& data, const ExperimentConfig& cfg,
                               const MetricsSink& sink) {
  if (!model.has_fusion()) throw std::invalid_argument("fusion phase needs a model with a fusion module");
  const ParamList frozen = model.detector_parameters();
  set_trainable(frozen, false);
  set_trainable(model.fusion_parameters(), true);
  const auto spec = cfg.resolution();
  const std::int64_t per_epoch = static_cast<std::int64_t>(data.size()) / cfg.batch_size;
  Sgd opt(cfg.optim, model.fusion_parameters(), per_epoch * cfg.teacher.fusion_epochs);
  auto shuffle = seeded_stream(cfg.seed, kShuffleFusion);
  for (int epoch = 0; epoch < cfg.teacher.fusion_epochs; ++epoch) {
    for (const auto& idx : epoch_batches(data.size(), cfg.batch_size, shuffle)) {
      const TrainBatch batch = make_batch(data, idx);
      const double lr = opt.lr();
      LossReport report = fusion_step(model, batch, spec, cfg.loss.lambda, opt);
      const std::int64_t step = opt.state().step;
      if (should_log(step, opt.state().total_steps, cfg.log_interval)) {
        emit(sink, MetricsRow{"fusion", step, epoch + 1, lr, std::move(report)}, cfg.loss);
      }
    }
  }
  set_trainable(frozen, true);
  return TrainResult{opt.state(), opt.state().step};
}

Detector train_teacher_two_step(const Dataset& data, const ExperimentConfig& cfg, const MetricsSink& sink) {
  ExperimentConfig c = cfg;
  c.teacher.strategy = FusionStrategy::TwoStep;
  Detector model = Detector::from_config(c);
  train_teacher_phase1(model, data, c, sink);
  if (model.has_fusion() && c.teacher.fusion_epochs > 0) train_fusion_phase(model, data, c, sink);
  return model;
}

Detector train_teacher_joint(const Dataset& data, const ExperimentConfig& cfg, const MetricsSink& sink) {
  ExperimentConfig c = cfg;
  c.teacher.strategy = FusionStrategy::Joint;
  Detector model = Detector::from_config(c);
  train_teacher_phase1(model, data, c, sink);
  return model;
}

Detector train_teacher(const Dataset& data, const ExperimentConfig& cfg, const MetricsSink& sink) {
  return cfg.teacher.strategy == FusionStrategy::Joint ? train_teacher_joint(data, cfg, sink)
                                                       : train_teacher_two_step(data, cfg, sink);
}

Detector init_student(const Detector& teacher, const ExperimentConfig& cfg) {
  Detector student = Detector::from_config(cfg, true);
  copy_values(teacher.detector_parameters(), student.detector_parameters());
  return student;
}

Detector train_student(const Detector& teacher, const Dataset& data, const ExperimentConfig& cfg,
                       const MetricsSink& sink) {
  LossWeights weights = cfg.loss;
  if (!cfg.student.kd) weights.gamma = 0.0;
  Detector student = init_student(teacher, cfg);
  const ParamList params = student.detector_parameters();
  set_trainable(params, true);
  const auto spec = cfg.resolution();
  const std::int64_t per_epoch = static_cast<std::int64_t>(data.size()) / cfg.batch_size;
  Sgd opt(cfg.optim, params, per_epoch * cfg.student.epochs);
  auto shuffle = seeded_stream(cfg.seed, kShuffleStudent);
  for (int epoch = 0; epoch < cfg.student.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(data.size(), cfg.batch_size, shuffle)) {
      const TrainBatch batch = make_batch(data, idx);
      const double lr = opt.lr();
      LossReport report = student_step(student, teacher, batch, spec, weights, opt);
      const std::int64_t step = opt.state().step;
      if (should_log(step, opt.state().total_steps, cfg.log_interval)) {
        emit(sink, MetricsRow{"student", step, epoch + 1, lr, std::move(report)}, weights);
      }
    }
  }
  return student;
}

std::string to_string(EvalInput in) {
  switch (in) {
    case EvalInput::High: return "H";
    case EvalInput::Low: return "L";
    case EvalInput::Fused: return "fused";
  }
  return "?";
}

EvalInput parse_eval_input(const std::string& s) {
  std::string n = s;
  for (char& c : n) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (n == "h" || n == "high") return EvalInput::High;
  if (n == "l" || n == "low") return EvalInput::Low;
  if (n == "fused") return EvalInput::Fused;
  throw std::invalid_argument("input: expected H, L or fused, got '" + s + "'");
}

std::vector<std::vector<Box>> predict(const Detector& model, const Dataset& data, EvalInput input,
                                      const ResolutionSpec& spec, int batch_size) {
  if (input == EvalInput::Fused && !model.has_fusion()) {
    throw std::invalid_argument("fused evaluation needs a model with fusion parameters");
  }
  NoGradGuard guard;
  std::vector<std::vector<Box>> out;
  out.reserve(data.size());
  const HeadConfig& hc = model.head().config();
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(data.size(), start + static_cast<std::size_t>(batch_size)); ++i) {
      idx.push_back(i);
    }
    const TrainBatch batch = make_batch(data, idx);
    const double h = static_cast<double>(batch.images.dim(2)), w = static_cast<double>(batch.images.dim(3));
    double frame = 1.0;  // high-frame pixels per stride-frame pixel
    HeadOutputs<float> outputs;
    if (input == EvalInput::High) {
      outputs = model.head().forward(model.high_pyramid(batch.images));
    } else if (input == EvalInput::Fused) {
      const auto fp = model.fuse(model.high_pyramid(batch.images),
                                 model.aligned_low_pyramid(low_resolution(batch, spec.k)));
      outputs = model.head().forward(fp.pyramid);
    } else if (model.mode() == TeacherMode::Aligned) {
      outputs = model.head().forward(model.aligned_low_pyramid(low_resolution(batch, spec.k)));
    } else {
      outputs = model.head().forward(model.native_low_pyramid(low_resolution(batch, spec.k)));
      frame = spec.k;
    }
    for (std::size_t n = 0; n < idx.size(); ++n) {
      auto dets = decode_detections(outputs, static_cast<std::int64_t>(n), hc, w / frame, h / frame);
      if (frame != 1.0) {
        for (Box& b : dets) b = b.scaled(frame);
      }
      out.push_back(std::move(dets));
    }
  }
  return out;
}

EvalResult evaluate_detector(const Detector& model, const Dataset& data, EvalInput input,
                             const ExperimentConfig& cfg) {
  EvalOptions opt;
  opt.num_classes = cfg.head.num_classes;
  opt.max_detections = cfg.head.max_detections;
  opt.image_side = cfg.data.scene.image_size;
  std::vector<std::vector<Box>> gts;
  gts.reserve(data.size());
  for (const auto& s : data) gts.push_back(s.boxes);
  return evaluate_ap(predict(model, data, input, cfg.resolution()), gts, opt);
}

}  // namespace lrd
