#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lrd/tensor/ops.hpp"
#include "lrd/train/gradcheck_suite.hpp"
#include "lrd/train/loops.hpp"
#include "lrd/train/steps.hpp"

using namespace lrd;

namespace {

ExperimentConfig tiny_config() {
  ExperimentConfig cfg;
  cfg.backbone.stem_width = 4;
  cfg.backbone.stage_widths = {4, 4, 4, 4};
  cfg.backbone.pyramid_channels = 4;
  cfg.head.tower_depth = 1;
  cfg.data.scene.image_size = 64;
  cfg.data.scene.class_sizes = {{6, 20}, {6, 20}, {8, 20}};
  cfg.data.scene.max_objects = 3;
  cfg.data.train_images = 16;
  cfg.data.val_images = 8;
  cfg.batch_size = 4;
  cfg.epochs = 1;
  cfg.teacher.fusion_epochs = 1;
  cfg.student.epochs = 1;
  cfg.optim.warmup_steps = 2;
  return cfg;
}

std::vector<std::vector<float>> snapshot(const ParamList& params) {
  std::vector<std::vector<float>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

FeaturePyramid constant_pyramid(const std::vector<int>& labels, float value, int shift = 0) {
  FeaturePyramid p;
  p.channels = 2;
  p.level_shift = shift;
  int side = 16;
  for (int s : labels) {
    p.levels[s] = Tensor({1, 2, side, side}, value);
    p.strides[s] = 1 << (s + shift);
    side /= 2;
  }
  return p;
}

}  // namespace

TEST(SampleScale, DegenerateRangeIsConstant) {
  std::mt19937_64 rng(3);
  ScaleJitterConfig cfg{1.0, 1.0};
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_scale(cfg, rng), 1.0);
}

TEST(SampleScale, MonteCarloMean) {
  std::mt19937_64 rng(11);
  ScaleJitterConfig cfg;
  double total = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double a = sample_scale(cfg, rng);
    ASSERT_GE(a, 0.8);
    ASSERT_LE(a, 1.0);
    total += a;
  }
  EXPECT_NEAR(total / 10000, 0.9, 0.01);
}

TEST(SampleScale, SeededSequenceRepeats) {
  ScaleJitterConfig cfg;
  auto a = seeded_stream(5, 5), b = seeded_stream(5, 5);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_scale(cfg, a), sample_scale(cfg, b));
}

TEST(SampleScale, InvalidRangeRejected) {
  EXPECT_THROW((ScaleJitterConfig{0.0, 1.0}.validate()), std::invalid_argument);
  EXPECT_THROW((ScaleJitterConfig{0.9, 0.8}.validate()), std::invalid_argument);
  EXPECT_THROW((ScaleJitterConfig{0.9, 1.2}.validate()), std::invalid_argument);
}

TEST(Sgd, ZeroGradientZeroMomentumLeavesParameters) {
  OptimizerConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  Tensor p = constant_param({3}, 1.5f);
  Sgd opt(cfg, {{"p", p}}, 10);
  for (int i = 0; i < 3; ++i) {
    sum(scale(p, 0.0f)).backward();
    opt.step();
  }
  for (float v : p.data()) EXPECT_EQ(v, 1.5f);
}

TEST(Sgd, QuadraticMatchesHandRecursion) {
  // L = 0.5 * a * (p - c)^2; buf = mu*buf + g + wd*p; p -= lr*buf.
  OptimizerConfig cfg;
  cfg.warmup_steps = 0;
  cfg.milestones = {};
  cfg.lr = 0.05;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  const double a = 2.0, c = 3.0;
  Tensor p = constant_param({1}, 0.5f);
  Sgd opt(cfg, {{"p", p}}, 20);
  double hp = 0.5, buf = 0.0;
  for (int t = 0; t < 20; ++t) {
    Tensor d = add_scalar(p, static_cast<float>(-c));
    scale(sum(mul(d, d)), static_cast<float>(0.5 * a)).backward();
    opt.step();
    const double g = a * (hp - c) + cfg.weight_decay * hp;
    buf = t == 0 ? g : cfg.momentum * buf + g;
    hp -= cfg.lr * buf;
    EXPECT_NEAR(p.data()[0], hp, 1e-5 * std::max(1.0, std::abs(hp))) << "step " << t;
  }
}

TEST(Sgd, ClipsGlobalNormAndDisablesAtZero) {
  OptimizerConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.warmup_steps = 0;
  cfg.milestones = {};
  cfg.lr = 1.0;
  cfg.grad_clip_norm = 10.0;
  // Gradient (12, 16) has norm 20 and is halved.
  Tensor a = constant_param({1}, 0.0f), b = constant_param({1}, 0.0f);
  Sgd opt(cfg, {{"a", a}, {"b", b}}, 4);
  add(scale(a, 12.0f), scale(b, 16.0f)).backward();
  opt.step();
  EXPECT_DOUBLE_EQ(opt.last_grad_norm(), 20.0);
  EXPECT_FLOAT_EQ(a.data()[0], -6.0f);
  EXPECT_FLOAT_EQ(b.data()[0], -8.0f);
  cfg.grad_clip_norm = 0.0;
  Tensor c = constant_param({1}, 0.0f);
  Sgd free(cfg, {{"c", c}}, 4);
  scale(c, 100.0f).backward();
  free.step();
  EXPECT_FLOAT_EQ(c.data()[0], -100.0f);
}

TEST(Sgd, LearningRateSchedule) {
  OptimizerConfig cfg;
  const std::int64_t total = 1200;
  EXPECT_NEAR(learning_rate_at(cfg, 0, total), 0.01 / 3, 1e-12);
  EXPECT_NEAR(learning_rate_at(cfg, 50, total), 0.01 * (1.0 / 3 + (2.0 / 3) * 0.5), 1e-12);
  EXPECT_NEAR(learning_rate_at(cfg, 100, total), 0.01, 1e-12);
  EXPECT_NEAR(learning_rate_at(cfg, 799, total), 0.01, 1e-12);
  EXPECT_NEAR(learning_rate_at(cfg, 800, total), 0.001, 1e-12);
  EXPECT_NEAR(learning_rate_at(cfg, 1100, total), 0.01 * 0.01, 1e-12);
  EXPECT_NEAR(learning_rate_at(cfg, 1199, total), 0.0001, 1e-12);
}

TEST(Sgd, ParametersWithoutGradientAreSkipped) {
  OptimizerConfig cfg;
  Tensor used = constant_param({2}, 1.0f), unused = constant_param({2}, 1.0f);
  Sgd opt(cfg, {{"used", used}, {"unused", unused}}, 10);
  sum(used).backward();
  opt.step();
  EXPECT_NE(used.data()[0], 1.0f);
  EXPECT_EQ(unused.data()[0], 1.0f);
  EXPECT_FALSE(used.has_grad());
}

TEST(Sgd, NonIncreasingMilestonesRejected) {
  OptimizerConfig cfg;
  cfg.milestones = {0.9, 0.5};
  EXPECT_THROW(cfg.validate(), std::invalid_argument);
}

TEST(LossReport, AuditAcceptsConsistentAndFlagsBroken) {
  LossWeights w;
  std::map<std::string, double> v{{"L_high_cls", 1.0}, {"L_high_reg", 2.0}, {"L_high_ctr", 0.5}, {"L_high", 3.5},
                                  {"L_low_cls", 1.0},  {"L_low_reg", 1.0},  {"L_low_ctr", 1.0},  {"L_low", 3.0},
                                  {"L_Align", 6.5},    {"L_T", 6.5}};
  EXPECT_TRUE(audit_report(v, w).empty());
  v["L_Align"] = 6.6;
  EXPECT_FALSE(audit_report(v, w).empty());
  std::map<std::string, double> s{{"L_low", 2.0}, {"L_KD", 1.0}, {"L_S", 0.2 * 1.0 + 0.8 * 2.0}};
  EXPECT_TRUE(audit_report(s, w).empty());
  s["L_S"] = 2.0;
  EXPECT_EQ(audit_report(s, w).size(), 1u);
}

TEST(LossReport, UnknownKeyAndNonFinite) {
  LossReport r;
  EXPECT_THROW(r.set("L_bogus", 1.0), std::invalid_argument);
  r.set("L_KD", std::nan(""));
  try {
    r.check_finite();
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.term(), "L_KD");
  }
}

TEST(KdLoss, IdenticalFeaturesGiveZero) {
  auto t = constant_pyramid({3, 4, 5}, 0.7f);
  auto s = constant_pyramid({2, 3, 4}, 0.7f, 1);
  EXPECT_EQ(kd_loss(t, s, 1, 3.0).item(), 0.0f);
}

TEST(KdLoss, ConstantOffsetFiveLevels) {
  auto t = constant_pyramid({3, 4, 5, 6, 7}, 0.25f);
  auto s = constant_pyramid({2, 3, 4, 5, 6}, 0.35f, 1);
  EXPECT_NEAR(kd_loss(t, s, 1, 3.0).item(), 1.5, 1e-5);
  // Sum reduction multiplies each level by its element count.
  double expect = 0.0;
  for (const auto& [l, x] : s.levels) expect += 0.1 * static_cast<double>(x.numel());
  EXPECT_NEAR(kd_loss(t, s, 1, 3.0, KdReduction::Sum).item(), 3.0 * expect, 1e-3 * expect);
}

TEST(KdLoss, GradientIsScaledSignAndTeacherIsConstant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> nd(0.0f, 1.0f);
  FeaturePyramid t, s;
  for (int l = 3; l <= 4; ++l) {
    std::vector<float> tv(2 * 3 * 3), sv(tv.size());
    for (std::size_t i = 0; i < tv.size(); ++i) {
      tv[i] = nd(rng);
      sv[i] = tv[i] + (i % 2 ? 0.3f : -0.2f);
    }
    t.levels[l] = Tensor({1, 2, 3, 3}, tv);
    t.levels[l].set_requires_grad(true);
    s.levels[l - 1] = Tensor({1, 2, 3, 3}, sv);
    s.levels[l - 1].set_requires_grad(true);
  }
  kd_loss(t, s, 1, 3.0).backward();
  for (const auto& [l, x] : s.levels) {
    for (std::size_t i = 0; i < x.grad().size(); ++i) {
      EXPECT_NEAR(x.grad()[i], 3.0 * (i % 2 ? 1.0 : -1.0) / 18.0, 1e-6);
    }
  }
  for (const auto& [l, x] : t.levels) EXPECT_FALSE(x.has_grad());
}

TEST(KdLoss, MisalignmentThrows) {
  auto t = constant_pyramid({3, 4, 5}, 0.0f);
  auto wrong_shift = constant_pyramid({3, 4, 5}, 0.0f);
  EXPECT_THROW(kd_loss(t, wrong_shift, 1, 1.0), AlignmentError);
  auto s = constant_pyramid({2, 3, 4}, 0.0f, 1);
  s.levels[3] = Tensor({1, 2, 3, 3}, 0.0f);
  EXPECT_THROW(kd_loss(t, s, 1, 1.0), AlignmentError);
  EXPECT_THROW(kd_loss(t, constant_pyramid({2, 3}, 0.0f, 1), 1, 1.0), AlignmentError);
}

TEST(ExperimentConfig, DefaultsAndValidation) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.loss.lambda, 1.0);
  EXPECT_EQ(cfg.loss.gamma, 0.2);
  EXPECT_EQ(cfg.loss.tau, 3.0);
  EXPECT_EQ(cfg.jitter.alpha_min, 0.8);
  EXPECT_EQ(cfg.jitter.alpha_max, 1.0);
  auto expect_message = [](ExperimentConfig c, const std::string& needle) {
    try {
      c.validate();
      ADD_FAILURE() << "expected failure mentioning " << needle;
    } catch (const std::invalid_argument& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  ExperimentConfig c = cfg;
  c.k = 3;
  expect_message(c, "k:");
  c = cfg;
  c.loss.gamma = 1.5;
  expect_message(c, "loss.gamma");
  c = cfg;
  c.head.scale_bounds = {16, 32};
  expect_message(c, "head.scale_bounds");
  c = cfg;
  c.k = 8;
  expect_message(c, "aligned levels");
  c = cfg;
  c.data.scene.image_size = 96;
  expect_message(c, "data.image_size");
}

TEST(JitterBranch, SameAlphaKeepsBranchesAligned) {
  const auto cfg = tiny_config();
  auto data = generate_dataset(cfg.data.scene, 2);
  std::vector<std::size_t> idx{0, 1};
  auto batch = make_batch(data, idx);
  const Tensor low = low_resolution(batch, 2);
  for (double a : {0.8, 0.83, 0.9, 0.97, 1.0}) {
    auto hi = jitter_branch(batch.images, batch.boxes, a, 2, 64, 1.0);
    auto lo = jitter_branch(low, batch.boxes, a, 1, 32, 1.0);
    EXPECT_EQ(hi.factor, lo.factor);
    EXPECT_EQ(hi.image.dim(2), 2 * lo.image.dim(2));
    EXPECT_EQ(hi.boxes[0][0].x0, lo.boxes[0][0].x0);
  }
  auto native = jitter_branch(low, batch.boxes, 1.0, 1, 32, 2.0);
  EXPECT_FLOAT_EQ(native.boxes[0][0].x1, batch.boxes[0][0].x1 / 2);
}

TEST(AlignedStep, IdenticalBranchesDoubleTheLoss) {
  auto cfg = tiny_config();
  HeadConfig head = cfg.head;
  head.scale_bounds = {8, 16, 32, 64};
  Detector model(cfg.backbone, head, std::nullopt, 0, TeacherMode::Aligned, 3);
  ResolutionSpec spec;
  spec.high_h = spec.high_w = spec.low_h = spec.low_w = 64;
  spec.k = 1;
  spec.m = 0;
  auto data = generate_dataset(cfg.data.scene, 4);
  std::vector<std::size_t> idx{0, 1, 2, 3};
  auto batch = make_batch(data, idx);
  auto obj = teacher_objective(model, batch, spec, 0.9, 0.9, TeacherStepOptions{});
  EXPECT_EQ(static_cast<float>(obj.report.at("L_Align")), 2.0f * static_cast<float>(obj.report.at("L_high")));
  EXPECT_EQ(obj.report.at("L_high"), obj.report.at("L_low"));
}

TEST(AlignedStep, GradientIsSumOfBranchGradients) {
  auto cfg = tiny_config();
  Detector model = Detector::from_config(cfg);
  const auto spec = cfg.resolution();
  auto data = generate_dataset(cfg.data.scene, 4);
  std::vector<std::size_t> idx{0, 1, 2, 3};
  auto batch = make_batch(data, idx);
  const auto params = model.detector_parameters();
  auto grads = [&] {
    std::vector<std::vector<float>> g;
    for (const auto& p : params) {
      g.emplace_back(p.tensor.has_grad() ? std::vector<float>(p.tensor.grad().begin(), p.tensor.grad().end())
                                         : std::vector<float>(static_cast<std::size_t>(p.tensor.numel()), 0.0f));
    }
    clear_grads(params);
    return g;
  };
  teacher_objective(model, batch, spec, 0.85, 0.95, TeacherStepOptions{}).total.backward();
  const auto joint = grads();
  TeacherStepOptions single;
  single.mode = TeacherMode::Single;
  teacher_objective(model, batch, spec, 0.85, 0.95, single).total.backward();
  const auto high = grads();
  auto low = jitter_branch(low_resolution(batch, 2), batch.boxes, 0.95, 1, 32, 1.0);
  branch_loss(model.head(), model.aligned_low_pyramid(low.image), low.boxes).total.backward();
  const auto lowg = grads();
  double worst = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i)
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      const double expect = static_cast<double>(high[i][j]) + lowg[i][j];
      worst = std::max(worst, std::abs(joint[i][j] - expect) / std::max(1.0, std::abs(expect)));
    }
  EXPECT_LT(worst, 1e-5);
}

TEST(AlignedStep, ReportSatisfiesIdentities) {
  auto cfg = tiny_config();
  Detector model = Detector::from_config(cfg);
  Sgd opt(cfg.optim, model.detector_parameters(), 4);
  auto data = generate_dataset(cfg.data.scene, 4);
  std::vector<std::size_t> idx{0, 1, 2, 3};
  auto rng = seeded_stream(1, 5);
  auto report = aligned_ms_step(model, make_batch(data, idx), cfg.resolution(), cfg.jitter, rng, opt);
  EXPECT_TRUE(report.has("L_Align"));
  EXPECT_TRUE(audit_report(report.values(), cfg.loss).empty());
  EXPECT_EQ(opt.state().step, 1);
}

TEST(TeacherTraining, TwoStepFreezesDetectorAndLogsTwoPhases) {
  auto cfg = tiny_config();
  auto data = make_training_data(cfg.data);
  Detector model = Detector::from_config(cfg);
  std::vector<std::string> phases;
  auto sink = [&](const MetricsRow& r) {
    if (phases.empty() || phases.back() != r.phase) phases.push_back(r.phase);
  };
  train_teacher_phase1(model, data.train, cfg, sink);
  const auto detector_before = snapshot(model.detector_parameters());
  const auto fusion_before = snapshot(model.fusion_parameters());
  train_fusion_phase(model, data.train, cfg, sink);
  EXPECT_EQ(snapshot(model.detector_parameters()), detector_before);
  EXPECT_NE(snapshot(model.fusion_parameters()), fusion_before);
  EXPECT_EQ(phases, (std::vector<std::string>{"align", "fusion"}));
}

TEST(TeacherTraining, ZeroLambdaKeepsFusionAtInit) {
  auto cfg = tiny_config();
  cfg.loss.lambda = 0.0;
  auto data = make_training_data(cfg.data);
  const auto init = snapshot(Detector::from_config(cfg).fusion_parameters());
  EXPECT_EQ(snapshot(train_teacher_two_step(data.train, cfg, {}).fusion_parameters()), init);
  EXPECT_EQ(snapshot(train_teacher_joint(data.train, cfg, {}).fusion_parameters()), init);
}

TEST(TeacherTraining, JointReportsAuditAndUpdatesEverything) {
  auto cfg = tiny_config();
  auto data = make_training_data(cfg.data);
  const Detector init = Detector::from_config(cfg);
  int rows = 0;
  auto sink = [&](const MetricsRow& r) {
    ++rows;
    EXPECT_EQ(r.phase, "joint");
    EXPECT_TRUE(r.report.has("L_F"));
    EXPECT_TRUE(audit_report(r.report.values(), cfg.loss).empty());
    EXPECT_NEAR(r.report.at("L_T"), r.report.at("L_Align") + r.report.at("L_F"), 1e-6 * r.report.at("L_T"));
  };
  Detector joint = train_teacher_joint(data.train, cfg, sink);
  EXPECT_EQ(rows, 4);
  const auto after = snapshot(joint.detector_parameters());
  const auto names = joint.detector_parameters();
  const auto init_detector = snapshot(init.detector_parameters());
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_NE(after[i], init_detector[i]) << names[i].name;
  EXPECT_NE(snapshot(joint.fusion_parameters()), snapshot(init.fusion_parameters()));
}

TEST(TeacherTraining, SeedDeterminesParameters) {
  auto cfg = tiny_config();
  auto data = make_training_data(cfg.data);
  std::vector<MetricsRow> a, b;
  auto ta = train_teacher(data.train, cfg, [&](const MetricsRow& r) { a.push_back(r); });
  auto tb = train_teacher(data.train, cfg, [&](const MetricsRow& r) { b.push_back(r); });
  EXPECT_TRUE(values_equal(ta.parameters(), tb.parameters()));
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].report.values(), b[i].report.values());
  cfg.seed = 2;
  EXPECT_FALSE(values_equal(ta.parameters(), train_teacher(data.train, cfg, {}).parameters()));
}

TEST(TeacherTraining, VanillaAndSingleModesRun) {
  auto cfg = tiny_config();
  cfg.data.scene.image_size = 128;
  cfg.data.scene.class_sizes = {{6, 40}, {6, 40}, {8, 40}};
  cfg.teacher.fusion = false;
  auto data = make_training_data(cfg.data);
  for (TeacherMode mode : {TeacherMode::Vanilla, TeacherMode::Single}) {
    cfg.teacher.mode = mode;
    ASSERT_NO_THROW(cfg.validate());
    std::vector<MetricsRow> rows;
    Detector t = train_teacher(data.train, cfg, [&](const MetricsRow& r) { rows.push_back(r); });
    ASSERT_FALSE(rows.empty());
    EXPECT_EQ(rows.back().report.has("L_low"), mode == TeacherMode::Vanilla);
    EXPECT_FALSE(t.has_fusion());
    auto r = evaluate_detector(t, data.val, EvalInput::Low, cfg);
    EXPECT_GE(r.ap, 0.0);
    EXPECT_THROW(evaluate_detector(t, data.val, EvalInput::Fused, cfg), std::invalid_argument);
  }
}

TEST(Student, InitCopiesTeacherAndTeacherStaysConstant) {
  auto cfg = tiny_config();
  auto data = make_training_data(cfg.data);
  Detector teacher = train_teacher(data.train, cfg, {});
  const auto teacher_before = snapshot(teacher.parameters());
  Detector init = init_student(teacher, cfg);
  EXPECT_TRUE(values_equal(init.detector_parameters(), teacher.detector_parameters()));
  EXPECT_NE(init.detector_parameters()[0].tensor.identity(), teacher.detector_parameters()[0].tensor.identity());
  EXPECT_FALSE(init.has_fusion());
  int rows = 0;
  Detector student = train_student(teacher, data.train, cfg, [&](const MetricsRow& r) {
    ++rows;
    EXPECT_TRUE(r.report.has("L_KD"));
    EXPECT_TRUE(audit_report(r.report.values(), cfg.loss).empty());
  });
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(snapshot(teacher.parameters()), teacher_before);
  EXPECT_FALSE(values_equal(student.detector_parameters(), teacher.detector_parameters()));
}

TEST(Student, GammaEndpoints) {
  auto cfg = tiny_config();
  auto data = generate_dataset(cfg.data.scene, 4);
  std::vector<std::size_t> idx{0, 1, 2, 3};
  auto batch = make_batch(data, idx);
  Detector teacher = Detector::from_config(cfg);
  Detector student = init_student(teacher, cfg);
  LossWeights w;
  w.gamma = 0.0;
  auto o0 = student_objective(student, teacher, batch, cfg.resolution(), w);
  EXPECT_FALSE(o0.report.has("L_KD"));
  EXPECT_EQ(o0.report.at("L_S"), o0.report.at("L_low"));
  w.gamma = 1.0;
  auto o1 = student_objective(student, teacher, batch, cfg.resolution(), w);
  EXPECT_EQ(o1.report.at("L_S"), o1.report.at("L_KD"));
  // Right after initialisation the student's shifted pyramid differs from the
  // fused teacher pyramid, so the matching term is positive.
  EXPECT_GT(o1.report.at("L_KD"), 0.0);
}

TEST(Student, NoKdEqualsGammaZero) {
  auto cfg = tiny_config();
  auto data = make_training_data(cfg.data);
  Detector teacher = train_teacher(data.train, cfg, {});
  auto a = cfg, b = cfg;
  a.student.kd = false;
  b.loss.gamma = 0.0;
  std::vector<MetricsRow> ra, rb;
  Detector sa = train_student(teacher, data.train, a, [&](const MetricsRow& r) { ra.push_back(r); });
  Detector sb = train_student(teacher, data.train, b, [&](const MetricsRow& r) { rb.push_back(r); });
  EXPECT_TRUE(values_equal(sa.parameters(), sb.parameters()));
  ASSERT_EQ(ra.size(), rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i) EXPECT_EQ(ra[i].report.values(), rb[i].report.values());
}

TEST(Evaluation, RepeatableAndDistinctInputs) {
  auto cfg = tiny_config();
  auto data = make_training_data(cfg.data);
  Detector teacher = train_teacher(data.train, cfg, {});
  const auto spec = cfg.resolution();
  auto h1 = predict(teacher, data.val, EvalInput::High, spec);
  auto h2 = predict(teacher, data.val, EvalInput::High, spec);
  ASSERT_EQ(h1.size(), data.val.size());
  for (std::size_t i = 0; i < h1.size(); ++i) {
    ASSERT_EQ(h1[i].size(), h2[i].size());
    for (std::size_t j = 0; j < h1[i].size(); ++j) EXPECT_EQ(h1[i][j].score, h2[i][j].score);
  }
  EXPECT_NO_THROW(predict(teacher, data.val, EvalInput::Fused, spec));
  for (const auto& img : predict(teacher, data.val, EvalInput::Low, spec))
    for (const Box& b : img) {
      EXPECT_GE(b.x0, 0.0f);
      EXPECT_LE(b.x1, 64.0f);
    }
}

TEST(Evaluation, InputParsing) {
  EXPECT_EQ(parse_eval_input("H"), EvalInput::High);
  EXPECT_EQ(parse_eval_input("l"), EvalInput::Low);
  EXPECT_EQ(parse_eval_input("fused"), EvalInput::Fused);
  EXPECT_THROW(parse_eval_input("x"), std::invalid_argument);
}

TEST(GradcheckSuite, AllCasesPass) {
  const auto report = run_gradcheck(gradcheck_suite(), kGradcheckSeeds, kGradcheckTolerance);
  for (const auto& o : report.outcomes) {
    EXPECT_TRUE(o.passed) << o.name << " max rel err " << o.max_relative_error;
    EXPECT_EQ(o.seeds, kGradcheckSeeds);
  }
  EXPECT_GE(report.outcomes.size(), 30u);
}

TEST(GradcheckSuite, BrokenConvolutionIsNamed) {
  const auto report = run_gradcheck({broken_conv_case()}, 3, kGradcheckTolerance);
  ASSERT_FALSE(report.all_passed());
  EXPECT_EQ(report.failures(), std::vector<std::string>{"conv2d"});
  EXPECT_GT(report.outcomes[0].max_relative_error, kGradcheckTolerance);
}
