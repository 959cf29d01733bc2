// Acceptance suite: prints one PASS/FAIL line per criterion on stdout and
// per-run details on stderr. Exit status is nonzero if any criterion fails.
//
//   acceptance [--criteria 1,2,...] [--work-dir DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "lrd/cli/commands.hpp"
#include "lrd/tensor/ops.hpp"
#include "lrd/train/gradcheck_suite.hpp"
#include "oracles.hpp"

using namespace lrd;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------- tolerances

constexpr double kGradTolerance = 1e-3;
constexpr int kGradSeeds = 10;
constexpr double kGradBudgetSeconds = 120.0;
constexpr int kAlignmentSizes = 20;
constexpr double kGateSumTolerance = 1e-6;
constexpr int kFusionSeeds = 100;
constexpr double kConvTolerance = 1e-5;
constexpr int kConvCases = 100;
constexpr int kNmsCases = 50;
constexpr int kApScenes = 50;
constexpr int kApMaxBoxes = 5;
constexpr double kFusedSlackAp = 0.3;
constexpr double kKdTargetAp = 0.5;
constexpr double kAuditTolerance = 1e-6;
constexpr double kBenchmarkBudgetSeconds = 30 * 60.0;

const std::vector<std::uint64_t> kSeeds{1, 2, 3};

// Benchmark profile: 2000/200 split, default teacher schedule, lighter head
// tower and a short student fine-tune so three seeds fit on one core.
ExperimentConfig benchmark_config(std::uint64_t seed, const fs::path& out) {
  ExperimentConfig c;
  c.seed = seed;
  c.head.tower_depth = 2;
  c.epochs = 12;
  c.teacher.fusion_epochs = 4;
  c.student.epochs = 4;
  c.data.train_images = 2000;
  c.data.val_images = 200;
  c.out_dir = out.string();
  c.validate();
  return c;
}

// ---------------------------------------------------------------- reporting

// Details go to stderr and into the report file written at the end.
struct DetailLog {
  std::ostringstream buf;
  template <typename T>
  DetailLog& operator<<(const T& v) {
    std::cerr << v;
    buf << v;
    return *this;
  }
} details;

struct Outcome {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.2f", v[i]);
  return s + "]";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Tensor random_map(const Shape& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-2.0f, 2.0f);
  std::vector<float> v(static_cast<std::size_t>(numel_of(s)));
  for (auto& e : v) e = d(rng);
  return Tensor(s, std::move(v));
}

void randomize(Tensor& t, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(-1.0f, 1.0f);
  for (auto& e : t.data_mut()) e = d(rng);
}

// ---------------------------------------------------------------- 1

Outcome gradient_suite() {
  const auto report = run_gradcheck(gradcheck_suite(), kGradSeeds, kGradTolerance);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& o : report.outcomes) {
    if (o.max_relative_error > worst) {
      worst = o.max_relative_error;
      worst_name = o.name;
    }
  }
  const auto has = [&](const std::string& n) {
    return std::any_of(report.outcomes.begin(), report.outcomes.end(), [&](const auto& o) { return o.name == n; });
  };
  const bool losses = has("detection_loss") && has("feature_matching_loss");
  const bool seeds = std::all_of(report.outcomes.begin(), report.outcomes.end(),
                                 [](const auto& o) { return o.seeds >= kGradSeeds; });
  const bool pass = report.all_passed() && losses && seeds && report.seconds < kGradBudgetSeconds;
  std::string detail = std::to_string(report.outcomes.size()) + " cases x " + std::to_string(kGradSeeds) +
                       " seeds at 64-bit, max rel err " + fmt("%.2e", worst) + " (" + worst_name + ") < " +
                       fmt("%.0e", kGradTolerance) + ", " + fmt("%.1f", report.seconds) + " s";
  if (!report.failures().empty()) detail += ", failed: " + report.failures().front();
  if (!losses) detail += ", a loss function is missing from the suite";
  return {1, "gradient suite", pass, detail};
}

// ---------------------------------------------------------------- 2

Outcome alignment_suite() {
  std::mt19937_64 rng(2);
  int checked = 0, mismatched = 0;
  for (int k : {2, 4, 8}) {
    const int m = shift_offset(k);
    BackboneConfig bc;
    bc.stem_width = 4;
    bc.stage_widths = {4, 4};
    bc.pyramid_channels = 4;
    bc.max_level = m + 4;
    Backbone net(bc, rng);
    const std::int64_t unit = std::int64_t{1} << bc.max_level;
    std::uniform_int_distribution<int> mult(1, 4);
    for (int trial = 0; trial < kAlignmentSizes; ++trial) {
      const std::int64_t h = unit * mult(rng), w = unit * mult(rng);
      const auto spec = ResolutionSpec::make(static_cast<int>(h), static_cast<int>(w), k);
      const auto high = net.forward_pyramid(random_map({1, 3, h, w}, rng));
      const auto low = net.aligned_pyramid(random_map({1, 3, h / k, w / k}, rng), spec);
      for (const auto& [s, t] : low.levels) {
        ++checked;
        if (!high.levels.count(s + m) || t.shape() != high.at(s + m).shape() ||
            low.strides.at(s) != high.strides.at(s + m)) {
          ++mismatched;
        }
      }
    }
  }
  return {2, "alignment suite", mismatched == 0,
          std::to_string(checked) + " level pairs over k in {2,4,8} x " + std::to_string(kAlignmentSizes) +
              " sizes, " + std::to_string(mismatched) + " shape mismatches (zero tolerance)"};
}

// ---------------------------------------------------------------- 3

Outcome fusion_invariants() {
  double worst_sum = 0.0;
  int identity_failures = 0, envelope_failures = 0;
  for (FusionVariant variant : {FusionVariant::CFF, FusionVariant::CHANNELWISE}) {
    for (int seed = 1; seed <= kFusionSeeds; ++seed) {
      std::mt19937_64 rng(static_cast<std::uint64_t>(seed));
      auto p = make_fusion_params(variant, 8, 4, rng);
      randomize(p.fc1_w, rng);
      randomize(p.fc2_w, rng);
      randomize(p.fc2_b, rng);
      const Tensor hi = random_map({2, 8, 5, 4}, rng), lo = random_map({2, 8, 5, 4}, rng);
      const auto out = fusion_variant_forward(variant, hi, lo, p);
      const auto w = out.weights.data();
      const std::size_t per = variant == FusionVariant::CFF ? 1 : 8;
      for (std::size_t n = 0; n < 2; ++n)
        for (std::size_t c = 0; c < per; ++c) {
          const double s = static_cast<double>(w[n * 2 * per + c]) + w[n * 2 * per + per + c];
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
      for (std::size_t i = 0; i < hi.data().size(); ++i) {
        const float a = hi.data()[i], b = lo.data()[i], f = out.fused.data()[i];
        if (f < std::min(a, b) || f > std::max(a, b)) ++envelope_failures;
      }
      const auto same = fusion_variant_forward(variant, hi, hi.detach(), p);
      if (!std::equal(same.fused.data().begin(), same.fused.data().end(), hi.data().begin())) ++identity_failures;
    }
  }
  const bool pass = worst_sum <= kGateSumTolerance && identity_failures == 0 && envelope_failures == 0;
  return {3, "fusion invariants", pass,
          "softmax-gated variants over " + std::to_string(kFusionSeeds) + " seeds: max |gate sum - 1| " +
              fmt("%.1e", worst_sum) + " <= " + fmt("%.0e", kGateSumTolerance) + ", identity failures " +
              std::to_string(identity_failures) + ", envelope violations " + std::to_string(envelope_failures)};
}

// ---------------------------------------------------------------- 4

Outcome oracle_equivalences() {
  std::mt19937_64 rng(4);
  double conv_err = 0.0;
  std::uniform_int_distribution<int> small(1, 4), kern(1, 3), strd(1, 3), pd(0, 2), sp(3, 9);
  for (int trial = 0; trial < kConvCases; ++trial) {
    const int k = kern(rng), s = strd(rng), p = pd(rng);
    const std::int64_t h = std::max(sp(rng), k), w = std::max(sp(rng), k);
    const Tensor x = random_tensor64({small(rng), small(rng), h, w}, rng).cast<float>();
    const Tensor wt = random_tensor64({small(rng), x.dim(1), k, k}, rng).cast<float>();
    const Tensor b = random_tensor64({wt.dim(0)}, rng).cast<float>();
    const Tensor y = conv2d(x, wt, b, s, p);
    const auto ref = oracle::naive_conv(x.cast<double>(), wt.cast<double>(), b.cast<double>(), s, p);
    if (static_cast<std::size_t>(y.numel()) != ref.size()) conv_err = INFINITY;
    for (std::size_t i = 0; i < ref.size() && i < y.data().size(); ++i)
      conv_err = std::max(conv_err, std::abs(y.data()[i] - ref[i]));
  }

  int nms_mismatch = 0;
  std::uniform_real_distribution<float> score(0.0f, 1.0f);
  for (int trial = 0; trial < kNmsCases; ++trial) {
    auto boxes = oracle::random_boxes(rng, 50, 64, 2, false);
    for (auto& b : boxes) b.score = score(rng);
    const auto got = nms(boxes, 0.6, 1000);
    const auto expect = oracle::nms_oracle(boxes, 0.6);
    bool same = got.size() == expect.size();
    for (std::size_t i = 0; same && i < got.size(); ++i) {
      same = got[i].x0 == expect[i].x0 && got[i].y0 == expect[i].y0 && got[i].x1 == expect[i].x1 &&
             got[i].y1 == expect[i].y1 && got[i].class_id == expect[i].class_id && got[i].score == expect[i].score;
    }
    nms_mismatch += !same;
  }

  int ap_mismatch = 0;
  EvalOptions opt;
  for (int scene = 0; scene < kApScenes; ++scene) {
    const auto s = oracle::random_scene(rng, 3, kApMaxBoxes, 3);
    const EvalResult a = evaluate_ap(s.preds, s.gts, opt), b = oracle::oracle_eval(s.preds, s.gts, opt);
    ap_mismatch += !(a.ap == b.ap && a.ap50 == b.ap50 && a.ap75 == b.ap75 && a.ap_s == b.ap_s &&
                     a.ap_m == b.ap_m && a.ap_l == b.ap_l);
  }
  const bool pass = conv_err < kConvTolerance && nms_mismatch == 0 && ap_mismatch == 0;
  return {4, "oracle equivalences", pass,
          "conv2d max abs err " + fmt("%.1e", conv_err) + " < " + fmt("%.0e", kConvTolerance) + " over " +
              std::to_string(kConvCases) + " cases; NMS " + std::to_string(nms_mismatch) + "/" +
              std::to_string(kNmsCases) + " mismatches; AP " + std::to_string(ap_mismatch) + "/" +
              std::to_string(kApScenes) + " mismatches on <=" + std::to_string(kApMaxBoxes) + "-box scenes"};
}

// ---------------------------------------------------------------- 5-8

struct SeedResults {
  double aligned_h = 0, aligned_l = 0, vanilla_h = 0, vanilla_l = 0;
  double fused_cff = 0, fused_sc_sum = 0;
  double student_kd = 0, student_nokd = 0, student_single = 0;
};

struct AuditedFile {
  fs::path path;
  LossWeights weights;
  std::size_t expected_rows;
};

struct Benchmark {
  std::vector<SeedResults> seeds;
  std::vector<AuditedFile> files;
  double seconds_teachers = 0.0;
  double seconds_total = 0.0;
};

std::size_t steps_per_epoch(const ExperimentConfig& c) {
  return static_cast<std::size_t>(c.data.train_images / c.batch_size);
}

Benchmark run_benchmark(const fs::path& root) {
  Benchmark bench;
  const auto t_all = std::chrono::steady_clock::now();
  std::ostringstream quiet;
  for (std::uint64_t seed : kSeeds) {
    SeedResults r;
    const fs::path dir = root / ("seed" + std::to_string(seed));
    const ExperimentConfig base = benchmark_config(seed, dir / "aligned");
    const TrainingData data = make_training_data(base.data);
    const std::size_t per_epoch = steps_per_epoch(base);

    auto t0 = std::chrono::steady_clock::now();
    const TeacherRun aligned = cmd_train_teacher(base, data, quiet);
    r.aligned_h = evaluate_detector(aligned.model, data.val, EvalInput::High, base).ap;
    r.aligned_l = evaluate_detector(aligned.model, data.val, EvalInput::Low, base).ap;
    r.fused_cff = evaluate_detector(aligned.model, data.val, EvalInput::Fused, base).ap;
    const double t_aligned = seconds_since(t0);
    bench.files.push_back({aligned.metrics, base.loss, per_epoch * (base.epochs + base.teacher.fusion_epochs)});
    details << "  seed " << seed << " aligned teacher: H " << fmt("%.2f", r.aligned_h) << " L "
              << fmt("%.2f", r.aligned_l) << " fused(C-FF) " << fmt("%.2f", r.fused_cff) << "  ("
              << fmt("%.0f", t_aligned) << " s)\n";

    // The same first phase with an SC-SUM fusion module trained on top.
    t0 = std::chrono::steady_clock::now();
    ExperimentConfig sc = base;
    sc.fusion.variant = FusionVariant::SC_SUM;
    sc.out_dir = (dir / "sc_sum").string();
    fs::create_directories(sc.out_dir);
    Detector sc_model = Detector::from_config(sc);
    copy_values(aligned.model.detector_parameters(), sc_model.detector_parameters());
    {
      std::vector<int> gates;
      MetricsWriter writer(fs::path(sc.out_dir) / "fusion_metrics.csv", gates);
      train_fusion_phase(sc_model, data.train, sc, [&](const MetricsRow& row) { writer.write(row); });
    }
    r.fused_sc_sum = evaluate_detector(sc_model, data.val, EvalInput::Fused, sc).ap;
    bench.files.push_back({fs::path(sc.out_dir) / "fusion_metrics.csv", sc.loss, per_epoch * sc.teacher.fusion_epochs});
    details << "  seed " << seed << " SC-SUM fusion on the same teacher: fused " << fmt("%.2f", r.fused_sc_sum)
              << "  (" << fmt("%.0f", seconds_since(t0)) << " s)\n";

    t0 = std::chrono::steady_clock::now();
    ExperimentConfig vanilla = base;
    vanilla.teacher.mode = TeacherMode::Vanilla;
    vanilla.teacher.fusion = false;
    vanilla.out_dir = (dir / "vanilla").string();
    const TeacherRun van = cmd_train_teacher(vanilla, data, quiet);
    r.vanilla_h = evaluate_detector(van.model, data.val, EvalInput::High, vanilla).ap;
    r.vanilla_l = evaluate_detector(van.model, data.val, EvalInput::Low, vanilla).ap;
    const double t_vanilla = seconds_since(t0);
    bench.seconds_teachers += t_aligned + t_vanilla;
    bench.files.push_back({van.metrics, vanilla.loss, per_epoch * vanilla.epochs});
    details << "  seed " << seed << " vanilla teacher: H " << fmt("%.2f", r.vanilla_h) << " L "
              << fmt("%.2f", r.vanilla_l) << "  (" << fmt("%.0f", t_vanilla) << " s)\n";

    t0 = std::chrono::steady_clock::now();
    ExperimentConfig single = base;
    single.teacher.mode = TeacherMode::Single;
    single.teacher.fusion = false;
    single.out_dir = (dir / "single").string();
    const TeacherRun sgl = cmd_train_teacher(single, data, quiet);
    bench.files.push_back({sgl.metrics, single.loss, per_epoch * single.epochs});
    details << "  seed " << seed << " single-H teacher: H "
              << fmt("%.2f", evaluate_detector(sgl.model, data.val, EvalInput::High, single).ap) << "  ("
              << fmt("%.0f", seconds_since(t0)) << " s)\n";

    auto distill = [&](const TeacherRun& teacher, const ExperimentConfig& tc, bool kd, const std::string& name) {
      const auto ts = std::chrono::steady_clock::now();
      ExperimentConfig c = tc;
      c.student.kd = kd;
      c.out_dir = (dir / name).string();
      const StudentRun s = cmd_distill(c, data, load_checkpoint(teacher.checkpoint), quiet);
      LossWeights w = c.loss;
      if (!kd) w.gamma = 0.0;
      bench.files.push_back({s.metrics, w, per_epoch * c.student.epochs});
      const double ap = evaluate_detector(s.model, data.val, EvalInput::Low, c).ap;
      details << "  seed " << seed << " student " << name << ": L " << fmt("%.2f", ap) << "  ("
                << fmt("%.0f", seconds_since(ts)) << " s)\n";
      return ap;
    };
    r.student_kd = distill(aligned, base, true, "student_fused_teacher");
    r.student_nokd = distill(aligned, base, false, "student_nokd");
    r.student_single = distill(sgl, single, true, "student_single_teacher");
    bench.seeds.push_back(r);
  }
  bench.seconds_total = seconds_since(t_all);
  return bench;
}

std::vector<double> column(const Benchmark& b, double SeedResults::*field) {
  std::vector<double> v;
  for (const auto& s : b.seeds) v.push_back(s.*field);
  return v;
}

Outcome aligned_vs_vanilla(const Benchmark& b) {
  std::vector<double> gap_aligned, gap_vanilla;
  for (const auto& s : b.seeds) {
    gap_aligned.push_back(s.aligned_h - s.aligned_l);
    gap_vanilla.push_back(s.vanilla_h - s.vanilla_l);
  }
  const double ga = median(gap_aligned), gv = median(gap_vanilla);
  const double la = median(column(b, &SeedResults::aligned_l)), lv = median(column(b, &SeedResults::vanilla_l));
  const bool pass = ga < gv && la > lv;
  return {5, "aligned vs vanilla multi-scale training", pass,
          "median H-L gap aligned " + fmt("%.2f", ga) + " " + list(gap_aligned) + " vs vanilla " + fmt("%.2f", gv) +
              " " + list(gap_vanilla) + "; median L-AP aligned " + fmt("%.2f", la) + " vs vanilla " +
              fmt("%.2f", lv) + "; runtime " + fmt("%.1f", b.seconds_teachers / 60) + " min (expected < " +
              fmt("%.0f", kBenchmarkBudgetSeconds / 60) + ")"};
}

Outcome fusion_comparison(const Benchmark& b) {
  const double h = median(column(b, &SeedResults::aligned_h)), l = median(column(b, &SeedResults::aligned_l));
  const double cff = median(column(b, &SeedResults::fused_cff));
  const double sc = median(column(b, &SeedResults::fused_sc_sum));
  const bool pass = cff >= std::max(h, l) - kFusedSlackAp && cff >= sc;
  return {6, "fused teacher and C-FF vs SC-SUM", pass,
          "median fused(C-FF) " + fmt("%.2f", cff) + " " + list(column(b, &SeedResults::fused_cff)) +
              " vs max(H " + fmt("%.2f", h) + ", L " + fmt("%.2f", l) + ") - " + fmt("%.1f", kFusedSlackAp) +
              "; SC-SUM fused " + fmt("%.2f", sc) + " " + list(column(b, &SeedResults::fused_sc_sum))};
}

Outcome distillation_gain(const Benchmark& b) {
  std::vector<double> gain;
  for (const auto& s : b.seeds) gain.push_back(s.student_kd - s.student_nokd);
  const double g = median(gain);
  const double kd = median(column(b, &SeedResults::student_kd));
  const double single = median(column(b, &SeedResults::student_single));
  const bool pass = g > 0.0 && kd >= single;
  return {7, "distilled student gains", pass,
          "median gain over --no-kd " + fmt("%+.2f", g) + " AP " + list(gain) + " (> 0 required; +" +
              fmt("%.1f", kKdTargetAp) + " target " + (g >= kKdTargetAp ? "met" : "not met") +
              "); student of fused teacher " + fmt("%.2f", kd) + " vs of single-H teacher " + fmt("%.2f", single) +
              " " + list(column(b, &SeedResults::student_single))};
}

Outcome audit_runs(const std::vector<AuditedFile>& files) {
  std::size_t rows = 0, violations = 0, short_files = 0;
  std::string first;
  for (const auto& f : files) {
    const MetricsTable t = read_metrics(f.path);
    if (t.rows.size() != f.expected_rows) ++short_files;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      std::map<std::string, double> values;
      for (const auto& key : report_keys()) {
        if (const auto v = t.value(r, key)) values[key] = *v;
      }
      ++rows;
      const auto problems = audit_report(values, f.weights);
      if (!problems.empty()) {
        ++violations;
        if (first.empty()) first = f.path.filename().string() + " row " + std::to_string(r + 1) + ": " + problems[0];
      }
    }
  }
  const bool pass = violations == 0 && short_files == 0 && rows > 0;
  std::string detail = std::to_string(rows) + " logged reports in " + std::to_string(files.size()) +
                       " metrics files re-audited at " + fmt("%.0e", kAuditTolerance) + ", " +
                       std::to_string(violations) + " violations, " + std::to_string(short_files) +
                       " files missing steps";
  if (!first.empty()) detail += "; first: " + first;
  return {8, "loss-identity audit", pass, detail};
}

// ---------------------------------------------------------------- 9

Outcome determinism(const fs::path& root, std::vector<AuditedFile>& files) {
  ExperimentConfig c = benchmark_config(7, root / "a");
  c.data.train_images = 96;
  c.data.val_images = 16;
  c.epochs = 1;
  c.teacher.fusion_epochs = 1;
  c.student.epochs = 1;
  const TrainingData data = make_training_data(c.data);
  std::ostringstream quiet;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  std::vector<std::string> teacher_csv, student_csv;
  std::vector<std::string> digests;
  for (const char* run : {"a", "b"}) {
    c.out_dir = (root / run).string();
    const TeacherRun t = cmd_train_teacher(c, data, quiet);
    const StudentRun s = cmd_distill(c, data, load_checkpoint(t.checkpoint), quiet);
    teacher_csv.push_back(slurp(t.metrics));
    student_csv.push_back(slurp(s.metrics));
    Checkpoint ck = load_checkpoint(s.checkpoint);
    ck.config.out_dir.clear();
    digests.push_back(checkpoint_digest(ck));
    files.push_back({t.metrics, c.loss, 12 * 2});
    files.push_back({s.metrics, c.loss, 12});
  }
  const bool pass = !teacher_csv[0].empty() && teacher_csv[0] == teacher_csv[1] && student_csv[0] == student_csv[1] &&
                    digests[0] == digests[1];
  return {9, "determinism", pass,
          std::string("train-teacher metrics ") + (teacher_csv[0] == teacher_csv[1] ? "identical" : "DIFFER") + " (" +
              std::to_string(teacher_csv[0].size()) + " bytes), distill metrics " +
              (student_csv[0] == student_csv[1] ? "identical" : "DIFFER") + " (" +
              std::to_string(student_csv[0].size()) + " bytes), student weights " +
              (digests[0] == digests[1] ? "identical" : "DIFFER")};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  fs::path work = "acceptance_runs";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criteria" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--criteria 1,2,...] [--work-dir DIR]\n";
      return 2;
    }
  }
  auto wanted = [&](int id) { return only.empty() || only.count(id) > 0; };
  fs::remove_all(work);
  fs::create_directories(work);

  std::vector<Outcome> outcomes;
  auto report = [&](const Outcome& o) {
    outcomes.push_back(o);
    std::ostringstream line;
    line << (o.pass ? "PASS" : "FAIL") << " [" << o.id << "] " << o.name << ": " << o.detail;
    std::cout << line.str() << std::endl;
    details.buf << line.str() << "\n";
  };
  try {
    if (wanted(1)) report(gradient_suite());
    if (wanted(2)) report(alignment_suite());
    if (wanted(3)) report(fusion_invariants());
    if (wanted(4)) report(oracle_equivalences());
    std::vector<AuditedFile> audited;
    if (wanted(5) || wanted(6) || wanted(7) || wanted(8)) {
      details << "benchmark runs (" << kSeeds.size() << " seeds)\n";
      Benchmark b = run_benchmark(work / "benchmark");
      details << "  benchmark total " << fmt("%.1f", b.seconds_total / 60) << " min\n";
      if (wanted(5)) report(aligned_vs_vanilla(b));
      if (wanted(6)) report(fusion_comparison(b));
      if (wanted(7)) report(distillation_gain(b));
      audited = b.files;
    }
    Outcome det{9, "determinism", false, ""};
    if (wanted(9)) det = determinism(work / "determinism", audited);
    if (wanted(8)) report(audit_runs(audited));
    if (wanted(9)) report(det);
  } catch (const std::exception& e) {
    std::cout << "FAIL [-] harness error: " << e.what() << std::endl;
    return 1;
  }
  std::ofstream(work / "report.txt") << details.buf.str();
  const auto failed = std::count_if(outcomes.begin(), outcomes.end(), [](const Outcome& o) { return !o.pass; });
  std::cout << outcomes.size() - static_cast<std::size_t>(failed) << "/" << outcomes.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
