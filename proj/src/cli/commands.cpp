#include "lrd/cli/commands.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "lrd/train/gradcheck_suite.hpp"

namespace lrd {

namespace fs = std::filesystem;

namespace {

std::vector<int> gate_levels(const Detector& model) {
  std::vector<int> levels;
  if (!model.has_fusion()) return levels;
  for (int s = model.head_min_level(); s <= model.head_max_level(); ++s) levels.push_back(s);
  return levels;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("write failed for " + path.string());
}

fs::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
  return fs::path(dir);
}

// Keeps the last row of each phase for the summary.
struct LastRows {
  std::vector<MetricsRow> rows;
  void add(const MetricsRow& r) {
    if (!rows.empty() && rows.back().phase == r.phase) {
      rows.back() = r;
    } else {
      rows.push_back(r);
    }
  }
  std::string text() const {
    std::string out;
    for (const auto& r : rows) {
      out += "final " + r.phase + " step " + std::to_string(r.step) + ":";
      for (const auto& [k, v] : r.report.values()) out += " " + k + "=" + format_number(v);
      out += "\n";
    }
    return out;
  }
};

}  // namespace

ExperimentConfig resolve_config(const CommonOptions& opt) {
  ExperimentConfig cfg;
  if (opt.config) {
    std::ifstream in(*opt.config);
    if (!in) throw IoError("cannot open config " + opt.config->string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    cfg = config_from_text(text);
  }
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.out_dir) cfg.out_dir = *opt.out_dir;
  cfg.validate();
  return cfg;
}

TeacherRun cmd_train_teacher(const ExperimentConfig& cfg, const TrainingData& data, std::ostream& log) {
  const fs::path dir = prepare_out_dir(cfg.out_dir);
  save_config(cfg, dir / "config.json");
  TeacherRun run{dir / "teacher.ckpt", dir / "teacher_metrics.csv", Detector::from_config(cfg)};
  MetricsWriter writer(run.metrics, gate_levels(run.model));
  LastRows last;
  std::int64_t steps = 0;
  auto sink = [&](const MetricsRow& r) {
    writer.write(r);
    last.add(r);
    steps = r.step;
  };
  log << "training " << to_string(cfg.teacher.mode) << " teacher (" << to_string(cfg.teacher.strategy) << ", "
      << (cfg.teacher.fusion ? to_string(cfg.fusion.variant) : std::string("no fusion")) << ") on "
      << data.train.size() << " images\n";
  run.model = train_teacher(data.train, cfg, sink);
  const Checkpoint ckpt = make_checkpoint(run.model, cfg, "teacher", steps);
  save_checkpoint(ckpt, run.checkpoint);

  std::vector<EvalRow> rows;
  for (EvalInput in : {EvalInput::High, EvalInput::Low, EvalInput::Fused}) {
    if (in == EvalInput::Fused && !run.model.has_fusion()) continue;
    rows.push_back({to_string(in), evaluate_detector(run.model, data.val, in, cfg)});
  }
  const std::string summary = last.text() + format_eval_table(rows) + "checkpoint " + checkpoint_digest(ckpt) + "\n";
  write_text(dir / "teacher_summary.txt", summary);
  log << summary;
  return run;
}

StudentRun cmd_distill(const ExperimentConfig& cfg, const TrainingData& data, const Checkpoint& teacher,
                       std::ostream& log) {
  if (teacher.role != "teacher") throw IncompatibleCheckpointError("expected a teacher checkpoint, got " + teacher.role);
  check_compatible(teacher.config, cfg);
  const Detector t = restore_detector(teacher);
  const fs::path dir = prepare_out_dir(cfg.out_dir);
  const std::string prefix = cfg.student.kd ? "student" : "student_nokd";
  StudentRun run{dir / (prefix + ".ckpt"), dir / (prefix + "_metrics.csv"), init_student(t, cfg)};
  MetricsWriter writer(run.metrics, {});
  LastRows last;
  std::int64_t steps = 0;
  auto sink = [&](const MetricsRow& r) {
    writer.write(r);
    last.add(r);
    steps = r.step;
  };
  log << "distilling student" << (cfg.student.kd ? "" : " without feature matching") << " from "
      << (t.has_fusion() ? "fused" : "high-resolution") << " teacher\n";
  run.model = train_student(t, data.train, cfg, sink);
  const Checkpoint ckpt = make_checkpoint(run.model, cfg, "student", steps);
  save_checkpoint(ckpt, run.checkpoint);
  const std::string summary = last.text() +
                              format_eval_table({{"L", evaluate_detector(run.model, data.val, EvalInput::Low, cfg)}}) +
                              "checkpoint " + checkpoint_digest(ckpt) + "\n";
  write_text(dir / (prefix + "_summary.txt"), summary);
  log << summary;
  return run;
}

std::string format_eval_table(const std::vector<EvalRow>& rows) {
  std::string out = "input      AP   AP50   AP75    APs    APm    APl\n";
  char buf[128];
  for (const auto& r : rows) {
    const auto& e = r.result;
    std::snprintf(buf, sizeof buf, "%-6s %6.2f %6.2f %6.2f %6.2f %6.2f %6.2f\n", r.label.c_str(), e.ap, e.ap50,
                  e.ap75, e.ap_s, e.ap_m, e.ap_l);
    out += buf;
  }
  return out;
}

EvalRow cmd_eval(const Checkpoint& ckpt, EvalInput input, const fs::path& out_dir, std::ostream& out) {
  const Detector model = restore_detector(ckpt);
  const Dataset val = generate_dataset(ckpt.config.data.scene, ckpt.config.data.val_images,
                                       static_cast<std::uint64_t>(ckpt.config.data.train_images));
  EvalRow row{to_string(input), evaluate_detector(model, val, input, ckpt.config)};
  const std::string table = format_eval_table({row});
  prepare_out_dir(out_dir.string());
  write_text(out_dir / ("eval_" + ckpt.role + "_" + to_string(input) + ".txt"), table);
  out << table;
  return row;
}

bool cmd_gradcheck(std::ostream& out) {
  const auto report = run_gradcheck(gradcheck_suite(), kGradcheckSeeds, kGradcheckTolerance);
  char buf[160];
  for (const auto& o : report.outcomes) {
    std::snprintf(buf, sizeof buf, "%-28s %s  max rel err %.3e  seeds %d\n", o.name.c_str(),
                  o.passed ? "pass" : "FAIL", o.max_relative_error, o.seeds);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%zu cases, %zu failed, %.1f s\n", report.outcomes.size(),
                report.failures().size(), report.seconds);
  out << buf;
  return report.all_passed();
}

void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out) {
  const fs::path dir = prepare_out_dir(cfg.out_dir) / "data";
  const TrainingData data = make_training_data(cfg.data);
  try {
    export_dataset(data.train, cfg.data.scene, dir / "train");
    export_dataset(data.val, cfg.data.scene, dir / "val");
  } catch (const fs::filesystem_error& e) {
    throw IoError(e.what());
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  out << "wrote " << data.train.size() << " train and " << data.val.size() << " val images to " << dir.string()
      << "\n";
}

SweepResult cmd_sweep(const ExperimentConfig& cfg, const TrainingData& data, const std::vector<double>& lambdas,
                      double expected_best, std::ostream& out) {
  if (lambdas.empty()) throw std::invalid_argument("sweep: no lambda values");
  if (!cfg.teacher.fusion) throw std::invalid_argument("sweep: teacher.fusion must be true");
  const fs::path dir = prepare_out_dir(cfg.out_dir);
  SweepResult result;
  std::optional<Detector> base;
  if (cfg.teacher.strategy == FusionStrategy::TwoStep) {
    base.emplace(Detector::from_config(cfg));
    train_teacher_phase1(*base, data.train, cfg, {});
  }
  for (double lambda : lambdas) {
    ExperimentConfig c = cfg;
    c.loss.lambda = lambda;
    c.validate();
    Detector model = Detector::from_config(c);
    if (base) {
      copy_values(base->parameters(), model.parameters());
      train_fusion_phase(model, data.train, c, {});
    } else {
      model = train_teacher_joint(data.train, c, {});
    }
    result.points.push_back({lambda, evaluate_detector(model, data.val, EvalInput::Fused, c)});
    out << "lambda " << format_number(lambda) << " fused AP " << format_number(result.points.back().fused.ap) << "\n";
  }
  auto best = std::max_element(result.points.begin(), result.points.end(),
                               [](const SweepPoint& a, const SweepPoint& b) { return a.fused.ap < b.fused.ap; });
  result.best_lambda = best->lambda;
  auto expected = std::find_if(result.points.begin(), result.points.end(),
                               [&](const SweepPoint& p) { return p.lambda == expected_best; });
  if (expected == result.points.end()) {
    result.flag = "lambda " + format_number(expected_best) + " was not part of the sweep";
  } else if (expected->fused.ap < best->fused.ap) {
    result.flag = "best fused AP at lambda " + format_number(best->lambda) + " (" + format_number(best->fused.ap) +
                  "), not at " + format_number(expected_best) + " (" + format_number(expected->fused.ap) + ")";
  }

  std::string csv = "lambda,ap,ap50,ap75,ap_s,ap_m,ap_l\n";
  std::vector<EvalRow> rows;
  for (const auto& p : result.points) {
    const auto& e = p.fused;
    csv += format_number(p.lambda) + "," + format_number(e.ap) + "," + format_number(e.ap50) + "," +
           format_number(e.ap75) + "," + format_number(e.ap_s) + "," + format_number(e.ap_m) + "," +
           format_number(e.ap_l) + "\n";
    rows.push_back({format_number(p.lambda), e});
  }
  write_text(dir / "sweep.csv", csv);
  std::string text = "fused AP per lambda\n" + format_eval_table(rows);
  text += result.flag ? "FLAG: " + *result.flag + "\n" : "best lambda " + format_number(result.best_lambda) + "\n";
  write_text(dir / "sweep.txt", text);
  out << text;
  return result;
}

void cmd_plot_data(const fs::path& metrics, const std::string& phase, const std::vector<std::string>& keys,
                   std::ostream& out) {
  MetricsTable table;
  try {
    table = read_metrics(metrics);
  } catch (const std::runtime_error& e) {
    throw IoError(e.what());
  }
  for (const auto& k : keys) {
    if (std::find(table.columns.begin(), table.columns.end(), k) == table.columns.end()) {
      throw std::invalid_argument("plot-data: no column '" + k + "' in " + metrics.string());
    }
  }
  const auto phase_col = static_cast<std::size_t>(
      std::find(table.columns.begin(), table.columns.end(), "phase") - table.columns.begin());
  out << "# step";
  for (const auto& k : keys) out << ' ' << k;
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r][phase_col] != phase) continue;
    out << table.rows[r][1];
    for (const auto& k : keys) {
      const auto v = table.value(r, k);
      out << ' ' << (v ? format_number(*v) : std::string("?"));
    }
    out << '\n';
  }
}

}  // namespace lrd
