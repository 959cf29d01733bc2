#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lrd/cli/checkpoint.hpp"
#include "lrd/train/loops.hpp"

namespace lrd {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumerical = 2, kExitIo = 3 };

/// Flags shared by every subcommand; unset ones keep the config value.
struct CommonOptions {
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

/// Defaults, then the config file, then flag overrides; validated.
ExperimentConfig resolve_config(const CommonOptions& opt);

struct TeacherRun {
  std::filesystem::path checkpoint, metrics;
  Detector model;
};

/// Writes teacher.ckpt, teacher_metrics.csv, teacher_summary.txt and
/// config.json under cfg.out_dir.
TeacherRun cmd_train_teacher(const ExperimentConfig& cfg, const TrainingData& data, std::ostream& log);

struct StudentRun {
  std::filesystem::path checkpoint, metrics;
  Detector model;
};

/// Student files are prefixed "student" or, without the matching term,
/// "student_nokd".
StudentRun cmd_distill(const ExperimentConfig& cfg, const TrainingData& data, const Checkpoint& teacher,
                       std::ostream& log);

struct EvalRow {
  std::string label;
  EvalResult result;
};
std::string format_eval_table(const std::vector<EvalRow>& rows);

/// Evaluates on the validation split of the checkpoint's own data config
/// and writes eval_<role>_<input>.txt under out_dir.
EvalRow cmd_eval(const Checkpoint& ckpt, EvalInput input, const std::filesystem::path& out_dir, std::ostream& out);

/// Prints one line per case; returns false if any case failed.
bool cmd_gradcheck(std::ostream& out);

/// Writes <out_dir>/data/{train,val}/ as PPM images plus annotations.
void cmd_gen_data(const ExperimentConfig& cfg, std::ostream& out);

struct SweepPoint {
  double lambda;
  EvalResult fused;
};
struct SweepResult {
  std::vector<SweepPoint> points;
  double best_lambda = 0.0;
  /// Set when the best weight differs from `expected_best`.
  std::optional<std::string> flag;
};

/// Fused AP per fusion-loss weight. Two-step teachers share the first phase
/// across weights; joint teachers are retrained per weight. Writes
/// sweep.csv and sweep.txt.
SweepResult cmd_sweep(const ExperimentConfig& cfg, const TrainingData& data, const std::vector<double>& lambdas,
                      double expected_best, std::ostream& out);

/// Whitespace-separated columns (step, then `keys`) for rows of `phase`,
/// blank cells written as "?" (gnuplot's missing-value marker).
void cmd_plot_data(const std::filesystem::path& metrics, const std::string& phase,
                   const std::vector<std::string>& keys, std::ostream& out);

}  // namespace lrd
