#include <CLI11.hpp>

#include <iostream>

#include "lrd/cli/commands.hpp"

using namespace lrd;

namespace {

void add_common(CLI::App* cmd, CommonOptions& opt) {
  cmd->add_option("--config", opt.config, "experiment config (JSON)");
  cmd->add_option("--seed", opt.seed, "override the config seed");
  cmd->add_option("--out-dir", opt.out_dir, "override the output directory");
}

int run(int argc, char** argv) {
  CLI::App app{"Multi-resolution teacher training and low-resolution student distillation"};
  app.require_subcommand(1);
  CommonOptions common;

  auto* teacher = app.add_subcommand("train-teacher", "train a multi-resolution teacher");
  add_common(teacher, common);
  std::string strategy;
  teacher->add_option("--strategy", strategy, "two-step or joint");

  auto* distill = app.add_subcommand("distill", "train a low-resolution student from a teacher checkpoint");
  add_common(distill, common);
  std::string teacher_path;
  bool no_kd = false;
  distill->add_option("--teacher", teacher_path, "teacher checkpoint")->required();
  distill->add_flag("--no-kd", no_kd, "train the same student without the feature-matching term");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on its validation split");
  add_common(eval, common);
  std::string ckpt_path, input = "H";
  eval->add_option("--checkpoint", ckpt_path, "checkpoint to evaluate")->required();
  eval->add_option("--input", input, "H, L or fused");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");

  auto* gen = app.add_subcommand("gen-data", "write the synthetic train/val split as PPM images");
  add_common(gen, common);

  auto* sweep = app.add_subcommand("sweep", "fused AP for several fusion-loss weights");
  add_common(sweep, common);
  std::vector<double> lambdas{0.2, 0.4, 1.0};
  double expected = 0.4;
  sweep->add_option("--lambdas", lambdas, "weights to try");
  sweep->add_option("--expect-best", expected, "weight expected to win; flagged otherwise");

  auto* plot = app.add_subcommand("plot-data", "gnuplot-ready columns from a metrics CSV");
  std::string metrics, phase = "align";
  std::vector<std::string> keys{"L_T"};
  plot->add_option("metrics", metrics, "metrics CSV")->required();
  plot->add_option("--phase", phase, "align, joint, fusion or student");
  plot->add_option("--keys", keys, "columns after step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*teacher) {
      ExperimentConfig cfg = resolve_config(common);
      if (!strategy.empty()) cfg.teacher.strategy = parse_fusion_strategy(strategy);
      cfg.validate();
      cmd_train_teacher(cfg, make_training_data(cfg.data), std::cout);
    } else if (*distill) {
      ExperimentConfig cfg = resolve_config(common);
      if (no_kd) cfg.student.kd = false;
      const Checkpoint t = load_checkpoint(teacher_path);
      cmd_distill(cfg, make_training_data(cfg.data), t, std::cout);
    } else if (*eval) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      if (common.config) check_compatible(ckpt.config, resolve_config(common));
      const EvalInput in = parse_eval_input(input);
      cmd_eval(ckpt, in, common.out_dir ? *common.out_dir : ckpt.config.out_dir, std::cout);
    } else if (*gradcheck) {
      return cmd_gradcheck(std::cout) ? kExitOk : kExitNumerical;
    } else if (*gen) {
      cmd_gen_data(resolve_config(common), std::cout);
    } else if (*sweep) {
      const ExperimentConfig cfg = resolve_config(common);
      cmd_sweep(cfg, make_training_data(cfg.data), lambdas, expected, std::cout);
    } else if (*plot) {
      cmd_plot_data(metrics, phase, keys, std::cout);
    }
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const InfeasibleSceneError& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kExitValidation;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::logic_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
