#pragma once

#include <array>
#include <string>
#include <vector>

#include "lrd/model/head.hpp"

namespace lrd {

/// COCO-style summary, every value in [0,100]. A size stratum without any
/// ground truth reports 0 and is flagged in `stratum_present`.
struct EvalResult {
  double ap = 0, ap50 = 0, ap75 = 0, ap_s = 0, ap_m = 0, ap_l = 0;
  std::array<bool, 3> stratum_present{false, false, false};
};

struct EvalOptions {
  int num_classes = 3;
  int max_detections = 100;
  /// Reference side for the size strata: small below (side/20)^2, medium
  /// below (0.15*side)^2, large above.
  double image_side = 128.0;
};

struct AreaRange {
  double lo, hi;
};

/// [all, small, medium, large] for the given options.
std::array<AreaRange, 4> area_ranges(const EvalOptions& opt);

/// IoU thresholds 0.50:0.05:0.95.
std::array<double, 10> iou_thresholds();

/// Mean 101-point interpolated precision of one (IoU threshold, area range)
/// pair averaged over classes that have ground truth; -1 if none do.
/// Exposed so an independent evaluator can be compared at this granularity.
double average_precision(const std::vector<std::vector<Box>>& predictions,
                         const std::vector<std::vector<Box>>& ground_truth, const EvalOptions& opt,
                         std::span<const double> thresholds, AreaRange area);

EvalResult evaluate_ap(const std::vector<std::vector<Box>>& predictions,
                       const std::vector<std::vector<Box>>& ground_truth, const EvalOptions& opt = {});

struct ReportRow {
  std::string model;  // "teacher" or "student" (free text)
  std::string input;  // "H", "L" or "fused"
  EvalResult result;
};

/// model,input,AP,AP50,AP75,AP_S,AP_M,AP_L
std::string report_csv_header();
std::string report_csv_row(const ReportRow& row);
ReportRow parse_report_csv_row(const std::string& line);
/// Fixed-width table with a header line.
std::string report_text(const std::vector<ReportRow>& rows);

}  // namespace lrd
