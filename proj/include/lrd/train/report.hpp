#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lrd/train/config.hpp"

namespace lrd {

/// A loss or gradient that is not finite. Carries the name of the term.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& term, const std::string& what)
      : std::runtime_error(what), term_(term) {}
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// Keys a report may hold, in CSV column order. "high", "low" and "fused" are
/// the detection losses of the three inputs, each the sum of its _cls, _reg
/// and _ctr parts.
const std::vector<std::string>& report_keys();

/// Named scalars of one optimizer step plus the mean fusion gate per level.
class LossReport {
 public:
  void set(const std::string& key, double value);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  double at(const std::string& key) const;
  const std::map<std::string, double>& values() const { return values_; }

  /// Mean (high, low) weight over the batch for each fused level.
  std::map<int, std::pair<double, double>> gates;

  /// Throws NumericalError naming the first non-finite entry.
  void check_finite() const;

 private:
  std::map<std::string, double> values_;
};

/// Relative tolerance of the composite identities: |lhs - rhs| <= tol * max(1, |lhs|).
inline constexpr double kAuditTolerance = 1e-6;

/// Checks every composite identity whose terms are all present:
///   L_x = L_x_cls + L_x_reg + L_x_ctr   (x = high, low, fused)
///   L_Align = L_high + L_low
///   L_F = lambda * L_fused
///   L_T = L_Align + L_F  (or L_F alone in a fusion-only step)
///   L_S = gamma * L_KD + (1 - gamma) * L_low  (L_low alone when gamma = 0)
/// Returns one message per violation.
std::vector<std::string> audit_report(const std::map<std::string, double>& values, const LossWeights& w);

struct MetricsRow {
  std::string phase;
  std::int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  LossReport report;
};

/// phase,step,epoch,lr,<report_keys()>,gate_high_<s>,gate_low_<s>...
/// Absent values are empty cells. Numbers use the shortest round-trip form.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, std::vector<int> gate_levels);
  void write(const MetricsRow& row);

 private:
  std::ofstream os_;
  std::vector<int> gate_levels_;
};

std::string metrics_header(const std::vector<int>& gate_levels);
std::string format_number(double v);

/// Parsed metrics file: header names and, per row, the raw cells.
struct MetricsTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  /// Numeric cell or nullopt when empty.
  std::optional<double> value(std::size_t row, const std::string& column) const;
};
MetricsTable read_metrics(const std::filesystem::path& path);

}  // namespace lrd
