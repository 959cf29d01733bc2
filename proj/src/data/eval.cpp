#include "lrd/data/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace lrd {

std::array<AreaRange, 4> area_ranges(const EvalOptions& opt) {
  const double inf = std::numeric_limits<double>::infinity();
  const double small = opt.image_side / 20.0, medium = 0.15 * opt.image_side;
  return {AreaRange{0.0, inf}, AreaRange{0.0, small * small}, AreaRange{small * small, medium * medium},
          AreaRange{medium * medium, inf}};
}

std::array<double, 10> iou_thresholds() {
  std::array<double, 10> t{};
  for (int i = 0; i < 10; ++i) t[static_cast<std::size_t>(i)] = (50 + 5 * i) / 100.0;
  return t;
}

namespace {

bool in_range(double area, AreaRange r) { return area >= r.lo && area < r.hi; }

struct ScoredDet {
  float score;
  bool matched;
  bool ignored;
};

}  // namespace

double average_precision(const std::vector<std::vector<Box>>& predictions,
                         const std::vector<std::vector<Box>>& ground_truth, const EvalOptions& opt,
                         std::span<const double> thresholds, AreaRange area) {
  if (predictions.size() != ground_truth.size()) {
    throw std::invalid_argument("evaluate_ap: prediction and ground-truth image counts differ");
  }
  const std::size_t nt = thresholds.size();
  // q[t][k] holds the 101 interpolated precisions, empty when class k has no
  // counted ground truth.
  std::vector<std::vector<std::vector<double>>> q(nt, std::vector<std::vector<double>>(
                                                          static_cast<std::size_t>(opt.num_classes)));
  for (int k = 0; k < opt.num_classes; ++k) {
    std::vector<std::vector<ScoredDet>> per_t(nt);
    std::int64_t counted_gt = 0;
    for (std::size_t img = 0; img < predictions.size(); ++img) {
      std::vector<Box> dets, gts;
      for (const Box& b : predictions[img])
        if (b.class_id == k) dets.push_back(b);
      for (const Box& b : ground_truth[img])
        if (b.class_id == k) gts.push_back(b);
      std::stable_sort(dets.begin(), dets.end(), [](const Box& a, const Box& b) { return a.score > b.score; });
      if (static_cast<int>(dets.size()) > opt.max_detections) dets.resize(static_cast<std::size_t>(opt.max_detections));
      std::stable_partition(gts.begin(), gts.end(), [&](const Box& g) { return in_range(g.area(), area); });
      std::vector<bool> gt_ignored(gts.size());
      for (std::size_t g = 0; g < gts.size(); ++g) {
        gt_ignored[g] = !in_range(gts[g].area(), area);
        if (!gt_ignored[g]) ++counted_gt;
      }
      for (std::size_t t = 0; t < nt; ++t) {
        std::vector<bool> gt_taken(gts.size(), false);
        for (const Box& d : dets) {
          double best = std::min(thresholds[t], 1.0 - 1e-10);
          int m = -1;
          for (std::size_t g = 0; g < gts.size(); ++g) {
            if (gt_taken[g]) continue;
            if (m > -1 && !gt_ignored[static_cast<std::size_t>(m)] && gt_ignored[g]) break;
            const double o = iou(d, gts[g]);
            if (o < best) continue;
            best = o;
            m = static_cast<int>(g);
          }
          ScoredDet sd{d.score, m > -1, false};
          if (m > -1) {
            gt_taken[static_cast<std::size_t>(m)] = true;
            sd.ignored = gt_ignored[static_cast<std::size_t>(m)];
          } else {
            sd.ignored = !in_range(d.area(), area);
          }
          per_t[t].push_back(sd);
        }
      }
    }
    if (counted_gt == 0) continue;
    for (std::size_t t = 0; t < nt; ++t) {
      auto& ds = per_t[t];
      std::stable_sort(ds.begin(), ds.end(), [](const ScoredDet& a, const ScoredDet& b) { return a.score > b.score; });
      std::vector<double> rc(ds.size()), pr(ds.size());
      std::int64_t tp = 0, fp = 0;
      for (std::size_t i = 0; i < ds.size(); ++i) {
        if (!ds[i].ignored) (ds[i].matched ? tp : fp) += 1;
        rc[i] = static_cast<double>(tp) / static_cast<double>(counted_gt);
        pr[i] = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      }
      for (std::size_t i = ds.size(); i-- > 1;) pr[i - 1] = std::max(pr[i - 1], pr[i]);
      auto& out = q[t][static_cast<std::size_t>(k)];
      out.resize(101);
      for (int r = 0; r <= 100; ++r) {
        const double thr = r / 100.0;
        const auto idx = static_cast<std::size_t>(std::lower_bound(rc.begin(), rc.end(), thr) - rc.begin());
        out[static_cast<std::size_t>(r)] = idx < pr.size() ? pr[idx] : 0.0;
      }
    }
  }
  double total = 0.0;
  std::int64_t count = 0;
  for (std::size_t t = 0; t < nt; ++t)
    for (const auto& cls : q[t])
      for (double v : cls) {
        total += v;
        ++count;
      }
  return count == 0 ? -1.0 : total / static_cast<double>(count);
}

EvalResult evaluate_ap(const std::vector<std::vector<Box>>& predictions,
                       const std::vector<std::vector<Box>>& ground_truth, const EvalOptions& opt) {
  const auto ranges = area_ranges(opt);
  const auto all = iou_thresholds();
  const double t50[] = {0.5}, t75[] = {0.75};
  auto pct = [](double v) { return v < 0 ? 0.0 : 100.0 * v; };
  EvalResult r;
  r.ap = pct(average_precision(predictions, ground_truth, opt, all, ranges[0]));
  r.ap50 = pct(average_precision(predictions, ground_truth, opt, t50, ranges[0]));
  r.ap75 = pct(average_precision(predictions, ground_truth, opt, t75, ranges[0]));
  double* strata[] = {&r.ap_s, &r.ap_m, &r.ap_l};
  for (int i = 0; i < 3; ++i) {
    const double v = average_precision(predictions, ground_truth, opt, all, ranges[static_cast<std::size_t>(i + 1)]);
    r.stratum_present[static_cast<std::size_t>(i)] = v >= 0;
    *strata[i] = pct(v);
  }
  return r;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

}  // namespace

std::string report_csv_header() { return "model,input,AP,AP50,AP75,AP_S,AP_M,AP_L"; }

std::string report_csv_row(const ReportRow& row) {
  const auto& r = row.result;
  std::string out = row.model + "," + row.input;
  for (double v : {r.ap, r.ap50, r.ap75, r.ap_s, r.ap_m, r.ap_l}) out += "," + fmt_double(v);
  return out;
}

ReportRow parse_report_csv_row(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (cells.size() != 8) throw std::invalid_argument("report row needs 8 columns, got " + std::to_string(cells.size()));
  ReportRow row;
  row.model = cells[0];
  row.input = cells[1];
  double* dst[] = {&row.result.ap, &row.result.ap50, &row.result.ap75,
                   &row.result.ap_s, &row.result.ap_m, &row.result.ap_l};
  for (int i = 0; i < 6; ++i) *dst[i] = parse_double(cells[static_cast<std::size_t>(i + 2)]);
  return row;
}

std::string report_text(const std::vector<ReportRow>& rows) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-10s %-6s %7s %7s %7s %7s %7s %7s\n", "model", "input", "AP", "AP50", "AP75",
                "AP_S", "AP_M", "AP_L");
  out += buf;
  for (const auto& row : rows) {
    const auto& r = row.result;
    std::snprintf(buf, sizeof buf, "%-10s %-6s %7.2f %7.2f %7.2f %7.2f %7.2f %7.2f\n", row.model.c_str(),
                  row.input.c_str(), r.ap, r.ap50, r.ap75, r.ap_s, r.ap_m, r.ap_l);
    out += buf;
  }
  return out;
}

}  // namespace lrd
