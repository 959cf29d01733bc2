#include "oracles.hpp"

#include <algorithm>
#include <functional>

namespace lrd::oracle {

// Seven nested loops, straight from the definition of cross-correlation.
std::vector<double> naive_conv(const Tensor64& x, const Tensor64& w, const Tensor64& b, int stride,
                               int pad) {
  const auto n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const auto co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const auto ho = (h + 2 * pad - kh) / stride + 1, wo = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(n * co * ho * wo));
  auto X = [&](auto a, auto c, auto y, auto xx) { return x.data()[((a * ci + c) * h + y) * wd + xx]; };
  auto W = [&](auto o, auto c, auto y, auto xx) { return w.data()[((o * ci + c) * kh + y) * kw + xx]; };
  for (std::int64_t a = 0; a < n; ++a)
    for (std::int64_t o = 0; o < co; ++o)
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          double acc = b.data()[o];
          for (std::int64_t c = 0; c < ci; ++c)
            for (std::int64_t ky = 0; ky < kh; ++ky)
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const auto iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                if (iy >= 0 && iy < h && ix >= 0 && ix < wd) acc += X(a, c, iy, ix) * W(o, c, ky, kx);
              }
          out[((a * co + o) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

std::vector<Box> nms_oracle(const std::vector<Box>& boxes, double iou_threshold) {
  std::vector<Box> pool = boxes, expect;
  while (!pool.empty()) {
    auto best = std::max_element(pool.begin(), pool.end(), [](const Box& a, const Box& b) { return a.score < b.score; });
    Box keep = *best;
    expect.push_back(keep);
    std::vector<Box> rest;
    for (const Box& b : pool)
      if (!(b.class_id == keep.class_id && (iou(b, keep) > iou_threshold || &b == &*best))) rest.push_back(b);
    pool = rest;
  }
  return expect;
}

std::vector<Box> random_boxes(std::mt19937_64& rng, int count, double side, int classes, bool disjoint) {
  std::uniform_real_distribution<double> pos(0.0, side), ext(4.0, side / 2);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::vector<Box> out;
  for (int tries = 0; static_cast<int>(out.size()) < count && tries < 10000; ++tries) {
    Box b;
    const double w = ext(rng), h = ext(rng);
    b.x0 = static_cast<float>(std::min(pos(rng), side - w));
    b.y0 = static_cast<float>(std::min(pos(rng), side - h));
    b.x1 = static_cast<float>(b.x0 + w);
    b.y1 = static_cast<float>(b.y0 + h);
    b.class_id = cls(rng);
    if (disjoint && std::any_of(out.begin(), out.end(), [&](const Box& o) { return iou(o, b) > 0.0; })) continue;
    out.push_back(b);
  }
  return out;
}

// Independent evaluator: per image and class, enumerates every injective
// assignment of detections to ground truth and keeps the lexicographically
// best one in score order, then interpolates precision by brute force.
double oracle_ap(const std::vector<std::vector<Box>>& preds, const std::vector<std::vector<Box>>& gts,
                 const EvalOptions& opt, const std::vector<double>& thresholds, AreaRange area) {
  auto inside = [&](double a) { return a >= area.lo && a < area.hi; };
  std::vector<std::vector<std::vector<double>>> q(thresholds.size());
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    q[t].resize(static_cast<std::size_t>(opt.num_classes));
    for (int k = 0; k < opt.num_classes; ++k) {
      struct Row {
        float score;
        bool tp, fp;
      };
      std::vector<Row> rows;
      int npig = 0;
      for (std::size_t img = 0; img < preds.size(); ++img) {
        std::vector<Box> d, g;
        for (const auto& b : preds[img])
          if (b.class_id == k) d.push_back(b);
        for (const auto& b : gts[img])
          if (b.class_id == k) g.push_back(b);
        std::stable_sort(d.begin(), d.end(), [](const Box& a, const Box& b) { return a.score > b.score; });
        if (static_cast<int>(d.size()) > opt.max_detections) d.resize(static_cast<std::size_t>(opt.max_detections));
        for (const auto& b : g) npig += inside(b.area());
        std::vector<int> assign(d.size(), -1), best_assign;
        std::vector<std::pair<int, double>> best_key;
        bool have_best = false;
        std::vector<bool> used(g.size(), false);
        std::function<void(std::size_t)> rec = [&](std::size_t i) {
          if (i == d.size()) {
            std::vector<std::pair<int, double>> key;
            for (std::size_t j = 0; j < d.size(); ++j) {
              if (assign[j] < 0) key.push_back({0, 0.0});
              else {
                const Box& gb = g[static_cast<std::size_t>(assign[j])];
                key.push_back({inside(gb.area()) ? 2 : 1, iou(d[j], gb)});
              }
            }
            if (!have_best || key > best_key) {
              have_best = true;
              best_key = key;
              best_assign = assign;
            }
            return;
          }
          assign[i] = -1;
          rec(i + 1);
          for (std::size_t j = 0; j < g.size(); ++j) {
            if (used[j] || iou(d[i], g[j]) < thresholds[t]) continue;
            used[j] = true;
            assign[i] = static_cast<int>(j);
            rec(i + 1);
            used[j] = false;
            assign[i] = -1;
          }
        };
        rec(0);
        for (std::size_t j = 0; j < d.size(); ++j) {
          const int m = best_assign[j];
          bool ignored, matched = m >= 0;
          if (matched) ignored = !inside(g[static_cast<std::size_t>(m)].area());
          else ignored = !inside(d[j].area());
          rows.push_back({d[j].score, matched && !ignored, !matched && !ignored});
        }
      }
      if (npig == 0) continue;
      std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.score > b.score; });
      std::vector<double> prec, rec_;
      int tp = 0, fp = 0;
      for (const auto& r : rows) {
        tp += r.tp;
        fp += r.fp;
        prec.push_back(tp + fp == 0 ? 0.0 : double(tp) / double(tp + fp));
        rec_.push_back(double(tp) / double(npig));
      }
      auto& out = q[t][static_cast<std::size_t>(k)];
      for (int r = 0; r <= 100; ++r) {
        double best = 0.0;
        for (std::size_t i = 0; i < prec.size(); ++i)
          if (rec_[i] >= r / 100.0) best = std::max(best, prec[i]);
        out.push_back(best);
      }
    }
  }
  double total = 0;
  long count = 0;
  for (const auto& per_t : q)
    for (const auto& cls : per_t)
      for (double v : cls) {
        total += v;
        ++count;
      }
  return count == 0 ? -1.0 : total / double(count);
}

EvalResult oracle_eval(const std::vector<std::vector<Box>>& preds, const std::vector<std::vector<Box>>& gts,
                       const EvalOptions& opt) {
  auto ranges = area_ranges(opt);
  auto th = iou_thresholds();
  std::vector<double> all(th.begin(), th.end());
  auto pct = [](double v) { return v < 0 ? 0.0 : 100.0 * v; };
  EvalResult r;
  r.ap = pct(oracle_ap(preds, gts, opt, all, ranges[0]));
  r.ap50 = pct(oracle_ap(preds, gts, opt, {0.5}, ranges[0]));
  r.ap75 = pct(oracle_ap(preds, gts, opt, {0.75}, ranges[0]));
  r.ap_s = pct(oracle_ap(preds, gts, opt, all, ranges[1]));
  r.ap_m = pct(oracle_ap(preds, gts, opt, all, ranges[2]));
  r.ap_l = pct(oracle_ap(preds, gts, opt, all, ranges[3]));
  return r;
}

Scene random_scene(std::mt19937_64& rng, int images, int max_boxes, int classes) {
  std::uniform_real_distribution<float> pos(0, 100), side(3, 40), jitter(-4, 4), unit(0, 1);
  std::uniform_int_distribution<int> nbox(0, max_boxes), cls(0, classes - 1);
  Scene s;
  for (int i = 0; i < images; ++i) {
    std::vector<Box> g, p;
    const int ng = nbox(rng);
    for (int j = 0; j < ng; ++j) {
      const float x = pos(rng), y = pos(rng);
      g.push_back(Box{x, y, x + side(rng), y + side(rng), cls(rng), 1.0f});
    }
    const int np = nbox(rng);
    for (int j = 0; j < np; ++j) {
      Box b;
      if (!g.empty() && unit(rng) < 0.7f) {
        b = g[static_cast<std::size_t>(j) % g.size()];
        b.x0 += jitter(rng) * 0.5f;
        b.y0 += jitter(rng) * 0.5f;
        b.x1 = std::max(b.x0 + 1.0f, b.x1 + jitter(rng) * 0.5f);
        b.y1 = std::max(b.y0 + 1.0f, b.y1 + jitter(rng) * 0.5f);
        if (unit(rng) < 0.2f) b.class_id = cls(rng);
      } else {
        const float x = pos(rng), y = pos(rng);
        b = Box{x, y, x + side(rng), y + side(rng), cls(rng), 1.0f};
      }
      b.score = unit(rng);
      p.push_back(b);
    }
    s.gts.push_back(g);
    s.preds.push_back(p);
  }
  return s;
}

}  // namespace lrd::oracle
