#include "lrd/model/head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <tuple>

#include "lrd/tensor/ops.hpp"

namespace lrd {

Box Box::scaled(double f) const {
  Box b = *this;
  b.x0 = static_cast<float>(x0 * f);
  b.y0 = static_cast<float>(y0 * f);
  b.x1 = static_cast<float>(x1 * f);
  b.y1 = static_cast<float>(y1 * f);
  return b;
}

double iou(const Box& a, const Box& b) {
  const double iw = std::min<double>(a.x1, b.x1) - std::max<double>(a.x0, b.x0);
  const double ih = std::min<double>(a.y1, b.y1) - std::max<double>(a.y0, b.y0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = double(a.width()) * a.height() + double(b.width()) * b.height() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double centerness(double l, double t, double r, double b) {
  return std::sqrt((std::min(l, r) / std::max(l, r)) * (std::min(t, b) / std::max(t, b)));
}

std::pair<double, double> HeadConfig::scale_range(int index) const {
  const int n = num_levels();
  if (index < 0 || index >= n) throw std::out_of_range("head level index out of range");
  const double lower = index == 0 ? 0.0 : scale_bounds[static_cast<std::size_t>(index - 1)];
  const double upper = index == n - 1 ? std::numeric_limits<double>::infinity()
                                      : scale_bounds[static_cast<std::size_t>(index)];
  return {lower, upper};
}

void HeadConfig::validate() const {
  if (num_classes < 1) throw std::invalid_argument("head.num_classes must be >= 1");
  if (tower_depth < 0) throw std::invalid_argument("head.tower_depth must be >= 0");
  for (std::size_t i = 0; i < scale_bounds.size(); ++i) {
    if (!(scale_bounds[i] > 0.0) || (i > 0 && !(scale_bounds[i] > scale_bounds[i - 1]))) {
      throw std::invalid_argument("head.scale_bounds must be positive and strictly increasing");
    }
  }
  if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0)) throw std::invalid_argument("head.focal_alpha must be in [0,1]");
  if (!(focal_gamma >= 0.0)) throw std::invalid_argument("head.focal_gamma must be >= 0");
  if (!(prior_prob > 0.0 && prior_prob < 1.0)) throw std::invalid_argument("head.prior_prob must be in (0,1)");
  if (!(score_threshold >= 0.0 && score_threshold < 1.0)) {
    throw std::invalid_argument("head.score_threshold must be in [0,1)");
  }
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw std::invalid_argument("head.nms_iou must be in (0,1]");
  if (pre_nms_top_k < 1) throw std::invalid_argument("head.pre_nms_top_k must be >= 1");
  if (max_detections < 1) throw std::invalid_argument("head.max_detections must be >= 1");
}

std::vector<LevelGeometry> level_geometry(const FeaturePyramid& pyramid, const HeadConfig& cfg) {
  if (static_cast<int>(pyramid.levels.size()) != cfg.num_levels()) {
    throw std::invalid_argument("head expects " + std::to_string(cfg.num_levels()) +
                                " pyramid levels, got " + std::to_string(pyramid.levels.size()));
  }
  std::vector<LevelGeometry> out;
  int i = 0;
  for (const auto& [label, t] : pyramid.levels) {
    auto [lo, hi] = cfg.scale_range(i++);
    out.push_back({label, t.dim(2), t.dim(3), pyramid.strides.at(label), lo, hi});
  }
  return out;
}

std::int64_t LevelTargets::num_positive() const {
  return std::count_if(classes.begin(), classes.end(), [](int c) { return c >= 0; });
}

ImageTargets assign_targets(std::span<const Box> boxes, const std::vector<LevelGeometry>& levels) {
  // Visit boxes from smallest to largest so the first match wins; the full key
  // makes the result independent of input order.
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t i) {
    const Box& b = boxes[i];
    return std::make_tuple(b.area(), b.x0, b.y0, b.x1, b.y1, b.class_id);
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });

  ImageTargets out;
  for (const auto& g : levels) {
    LevelTargets t;
    t.label = g.label;
    t.height = g.height;
    t.width = g.width;
    t.stride = g.stride;
    const auto n = static_cast<std::size_t>(g.height * g.width);
    t.classes.assign(n, -1);
    t.ltrb.assign(n * 4, 0.0f);
    t.centerness.assign(n, 0.0f);
    const double half = g.stride / 2.0;
    for (std::size_t bi : order) {
      const Box& b = boxes[bi];
      // Range of locations that can fall inside the box.
      const auto y_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((b.y0 - half) / g.stride)));
      const auto y_hi = std::min<std::int64_t>(g.height - 1, static_cast<std::int64_t>(std::ceil((b.y1 - half) / g.stride)));
      const auto x_lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor((b.x0 - half) / g.stride)));
      const auto x_hi = std::min<std::int64_t>(g.width - 1, static_cast<std::int64_t>(std::ceil((b.x1 - half) / g.stride)));
      for (std::int64_t y = y_lo; y <= y_hi; ++y) {
        const double py = half + static_cast<double>(y) * g.stride;
        for (std::int64_t x = x_lo; x <= x_hi; ++x) {
          const auto idx = static_cast<std::size_t>(y * g.width + x);
          if (t.classes[idx] >= 0) continue;
          const double px = half + static_cast<double>(x) * g.stride;
          const double l = px - b.x0, tt = py - b.y0, r = b.x1 - px, bb = b.y1 - py;
          if (l <= 0 || tt <= 0 || r <= 0 || bb <= 0) continue;
          const double reach = std::max({l, tt, r, bb});
          if (!(reach > g.lower && reach <= g.upper)) continue;
          t.classes[idx] = b.class_id;
          t.ltrb[idx * 4 + 0] = static_cast<float>(l);
          t.ltrb[idx * 4 + 1] = static_cast<float>(tt);
          t.ltrb[idx * 4 + 2] = static_cast<float>(r);
          t.ltrb[idx * 4 + 3] = static_cast<float>(bb);
          t.centerness[idx] = static_cast<float>(centerness(l, tt, r, bb));
        }
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

ImageTargets assign_targets(std::span<const Box> boxes, const FeaturePyramid& pyramid,
                            const HeadConfig& cfg) {
  return assign_targets(boxes, level_geometry(pyramid, cfg));
}

template <typename T>
DetectionLoss<T> detection_loss(const HeadOutputs<T>& outputs, const std::vector<ImageTargets>& targets,
                                const HeadConfig& cfg) {
  if (outputs.empty()) throw std::invalid_argument("detection_loss: no levels");
  const std::int64_t batch = outputs.front().cls.dim(0);
  if (static_cast<std::int64_t>(targets.size()) != batch) {
    throw ShapeError("detection_loss: " + std::to_string(targets.size()) + " target sets for batch of " +
                     std::to_string(batch));
  }
  std::vector<BasicTensor<T>> cls_rows, reg_rows, ctr_rows;
  std::vector<int> labels;
  std::vector<std::int64_t> positives;
  std::vector<T> reg_target, ctr_target;
  std::int64_t row_base = 0;
  for (std::size_t li = 0; li < outputs.size(); ++li) {
    const auto& o = outputs[li];
    const std::int64_t h = o.cls.dim(2), w = o.cls.dim(3);
    if (o.cls.dim(0) != batch || o.reg.shape() != Shape{batch, 4, h, w} ||
        o.ctr.shape() != Shape{batch, 1, h, w}) {
      throw ShapeError("detection_loss: inconsistent output shapes at level " + std::to_string(o.label));
    }
    for (std::int64_t n = 0; n < batch; ++n) {
      const auto& per_image = targets[static_cast<std::size_t>(n)];
      if (per_image.size() != outputs.size()) throw ShapeError("detection_loss: level count mismatch");
      const LevelTargets& t = per_image[li];
      if (t.height != h || t.width != w) {
        throw ShapeError("detection_loss: target grid " + std::to_string(t.height) + "x" +
                         std::to_string(t.width) + " does not match outputs " + std::to_string(h) +
                         "x" + std::to_string(w) + " at level " + std::to_string(o.label));
      }
      for (std::int64_t i = 0; i < h * w; ++i) {
        const int c = t.classes[static_cast<std::size_t>(i)];
        if (c >= o.cls.dim(1)) throw std::invalid_argument("detection_loss: class id out of range");
        labels.push_back(c);
        if (c >= 0) {
          positives.push_back(row_base + n * h * w + i);
          for (int j = 0; j < 4; ++j)
            reg_target.push_back(static_cast<T>(t.ltrb[static_cast<std::size_t>(i * 4 + j)] / t.stride));
          ctr_target.push_back(static_cast<T>(t.centerness[static_cast<std::size_t>(i)]));
        }
      }
    }
    row_base += batch * h * w;
    cls_rows.push_back(to_rows(o.cls));
    reg_rows.push_back(to_rows(o.reg));
    ctr_rows.push_back(to_rows(o.ctr));
  }

  DetectionLoss<T> out;
  out.num_positive = static_cast<std::int64_t>(positives.size());
  const T norm = static_cast<T>(std::max<std::int64_t>(1, out.num_positive));
  auto focal = sigmoid_focal_loss(concat_rows(cls_rows), std::span<const int>(labels),
                                  static_cast<T>(cfg.focal_alpha), static_cast<T>(cfg.focal_gamma));
  out.cls = scale(focal, T{1} / norm);
  if (positives.empty()) {
    out.reg = BasicTensor<T>::scalar(T{0});
    out.ctr = BasicTensor<T>::scalar(T{0});
  } else {
    auto dist = exp(gather_rows(concat_rows(reg_rows), std::span<const std::int64_t>(positives)));
    out.reg = scale(iou_loss(dist, std::span<const T>(reg_target)), T{1} / norm);
    auto ctr = gather_rows(concat_rows(ctr_rows), std::span<const std::int64_t>(positives));
    out.ctr = scale(bce_with_logits(ctr, std::span<const T>(ctr_target)), T{1} / norm);
  }
  out.total = add(add(out.cls, out.reg), out.ctr);
  return out;
}

template DetectionLoss<float> detection_loss(const HeadOutputs<float>&, const std::vector<ImageTargets>&,
                                             const HeadConfig&);
template DetectionLoss<double> detection_loss(const HeadOutputs<double>&, const std::vector<ImageTargets>&,
                                              const HeadConfig&);

// stddev 0 selects Kaiming-uniform; prediction layers use a small normal.
Head::Conv Head::make_conv(const std::string& name, int in, int out, std::mt19937_64& rng, float bias,
                           double stddev) {
  Conv c{stddev > 0.0 ? normal_param({out, in, 3, 3}, stddev, rng)
                      : kaiming_uniform({out, in, 3, 3}, std::int64_t{in} * 9, rng),
         constant_param({out}, bias)};
  params_.push_back({name + ".w", c.w});
  params_.push_back({name + ".b", c.b});
  return c;
}

Head::Head(int channels, HeadConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (int i = 0; i < cfg_.tower_depth; ++i)
    cls_tower_.push_back(make_conv("head.cls_tower" + std::to_string(i), channels, channels, rng, 0.0f));
  for (int i = 0; i < cfg_.tower_depth; ++i)
    reg_tower_.push_back(make_conv("head.reg_tower" + std::to_string(i), channels, channels, rng, 0.0f));
  const auto prior_bias = static_cast<float>(-std::log((1.0 - cfg_.prior_prob) / cfg_.prior_prob));
  cls_out_ = make_conv("head.cls_out", channels, cfg_.num_classes, rng, prior_bias, kPredictionInitStd);
  reg_out_ = make_conv("head.reg_out", channels, 4, rng, 0.0f, kPredictionInitStd);
  ctr_out_ = make_conv("head.ctr_out", channels, 1, rng, 0.0f, kPredictionInitStd);
}

HeadOutputs<float> Head::forward(const FeaturePyramid& pyramid) const {
  HeadOutputs<float> out;
  for (const auto& [label, feat] : pyramid.levels) {
    Tensor c = feat, r = feat;
    for (const auto& conv : cls_tower_) c = relu(conv2d(c, conv.w, conv.b, 1, 1));
    for (const auto& conv : reg_tower_) r = relu(conv2d(r, conv.w, conv.b, 1, 1));
    LevelOutputs<float> lo;
    lo.cls = conv2d(c, cls_out_.w, cls_out_.b, 1, 1);
    lo.reg = conv2d(r, reg_out_.w, reg_out_.b, 1, 1);
    lo.ctr = conv2d(r, ctr_out_.w, ctr_out_.b, 1, 1);
    lo.label = label;
    lo.stride = pyramid.strides.at(label);
    out.push_back(std::move(lo));
  }
  return out;
}

std::vector<Box> nms(std::vector<Box> boxes, double iou_threshold, int max_keep) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) { return a.score > b.score; });
  std::vector<Box> kept;
  for (const Box& b : boxes) {
    if (static_cast<int>(kept.size()) >= max_keep) break;
    bool suppressed = false;
    for (const Box& k : kept) {
      if (k.class_id == b.class_id && iou(k, b) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

namespace {

float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

std::vector<Box> decode_detections(const HeadOutputs<float>& outputs, std::int64_t n, const HeadConfig& cfg,
                                   double width, double height) {
  std::vector<Box> candidates;
  for (const auto& o : outputs) {
    const std::int64_t k = o.cls.dim(1), h = o.cls.dim(2), w = o.cls.dim(3);
    if (n < 0 || n >= o.cls.dim(0)) throw std::out_of_range("decode_detections: image index");
    const auto cls = o.cls.data().subspan(static_cast<std::size_t>(n * k * h * w));
    const auto reg = o.reg.data().subspan(static_cast<std::size_t>(n * 4 * h * w));
    const auto ctr = o.ctr.data().subspan(static_cast<std::size_t>(n * h * w));
    const double stride = o.stride;
    for (std::int64_t i = 0; i < h * w; ++i) {
      const float pc = sigmoidf(ctr[static_cast<std::size_t>(i)]);
      for (std::int64_t c = 0; c < k; ++c) {
        const float score = std::sqrt(sigmoidf(cls[static_cast<std::size_t>(c * h * w + i)]) * pc);
        if (!(score > cfg.score_threshold)) continue;
        const double px = stride / 2 + static_cast<double>(i % w) * stride;
        const double py = stride / 2 + static_cast<double>(i / w) * stride;
        double d[4];
        for (int j = 0; j < 4; ++j) d[j] = std::exp(double(reg[static_cast<std::size_t>(j * h * w + i)])) * stride;
        Box b;
        b.x0 = static_cast<float>(std::clamp(px - d[0], 0.0, width));
        b.y0 = static_cast<float>(std::clamp(py - d[1], 0.0, height));
        b.x1 = static_cast<float>(std::clamp(px + d[2], 0.0, width));
        b.y1 = static_cast<float>(std::clamp(py + d[3], 0.0, height));
        b.class_id = static_cast<int>(c);
        b.score = score;
        if (b.valid()) candidates.push_back(b);
      }
    }
  }
  if (static_cast<int>(candidates.size()) > cfg.pre_nms_top_k) {
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Box& a, const Box& b) { return a.score > b.score; });
    candidates.resize(static_cast<std::size_t>(cfg.pre_nms_top_k));
  }
  return nms(std::move(candidates), cfg.nms_iou, cfg.max_detections);
}

}  // namespace lrd
