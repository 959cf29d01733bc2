#pragma once

#include <random>
#include <span>
#include <utility>
#include <vector>

#include "lrd/model/params.hpp"
#include "lrd/model/pyramid.hpp"
#include "lrd/tensor/tensor.hpp"

namespace lrd {

struct Box {
  float x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  int class_id = 0;
  float score = 1.0f;

  float width() const { return x1 - x0; }
  float height() const { return y1 - y0; }
  float area() const { return width() * height(); }
  bool valid() const { return x1 > x0 && y1 > y0; }
  Box scaled(double f) const;
};

double iou(const Box& a, const Box& b);

/// sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b)).
double centerness(double l, double t, double r, double b);

struct HeadConfig {
  int num_classes = 3;
  int tower_depth = 4;
  /// Boundaries between consecutive head levels on max(l,t,r,b), in pixels of
  /// the frame the pyramid strides are expressed in. n levels need n-1 values.
  std::vector<double> scale_bounds{16.0, 32.0, 64.0};
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double prior_prob = 0.01;
  double score_threshold = 0.05;
  double nms_iou = 0.6;
  int pre_nms_top_k = 1000;
  int max_detections = 100;

  int num_levels() const { return static_cast<int>(scale_bounds.size()) + 1; }
  /// (lower, upper] assignment range of the i-th head level.
  std::pair<double, double> scale_range(int index) const;
  void validate() const;
};

struct LevelGeometry {
  int label = 0;
  std::int64_t height = 0, width = 0;
  int stride = 1;
  double lower = 0.0, upper = 0.0;
};

/// Head levels are the pyramid's labels in ascending order; their count must
/// match cfg.num_levels().
std::vector<LevelGeometry> level_geometry(const FeaturePyramid& pyramid, const HeadConfig& cfg);

struct LevelTargets {
  int label = 0;
  std::int64_t height = 0, width = 0;
  int stride = 1;
  std::vector<int> classes;       // per location, -1 = background
  std::vector<float> ltrb;        // 4 per location, pixels
  std::vector<float> centerness;  // per location

  std::int64_t size() const { return height * width; }
  std::int64_t num_positive() const;
};

using ImageTargets = std::vector<LevelTargets>;

/// Location (y, x) of a level sits at (stride/2 + y*stride, stride/2 +
/// x*stride). It is positive for the smallest-area box that strictly contains
/// it and whose max(l,t,r,b) falls in the level's range. Boxes are in the
/// stride frame.
ImageTargets assign_targets(std::span<const Box> boxes, const std::vector<LevelGeometry>& levels);
ImageTargets assign_targets(std::span<const Box> boxes, const FeaturePyramid& pyramid,
                            const HeadConfig& cfg);

/// Raw head outputs of one level: cls [N,K,H,W] logits, reg [N,4,H,W] log
/// distances in stride units, ctr [N,1,H,W] logits.
template <typename T>
struct LevelOutputs {
  BasicTensor<T> cls, reg, ctr;
  int label = 0;
  int stride = 1;
};

template <typename T>
using HeadOutputs = std::vector<LevelOutputs<T>>;

template <typename T>
struct DetectionLoss {
  BasicTensor<T> cls, reg, ctr, total;
  std::int64_t num_positive = 0;
};

/// cls: focal sum / max(1, positives); reg: mean -ln IoU over positives; ctr:
/// mean BCE over positives; total = cls + reg + ctr. targets[n] belongs to
/// image n of the batch.
template <typename T>
DetectionLoss<T> detection_loss(const HeadOutputs<T>& outputs, const std::vector<ImageTargets>& targets,
                                const HeadConfig& cfg);

/// Standard deviation of the normal init of the three prediction convs.
inline constexpr double kPredictionInitStd = 0.01;

/// Shared conv towers applied to every pyramid level with the same tensors.
class Head {
 public:
  Head(int channels, HeadConfig cfg, std::mt19937_64& rng);

  const HeadConfig& config() const { return cfg_; }
  const ParamList& parameters() const { return params_; }

  HeadOutputs<float> forward(const FeaturePyramid& pyramid) const;

 private:
  struct Conv {
    Tensor w, b;
  };
  Conv make_conv(const std::string& name, int in, int out, std::mt19937_64& rng, float bias, double stddev = 0.0);

  HeadConfig cfg_;
  ParamList params_;
  std::vector<Conv> cls_tower_, reg_tower_;
  Conv cls_out_, reg_out_, ctr_out_;
};

/// Greedy class-wise NMS: boxes visited by descending score (ties keep input
/// order), kept unless a kept box of the same class overlaps with IoU >
/// iou_threshold. At most max_keep survivors.
std::vector<Box> nms(std::vector<Box> boxes, double iou_threshold, int max_keep);

/// Detections for image n, in the stride frame, clipped to [0,width]x[0,height].
std::vector<Box> decode_detections(const HeadOutputs<float>& outputs, std::int64_t n,
                                   const HeadConfig& cfg, double width, double height);

}  // namespace lrd
