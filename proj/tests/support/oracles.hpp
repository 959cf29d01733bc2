#pragma once

#include <random>
#include <vector>

#include "lrd/data/eval.hpp"
#include "lrd/model/head.hpp"
#include "lrd/tensor/tensor.hpp"

// Slow reference implementations written from the definitions, shared by the
// unit tests and the acceptance suite.
namespace lrd::oracle {

/// Cross-correlation of [N,Ci,H,W] with [Co,Ci,kh,kw] plus bias, row-major.
std::vector<double> naive_conv(const Tensor64& x, const Tensor64& w, const Tensor64& b, int stride, int pad);

/// Greedy per-class suppression by repeated arg-max over the remaining pool.
std::vector<Box> nms_oracle(const std::vector<Box>& boxes, double iou_threshold);

std::vector<Box> random_boxes(std::mt19937_64& rng, int count, double side, int classes, bool disjoint);

struct Scene {
  std::vector<std::vector<Box>> preds, gts;
};
/// Up to `max_boxes` ground-truth and predicted boxes per image, most
/// predictions jittered copies of a ground-truth box.
Scene random_scene(std::mt19937_64& rng, int images, int max_boxes, int classes);

double oracle_ap(const std::vector<std::vector<Box>>& preds, const std::vector<std::vector<Box>>& gts,
                 const EvalOptions& opt, const std::vector<double>& thresholds, AreaRange area);
EvalResult oracle_eval(const std::vector<std::vector<Box>>& preds, const std::vector<std::vector<Box>>& gts,
                       const EvalOptions& opt);

}  // namespace lrd::oracle
