#include "lrd/train/detector.hpp"

#include <numeric>
#include <random>
#include <stdexcept>

namespace lrd {

namespace {

std::vector<int> level_range(int lo, int hi) {
  std::vector<int> v(static_cast<std::size_t>(hi - lo + 1));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

Backbone make_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  auto rng = seeded_stream(seed, 1);
  return Backbone(cfg, rng);
}

Head make_head(const BackboneConfig& b, const HeadConfig& cfg, std::uint64_t seed) {
  auto rng = seeded_stream(seed, 2);
  return Head(b.pyramid_channels, cfg, rng);
}

}  // namespace

// Backbone, head and fusion draw from separate streams so changing the fusion
// variant leaves the detector's initial weights untouched.
Detector::Detector(const BackboneConfig& backbone, const HeadConfig& head, std::optional<FusionConfig> fusion,
                   int level_shift, TeacherMode mode, std::uint64_t seed)
    : m_(level_shift),
      mode_(mode),
      backbone_(make_backbone(backbone, seed)),
      head_(make_head(backbone, head, seed)) {
  if (level_shift < 0) throw std::invalid_argument("level shift must be >= 0");
  const int lo = head_min_level(), hi = head_max_level();
  if (hi - lo + 1 != head.num_levels()) {
    throw std::invalid_argument("head has " + std::to_string(head.num_levels()) + " levels but the pyramid offers " +
                                std::to_string(hi - lo + 1) + " (" + std::to_string(lo) + ".." +
                                std::to_string(hi) + ")");
  }
  if (fusion) {
    auto rng = seeded_stream(seed, 4);
    fusion_.emplace(*fusion, backbone.pyramid_channels, level_range(lo, hi), rng);
  }
}

Detector Detector::from_config(const ExperimentConfig& cfg, bool student) {
  std::optional<FusionConfig> fusion;
  if (!student && cfg.teacher.fusion) fusion = cfg.fusion;
  return Detector(cfg.backbone, cfg.head, fusion, cfg.level_shift(),
                  student ? TeacherMode::Aligned : cfg.teacher.mode, cfg.seed);
}

const FusionModule& Detector::fusion() const {
  if (!fusion_) throw std::logic_error("model has no fusion module");
  return *fusion_;
}

ParamList Detector::detector_parameters() const {
  ParamList out = backbone_.parameters();
  const auto& h = head_.parameters();
  out.insert(out.end(), h.begin(), h.end());
  return out;
}

ParamList Detector::fusion_parameters() const { return fusion_ ? fusion_->parameters() : ParamList{}; }

ParamList Detector::parameters() const {
  ParamList out = detector_parameters();
  const auto f = fusion_parameters();
  out.insert(out.end(), f.begin(), f.end());
  return out;
}

FeaturePyramid Detector::high_pyramid(const Tensor& image) const {
  return backbone_.pyramid(image, head_min_level(), head_max_level());
}

FeaturePyramid Detector::aligned_low_pyramid(const Tensor& image_low) const {
  ResolutionSpec spec;
  spec.k = 1 << m_;
  spec.m = m_;
  return backbone_.aligned_pyramid(image_low, spec);
}

FeaturePyramid Detector::native_low_pyramid(const Tensor& image_low) const {
  return backbone_.pyramid(image_low, head_min_level(), head_max_level());
}

FusedPyramid Detector::fuse(const FeaturePyramid& high, const FeaturePyramid& low_aligned) const {
  return fusion().fuse_pyramids(high, low_aligned);
}

}  // namespace lrd
