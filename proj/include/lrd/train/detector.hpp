#pragma once

#include <cstdint>
#include <optional>

#include "lrd/model/fusion.hpp"
#include "lrd/model/head.hpp"
#include "lrd/model/pyramid.hpp"
#include "lrd/train/config.hpp"

namespace lrd {

/// Backbone + head, and for fusion teachers one fusion module per head level.
///
/// The head always sees the high-resolution levels [min_level + m, max_level].
/// A low-resolution image reaches the same head either through the shifted
/// pyramid (levels [min_level, max_level - m], relabelled) or, for models
/// trained without alignment, through the same level range as a high image.
class Detector {
 public:
  /// `level_shift` is usually shift_offset(k); 0 is accepted so tests can
  /// make both branches identical.
  Detector(const BackboneConfig& backbone, const HeadConfig& head, std::optional<FusionConfig> fusion,
           int level_shift, TeacherMode mode, std::uint64_t seed);

  /// Teacher per cfg.teacher, or a plain aligned detector when `student`.
  static Detector from_config(const ExperimentConfig& cfg, bool student = false);

  Backbone& backbone() { return backbone_; }
  const Backbone& backbone() const { return backbone_; }
  const Head& head() const { return head_; }
  bool has_fusion() const { return fusion_.has_value(); }
  const FusionModule& fusion() const;
  int level_shift() const { return m_; }
  TeacherMode mode() const { return mode_; }
  int head_min_level() const { return backbone_.config().min_level + m_; }
  int head_max_level() const { return backbone_.config().max_level; }

  /// Backbone then head parameters.
  ParamList detector_parameters() const;
  ParamList fusion_parameters() const;
  ParamList parameters() const;

  /// Head levels of a high-resolution image.
  FeaturePyramid high_pyramid(const Tensor& image) const;
  /// Shifted pyramid of a k-times smaller image; labels pair with high levels.
  FeaturePyramid aligned_low_pyramid(const Tensor& image_low) const;
  /// Low image through the head levels in its own frame (strides of the low image).
  FeaturePyramid native_low_pyramid(const Tensor& image_low) const;
  FusedPyramid fuse(const FeaturePyramid& high, const FeaturePyramid& low_aligned) const;

 private:
  int m_;
  TeacherMode mode_;
  Backbone backbone_;
  Head head_;
  std::optional<FusionModule> fusion_;
};

}  // namespace lrd
