#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrd/model/params.hpp"
#include "lrd/tensor/tensor.hpp"

namespace lrd {

/// Raised when two feature maps that must be spatially aligned are not.
class AlignmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised for image sizes the pyramid cannot consume.
class InputSizeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Fewest pyramid levels an aligned (shifted) low-resolution branch may keep.
inline constexpr int kMinAlignedLevels = 3;

/// Level shift that makes a k-times smaller input line up with the full-size
/// pyramid: m = log2(k). Throws unless k is a power of two >= 2.
int shift_offset(int k);

struct ResolutionSpec {
  int high_h = 0, high_w = 0;
  int low_h = 0, low_w = 0;
  int k = 2;
  int m = 1;

  /// Throws unless k is a power of two >= 2 dividing both sides.
  static ResolutionSpec make(int high_h, int high_w, int k);
};

struct BackboneConfig {
  int stem_width = 16;
  std::vector<int> stage_widths{16, 32, 64, 128};
  int pyramid_channels = 32;
  int min_level = 2;
  int max_level = 6;

  /// Stage i (0-based) runs at level i + 2; the stem is level 1.
  int deepest_stage_level() const { return static_cast<int>(stage_widths.size()) + 1; }
  int num_levels() const { return max_level - min_level + 1; }
  /// Sides of a full-range input must be multiples of this.
  std::int64_t size_multiple() const;
  void validate() const;
};

/// Feature maps keyed by level label. `strides` are expressed in the frame of
/// the full-resolution input; label s of a pyramid with `level_shift` m
/// spatially matches level s + m of the full-resolution pyramid.
struct FeaturePyramid {
  std::map<int, Tensor> levels;
  std::map<int, int> strides;
  int channels = 0;
  int level_shift = 0;

  std::vector<int> labels() const;
  /// Level label in the full-resolution frame.
  int reference_level(int label) const { return label + level_shift; }
  const Tensor& at(int label) const;
};

/// Conv stages plus FPN. One instance owns one parameter set; every pyramid
/// it produces (full-size or shifted) is computed from those same tensors.
class Backbone {
 public:
  Backbone(BackboneConfig cfg, std::mt19937_64& rng);

  const BackboneConfig& config() const { return cfg_; }
  const ParamList& parameters() const { return params_; }

  /// Levels [lo, hi] of `image`, strides in this image's own frame.
  FeaturePyramid pyramid(const Tensor& image, int lo, int hi) const;

  /// All configured levels.
  FeaturePyramid forward_pyramid(const Tensor& image) const;

  /// Levels min_level..max_level-m of a k-times smaller image, relabelled so
  /// label s matches level s+m of the full-size pyramid; strides are in the
  /// full-size frame.
  FeaturePyramid aligned_pyramid(const Tensor& image_low, const ResolutionSpec& spec) const;

 private:
  struct ConvParam {
    Tensor w, b;
    int stride = 1;
    int padding = 0;
  };
  ConvParam make_conv(const std::string& name, int in, int out, int kernel, int stride,
                      std::mt19937_64& rng);
  static Tensor apply(const ConvParam& c, const Tensor& x);
  std::int64_t required_multiple(int hi) const;

  BackboneConfig cfg_;
  ParamList params_;
  ConvParam stem_;
  std::vector<std::vector<ConvParam>> stages_;
  std::map<int, ConvParam> lateral_;
  std::map<int, ConvParam> output_;
  std::map<int, ConvParam> extra_;
};

// Image helpers. Images are [N,C,H,W] and these functions never record a graph.

/// Bilinear resample (half-pixel centres, edge clamped) to round(H*factor) x
/// round(W*factor).
Tensor rescale_image(const Tensor& image, double factor);

/// Bilinear resample to exactly out_h x out_w.
Tensor resize_image(const Tensor& image, std::int64_t out_h, std::int64_t out_w);

/// Resample by `factor`, then zero-pad bottom/right so both sides become
/// multiples of `multiple`. Throws InputSizeError if a resampled side is
/// smaller than `multiple`.
Tensor rescale_image(const Tensor& image, double factor, std::int64_t multiple);

/// Zero-pads bottom/right up to the next multiple.
Tensor pad_to_multiple(const Tensor& image, std::int64_t multiple);

/// Exact k-fold reduction by k x k box averaging. Throws if k does not divide
/// both sides.
Tensor downsample_image(const Tensor& image, int k);

}  // namespace lrd
