#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "lrd/model/params.hpp"
#include "lrd/model/pyramid.hpp"

namespace lrd {

enum class FusionVariant { CFF, SC_SUM, CC, SIGMOID, CHANNELWISE };

std::string to_string(FusionVariant v);
/// Accepts "cff", "sc_sum", "cc", "sigmoid", "channelwise" (case-insensitive).
FusionVariant parse_fusion_variant(const std::string& name);

struct FusionConfig {
  FusionVariant variant = FusionVariant::CFF;
  int compression_ratio = 4;
  void validate(int channels) const;
};

/// Parameters for one fused level. Gated variants use the two-layer MLP
/// (2C -> 2C/r -> 2, or 2C for CHANNELWISE); SC_SUM uses one 3x3 conv per
/// input; CC uses one 3x3 conv on the concatenation.
template <typename T>
struct BasicFusionLevelParams {
  BasicTensor<T> fc1_w, fc1_b, fc2_w, fc2_b;
  BasicTensor<T> conv_high_w, conv_high_b, conv_low_w, conv_low_b;
  BasicTensor<T> conv_cat_w, conv_cat_b;
};

using FusionLevelParams = BasicFusionLevelParams<float>;

FusionLevelParams make_fusion_params(FusionVariant variant, int channels, int compression_ratio,
                                     std::mt19937_64& rng);

template <typename T>
struct BasicFusionOutput {
  BasicTensor<T> fused;
  /// [N,2] for CFF and SIGMOID, [N,2,C] for CHANNELWISE, undefined otherwise.
  /// Index 0 weighs the high-resolution input.
  BasicTensor<T> weights;
};

using FusionOutput = BasicFusionOutput<float>;

template <typename T>
BasicFusionOutput<T> fusion_variant_forward(FusionVariant variant, const BasicTensor<T>& high,
                                            const BasicTensor<T>& low,
                                            const BasicFusionLevelParams<T>& params);

/// Softmax-gated fusion: weights = softmax(MLP(GAP(concat(high, low)))),
/// fused = w0 * high + w1 * low.
FusionOutput cff_forward(const Tensor& high, const Tensor& low, const FusionLevelParams& params);

struct FusedPyramid {
  FeaturePyramid pyramid;
  std::map<int, Tensor> weights;
};

/// One independent parameter set per fused level.
class FusionModule {
 public:
  FusionModule(FusionConfig cfg, int channels, const std::vector<int>& levels, std::mt19937_64& rng);

  const FusionConfig& config() const { return cfg_; }
  const ParamList& parameters() const { return params_; }
  const std::vector<int>& levels() const { return levels_; }
  const FusionLevelParams& level_params(int level) const { return per_level_.at(level); }

  /// Fuses every high level s with aligned low level s - m. Output keeps the
  /// high labels and strides. Throws listing orphan levels when the two sets do
  /// not pair up one-to-one.
  FusedPyramid fuse_pyramids(const FeaturePyramid& high, const FeaturePyramid& low_aligned) const;

 private:
  FusionConfig cfg_;
  std::vector<int> levels_;
  std::map<int, FusionLevelParams> per_level_;
  ParamList params_;
};

}  // namespace lrd
