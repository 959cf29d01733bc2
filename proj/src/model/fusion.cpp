#include "lrd/model/fusion.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "lrd/tensor/ops.hpp"

namespace lrd {

std::string to_string(FusionVariant v) {
  switch (v) {
    case FusionVariant::CFF: return "cff";
    case FusionVariant::SC_SUM: return "sc_sum";
    case FusionVariant::CC: return "cc";
    case FusionVariant::SIGMOID: return "sigmoid";
    case FusionVariant::CHANNELWISE: return "channelwise";
  }
  return "?";
}

FusionVariant parse_fusion_variant(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  std::replace(s.begin(), s.end(), '-', '_');
  for (auto v : {FusionVariant::CFF, FusionVariant::SC_SUM, FusionVariant::CC, FusionVariant::SIGMOID,
                 FusionVariant::CHANNELWISE}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown fusion variant '" + name +
                              "' (expected cff, sc_sum, cc, sigmoid or channelwise)");
}

void FusionConfig::validate(int channels) const {
  if (compression_ratio < 1) throw std::invalid_argument("fusion.compression_ratio must be >= 1");
  if ((2 * channels) / compression_ratio < 1) {
    throw std::invalid_argument("fusion.compression_ratio leaves an empty hidden layer");
  }
}

FusionLevelParams make_fusion_params(FusionVariant variant, int channels, int compression_ratio,
                                     std::mt19937_64& rng) {
  FusionLevelParams p;
  const int c2 = 2 * channels;
  switch (variant) {
    case FusionVariant::CFF:
    case FusionVariant::SIGMOID:
    case FusionVariant::CHANNELWISE: {
      const int hidden = c2 / compression_ratio;
      const int out = variant == FusionVariant::CHANNELWISE ? c2 : 2;
      p.fc1_w = kaiming_uniform({hidden, c2}, c2, rng);
      p.fc1_b = constant_param({hidden}, 0.0f);
      p.fc2_w = constant_param({out, hidden}, 0.0f);
      p.fc2_b = constant_param({out}, 0.0f);
      break;
    }
    case FusionVariant::SC_SUM:
      p.conv_high_w = kaiming_uniform({channels, channels, 3, 3}, std::int64_t{channels} * 9, rng);
      p.conv_high_b = constant_param({channels}, 0.0f);
      p.conv_low_w = kaiming_uniform({channels, channels, 3, 3}, std::int64_t{channels} * 9, rng);
      p.conv_low_b = constant_param({channels}, 0.0f);
      break;
    case FusionVariant::CC:
      p.conv_cat_w = kaiming_uniform({channels, c2, 3, 3}, std::int64_t{c2} * 9, rng);
      p.conv_cat_b = constant_param({channels}, 0.0f);
      break;
  }
  return p;
}

namespace {

template <typename T>
BasicTensor<T> gate_logits(const BasicTensor<T>& high, const BasicTensor<T>& low,
                           const BasicFusionLevelParams<T>& p) {
  BasicTensor<T> pooled = global_average_pool(concat_channels<T>({high, low}));
  return linear(relu(linear(pooled, p.fc1_w, p.fc1_b)), p.fc2_w, p.fc2_b);
}

}  // namespace

template <typename T>
BasicFusionOutput<T> fusion_variant_forward(FusionVariant variant, const BasicTensor<T>& high,
                                            const BasicTensor<T>& low,
                                            const BasicFusionLevelParams<T>& params) {
  if (high.shape() != low.shape() || high.rank() != 4) {
    throw AlignmentError("fusion inputs are not aligned: " + shape_str(high.shape()) + " vs " +
                         shape_str(low.shape()) + " (check the resolution spec)");
  }
  const std::int64_t n = high.dim(0), c = high.dim(1);
  BasicFusionOutput<T> out;
  switch (variant) {
    case FusionVariant::CFF:
      out.weights = softmax(gate_logits(high, low, params), -1);
      out.fused = convex_mix(high, low, reshape(slice_channels(out.weights, 0, 1), {n}));
      break;
    case FusionVariant::SIGMOID:
      out.weights = sigmoid(gate_logits(high, low, params));
      out.fused = add(broadcast_mul(high, reshape(slice_channels(out.weights, 0, 1), {n})),
                      broadcast_mul(low, reshape(slice_channels(out.weights, 1, 1), {n})));
      break;
    case FusionVariant::CHANNELWISE:
      out.weights = softmax(reshape(gate_logits(high, low, params), {n, 2, c}), 1);
      out.fused = convex_mix(high, low, reshape(slice_channels(out.weights, 0, 1), {n, c}));
      break;
    case FusionVariant::SC_SUM:
      out.fused = add(conv2d(high, params.conv_high_w, params.conv_high_b, 1, 1),
                      conv2d(low, params.conv_low_w, params.conv_low_b, 1, 1));
      break;
    case FusionVariant::CC:
      out.fused = conv2d(concat_channels<T>({high, low}), params.conv_cat_w, params.conv_cat_b, 1, 1);
      break;
  }
  return out;
}

template BasicFusionOutput<float> fusion_variant_forward(FusionVariant, const Tensor&, const Tensor&,
                                                         const FusionLevelParams&);
template BasicFusionOutput<double> fusion_variant_forward(FusionVariant, const Tensor64&, const Tensor64&,
                                                          const BasicFusionLevelParams<double>&);

FusionOutput cff_forward(const Tensor& high, const Tensor& low, const FusionLevelParams& params) {
  return fusion_variant_forward(FusionVariant::CFF, high, low, params);
}

FusionModule::FusionModule(FusionConfig cfg, int channels, const std::vector<int>& levels,
                           std::mt19937_64& rng)
    : cfg_(cfg), levels_(levels) {
  cfg_.validate(channels);
  std::sort(levels_.begin(), levels_.end());
  for (int s : levels_) {
    FusionLevelParams p = make_fusion_params(cfg_.variant, channels, cfg_.compression_ratio, rng);
    const std::string base = "fusion.level" + std::to_string(s);
    auto push = [&](const char* name, const Tensor& t) {
      if (t.defined()) params_.push_back({base + "." + name, t});
    };
    push("fc1.w", p.fc1_w);
    push("fc1.b", p.fc1_b);
    push("fc2.w", p.fc2_w);
    push("fc2.b", p.fc2_b);
    push("conv_high.w", p.conv_high_w);
    push("conv_high.b", p.conv_high_b);
    push("conv_low.w", p.conv_low_w);
    push("conv_low.b", p.conv_low_b);
    push("conv_cat.w", p.conv_cat_w);
    push("conv_cat.b", p.conv_cat_b);
    per_level_[s] = std::move(p);
  }
}

FusedPyramid FusionModule::fuse_pyramids(const FeaturePyramid& high, const FeaturePyramid& low_aligned) const {
  const int m = low_aligned.level_shift - high.level_shift;
  std::set<int> high_levels, low_levels, own(levels_.begin(), levels_.end());
  for (const auto& [s, _] : high.levels) high_levels.insert(s);
  for (const auto& [s, _] : low_aligned.levels) low_levels.insert(s + m);
  std::vector<int> orphans;
  for (int s : high_levels)
    if (!low_levels.count(s) || !own.count(s)) orphans.push_back(s);
  for (int s : low_levels)
    if (!high_levels.count(s)) orphans.push_back(s);
  for (int s : own)
    if (!high_levels.count(s)) orphans.push_back(s);
  if (!orphans.empty()) {
    std::sort(orphans.begin(), orphans.end());
    orphans.erase(std::unique(orphans.begin(), orphans.end()), orphans.end());
    std::string list;
    for (int s : orphans) list += (list.empty() ? "" : ",") + std::to_string(s);
    throw AlignmentError("fusion levels without a partner (full-resolution labels): " + list);
  }
  FusedPyramid out;
  out.pyramid.channels = high.channels;
  out.pyramid.level_shift = high.level_shift;
  for (const auto& [s, feat] : high.levels) {
    FusionOutput f = fusion_variant_forward(cfg_.variant, feat, low_aligned.at(s - m), per_level_.at(s));
    out.pyramid.levels[s] = f.fused;
    out.pyramid.strides[s] = high.strides.at(s);
    if (f.weights.defined()) out.weights[s] = f.weights;
  }
  return out;
}

}  // namespace lrd
