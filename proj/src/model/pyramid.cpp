#include "lrd/model/pyramid.hpp"

#include <algorithm>
#include <cmath>

#include "lrd/tensor/ops.hpp"

namespace lrd {

namespace {

bool is_power_of_two(int k) { return k >= 1 && (k & (k - 1)) == 0; }

void require_image(const Tensor& image, const char* what) {
  if (!image.defined() || image.rank() != 4) {
    throw ShapeError(std::string(what) + ": expected an [N,C,H,W] image");
  }
}

}  // namespace

int shift_offset(int k) {
  if (k < 2 || !is_power_of_two(k)) {
    throw std::invalid_argument("reduction factor k=" + std::to_string(k) +
                                " must be a power of two >= 2 for pyramid levels to align");
  }
  int m = 0;
  while ((1 << m) < k) ++m;
  return m;
}

ResolutionSpec ResolutionSpec::make(int high_h, int high_w, int k) {
  ResolutionSpec s;
  s.m = shift_offset(k);
  if (high_h <= 0 || high_w <= 0 || high_h % k != 0 || high_w % k != 0) {
    throw std::invalid_argument("high-resolution size " + std::to_string(high_h) + "x" +
                                std::to_string(high_w) + " is not divisible by k=" +
                                std::to_string(k));
  }
  s.high_h = high_h;
  s.high_w = high_w;
  s.low_h = high_h / k;
  s.low_w = high_w / k;
  s.k = k;
  return s;
}

std::int64_t BackboneConfig::size_multiple() const {
  return std::int64_t{1} << std::max(max_level, deepest_stage_level());
}

void BackboneConfig::validate() const {
  if (stem_width <= 0) throw std::invalid_argument("backbone.stem_width must be positive");
  if (stage_widths.empty()) throw std::invalid_argument("backbone.stage_widths must be non-empty");
  for (int w : stage_widths)
    if (w <= 0) throw std::invalid_argument("backbone.stage_widths entries must be positive");
  if (pyramid_channels <= 0) throw std::invalid_argument("backbone.pyramid_channels must be positive");
  if (min_level < 2) throw std::invalid_argument("backbone.min_level must be >= 2");
  if (min_level > deepest_stage_level()) {
    throw std::invalid_argument("backbone.min_level must be <= " +
                                std::to_string(deepest_stage_level()) + " (deepest stage)");
  }
  if (max_level < min_level) throw std::invalid_argument("backbone.max_level must be >= min_level");
  if (max_level > 12) throw std::invalid_argument("backbone.max_level must be <= 12");
}

std::vector<int> FeaturePyramid::labels() const {
  std::vector<int> out;
  for (const auto& [s, _] : levels) out.push_back(s);
  return out;
}

const Tensor& FeaturePyramid::at(int label) const {
  auto it = levels.find(label);
  if (it == levels.end()) throw std::out_of_range("pyramid has no level " + std::to_string(label));
  return it->second;
}

Backbone::ConvParam Backbone::make_conv(const std::string& name, int in, int out, int kernel,
                                        int stride, std::mt19937_64& rng) {
  ConvParam c;
  c.w = kaiming_uniform({out, in, kernel, kernel}, std::int64_t{in} * kernel * kernel, rng);
  c.b = constant_param({out}, 0.0f);
  c.stride = stride;
  c.padding = kernel / 2;
  params_.push_back({name + ".w", c.w});
  params_.push_back({name + ".b", c.b});
  return c;
}

Tensor Backbone::apply(const ConvParam& c, const Tensor& x) {
  return conv2d(x, c.w, c.b, c.stride, c.padding);
}

Backbone::Backbone(BackboneConfig cfg, std::mt19937_64& rng) : cfg_(std::move(cfg)) {
  cfg_.validate();
  stem_ = make_conv("backbone.stem", 3, cfg_.stem_width, 3, 2, rng);
  int in = cfg_.stem_width;
  for (std::size_t i = 0; i < cfg_.stage_widths.size(); ++i) {
    const int w = cfg_.stage_widths[i];
    const std::string base = "backbone.stage" + std::to_string(i + 1);
    std::vector<ConvParam> stage;
    stage.push_back(make_conv(base + ".conv1", in, w, 3, 2, rng));
    stage.push_back(make_conv(base + ".conv2", w, w, 3, 1, rng));
    stages_.push_back(std::move(stage));
    in = w;
  }
  const int c = cfg_.pyramid_channels;
  const int deepest = cfg_.deepest_stage_level();
  for (int l = cfg_.min_level; l <= deepest; ++l) {
    const int width = cfg_.stage_widths[static_cast<std::size_t>(l - 2)];
    lateral_[l] = make_conv("backbone.fpn.lateral" + std::to_string(l), width, c, 1, 1, rng);
  }
  for (int l = cfg_.min_level; l <= std::min(cfg_.max_level, deepest); ++l)
    output_[l] = make_conv("backbone.fpn.output" + std::to_string(l), c, c, 3, 1, rng);
  for (int l = deepest + 1; l <= cfg_.max_level; ++l)
    extra_[l] = make_conv("backbone.fpn.extra" + std::to_string(l), c, c, 3, 2, rng);
}

std::int64_t Backbone::required_multiple(int hi) const {
  return std::int64_t{1} << std::max(hi, cfg_.deepest_stage_level());
}

FeaturePyramid Backbone::pyramid(const Tensor& image, int lo, int hi) const {
  require_image(image, "pyramid");
  if (image.dim(1) != 3) throw ShapeError("pyramid: expected 3 input channels");
  if (lo < cfg_.min_level || hi > cfg_.max_level || lo > hi) {
    throw std::invalid_argument("pyramid: level range [" + std::to_string(lo) + "," +
                                std::to_string(hi) + "] outside configured [" +
                                std::to_string(cfg_.min_level) + "," +
                                std::to_string(cfg_.max_level) + "]");
  }
  const std::int64_t mult = required_multiple(hi);
  if (image.dim(2) % mult != 0 || image.dim(3) % mult != 0) {
    throw InputSizeError("input " + std::to_string(image.dim(2)) + "x" +
                         std::to_string(image.dim(3)) + ": sides must be multiples of " +
                         std::to_string(mult));
  }
  const int deepest = cfg_.deepest_stage_level();

  std::map<int, Tensor> stage_out;
  Tensor x = relu(apply(stem_, image));
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    for (const auto& conv : stages_[i]) x = relu(apply(conv, x));
    stage_out[static_cast<int>(i) + 2] = x;
  }

  const int inner_lo = std::min(lo, deepest);
  std::map<int, Tensor> inner;
  inner[deepest] = apply(lateral_.at(deepest), stage_out[deepest]);
  for (int l = deepest - 1; l >= inner_lo; --l)
    inner[l] = add(apply(lateral_.at(l), stage_out[l]), upsample_nearest_2x(inner[l + 1]));

  FeaturePyramid out;
  out.channels = cfg_.pyramid_channels;
  std::map<int, Tensor> p;
  for (int l = inner_lo; l <= std::min(hi, deepest); ++l) p[l] = apply(output_.at(l), inner[l]);
  if (hi > deepest) {
    if (!p.count(deepest)) p[deepest] = apply(output_.at(deepest), inner[deepest]);
    for (int l = deepest + 1; l <= hi; ++l) {
      Tensor src = l == deepest + 1 ? p[deepest] : relu(p[l - 1]);
      p[l] = apply(extra_.at(l), src);
    }
  }
  for (int l = lo; l <= hi; ++l) {
    out.levels[l] = p.at(l);
    out.strides[l] = 1 << l;
  }
  return out;
}

FeaturePyramid Backbone::forward_pyramid(const Tensor& image) const {
  return pyramid(image, cfg_.min_level, cfg_.max_level);
}

FeaturePyramid Backbone::aligned_pyramid(const Tensor& image_low, const ResolutionSpec& spec) const {
  if (spec.m < 0) throw std::invalid_argument("aligned_pyramid: negative level shift");
  const int hi = cfg_.max_level - spec.m;
  const int lo = cfg_.min_level;
  if (hi - lo + 1 < kMinAlignedLevels) {
    throw std::invalid_argument("level shift m=" + std::to_string(spec.m) + " leaves " +
                                std::to_string(std::max(0, hi - lo + 1)) +
                                " aligned levels; at least " + std::to_string(kMinAlignedLevels) +
                                " are required (raise backbone.max_level or lower k)");
  }
  FeaturePyramid out = pyramid(image_low, lo, hi);
  out.level_shift = spec.m;
  for (auto& [s, stride] : out.strides) stride = 1 << (s + spec.m);
  return out;
}

Tensor rescale_image(const Tensor& image, double factor) {
  require_image(image, "rescale_image");
  if (!(factor > 0.0)) throw std::invalid_argument("rescale_image: factor must be positive");
  const std::int64_t h = image.dim(2), w = image.dim(3);
  const std::int64_t oh = std::max<std::int64_t>(1, std::llround(static_cast<double>(h) * factor));
  const std::int64_t ow = std::max<std::int64_t>(1, std::llround(static_cast<double>(w) * factor));
  return resize_image(image, oh, ow);
}

Tensor resize_image(const Tensor& image, std::int64_t oh, std::int64_t ow) {
  require_image(image, "resize_image");
  if (oh < 1 || ow < 1) throw InputSizeError("resize_image: output sides must be positive");
  const std::int64_t n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  if (oh == h && ow == w) return image.detach();

  const double ry = static_cast<double>(h) / static_cast<double>(oh);
  const double rx = static_cast<double>(w) / static_cast<double>(ow);
  std::vector<std::int64_t> x0(ow), x1(ow);
  std::vector<double> wx(ow);
  for (std::int64_t x = 0; x < ow; ++x) {
    const double sx = std::clamp((static_cast<double>(x) + 0.5) * rx - 0.5, 0.0, double(w - 1));
    x0[x] = static_cast<std::int64_t>(std::floor(sx));
    x1[x] = std::min(x0[x] + 1, w - 1);
    wx[x] = sx - static_cast<double>(x0[x]);
  }
  const auto src = image.data();
  std::vector<float> out(static_cast<std::size_t>(n * c * oh * ow));
  for (std::int64_t p = 0; p < n * c; ++p) {
    const float* plane = src.data() + p * h * w;
    float* dst = out.data() + p * oh * ow;
    for (std::int64_t y = 0; y < oh; ++y) {
      const double sy = std::clamp((static_cast<double>(y) + 0.5) * ry - 0.5, 0.0, double(h - 1));
      const auto y0 = static_cast<std::int64_t>(std::floor(sy));
      const auto y1 = std::min(y0 + 1, h - 1);
      const double wy = sy - static_cast<double>(y0);
      for (std::int64_t x = 0; x < ow; ++x) {
        const double top = plane[y0 * w + x0[x]] * (1.0 - wx[x]) + plane[y0 * w + x1[x]] * wx[x];
        const double bot = plane[y1 * w + x0[x]] * (1.0 - wx[x]) + plane[y1 * w + x1[x]] * wx[x];
        dst[y * ow + x] = static_cast<float>(top * (1.0 - wy) + bot * wy);
      }
    }
  }
  return Tensor({n, c, oh, ow}, std::move(out));
}

Tensor pad_to_multiple(const Tensor& image, std::int64_t multiple) {
  require_image(image, "pad_to_multiple");
  if (multiple < 1) throw std::invalid_argument("pad_to_multiple: multiple must be >= 1");
  const std::int64_t n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  const std::int64_t ph = (h + multiple - 1) / multiple * multiple;
  const std::int64_t pw = (w + multiple - 1) / multiple * multiple;
  if (ph == h && pw == w) return image.detach();
  const auto src = image.data();
  std::vector<float> out(static_cast<std::size_t>(n * c * ph * pw), 0.0f);
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t y = 0; y < h; ++y)
      std::copy_n(src.data() + (p * h + y) * w, w, out.data() + (p * ph + y) * pw);
  return Tensor({n, c, ph, pw}, std::move(out));
}

Tensor rescale_image(const Tensor& image, double factor, std::int64_t multiple) {
  Tensor scaled = rescale_image(image, factor);
  if (scaled.dim(2) < multiple || scaled.dim(3) < multiple) {
    throw InputSizeError("rescaled size " + std::to_string(scaled.dim(2)) + "x" +
                         std::to_string(scaled.dim(3)) + " is below the minimum side " +
                         std::to_string(multiple));
  }
  return pad_to_multiple(scaled, multiple);
}

Tensor downsample_image(const Tensor& image, int k) {
  require_image(image, "downsample_image");
  const std::int64_t n = image.dim(0), c = image.dim(1), h = image.dim(2), w = image.dim(3);
  if (k < 1 || h % k != 0 || w % k != 0) {
    throw InputSizeError("downsample_image: k=" + std::to_string(k) + " does not divide " +
                         std::to_string(h) + "x" + std::to_string(w));
  }
  if (k == 1) return image.detach();
  const std::int64_t oh = h / k, ow = w / k;
  const auto src = image.data();
  std::vector<float> out(static_cast<std::size_t>(n * c * oh * ow));
  const double inv = 1.0 / (k * k);
  for (std::int64_t p = 0; p < n * c; ++p)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int dy = 0; dy < k; ++dy)
          for (int dx = 0; dx < k; ++dx) acc += src[(p * h + y * k + dy) * w + x * k + dx];
        out[(p * oh + y) * ow + x] = static_cast<float>(acc * inv);
      }
  return Tensor({n, c, oh, ow}, std::move(out));
}

}  // namespace lrd
