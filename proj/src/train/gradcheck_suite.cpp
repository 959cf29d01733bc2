#include "lrd/train/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "lrd/model/fusion.hpp"
#include "lrd/model/head.hpp"
#include "lrd/tensor/ops.hpp"
#include "lrd/train/steps.hpp"

namespace lrd {

namespace {

using Inputs = std::vector<Tensor64>;
using Fn = std::function<Tensor64(const Inputs&)>;

// Reduces a non-scalar output with fixed random weights so that permuted or
// misplaced gradient entries are caught, not just their sum.
Fn probed(const Fn& fn, const Inputs& inputs, std::mt19937_64& rng) {
  Tensor64 out;
  {
    NoGradGuard guard;
    out = fn(inputs);
  }
  if (out.numel() == 1 && out.rank() == 0) return fn;
  auto weights = std::make_shared<Tensor64>(random_tensor64(out.shape(), rng, 0.5, 1.5));
  return [fn, weights](const Inputs& in) { return sum(mul(fn(in), *weights)); };
}

// Worst relative error over the gradients with respect to inputs `wrt`
// (all inputs when empty).
double check(const Fn& fn, const Inputs& inputs, std::mt19937_64& rng, std::vector<std::size_t> wrt = {}) {
  if (wrt.empty()) {
    for (std::size_t i = 0; i < inputs.size(); ++i) wrt.push_back(i);
  }
  const Fn f = probed(fn, inputs, rng);
  double worst = 0.0;
  for (std::size_t i : wrt) {
    auto one = [&](const Tensor64& x) {
      Inputs in = inputs;
      in[i] = x;
      return f(in);
    };
    worst = std::max(worst, finite_diff_gradcheck(one, inputs[i]));
  }
  return worst;
}

Tensor64 rnd(const Shape& s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0, double min_abs = 0.0) {
  return random_tensor64(s, rng, lo, hi, min_abs);
}

using Case = std::function<double(std::mt19937_64&)>;

GradcheckCase make_case(std::string name, Case body) {
  return GradcheckCase{name, [body](std::uint64_t seed) {
                         std::mt19937_64 rng(seed * 7919 + 17);
                         return body(rng);
                       }};
}

std::vector<Box> random_boxes(std::mt19937_64& rng, int count, double side, int classes) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cls(0, classes - 1);
  std::vector<Box> out;
  for (int i = 0; i < count; ++i) {
    const double w = 4.0 + u(rng) * (side / 2), h = 4.0 + u(rng) * (side / 2);
    Box b;
    b.x0 = static_cast<float>(u(rng) * (side - w));
    b.y0 = static_cast<float>(u(rng) * (side - h));
    b.x1 = static_cast<float>(b.x0 + w);
    b.y1 = static_cast<float>(b.y0 + h);
    b.class_id = cls(rng);
    out.push_back(b);
  }
  return out;
}

double detection_case(std::mt19937_64& rng) {
  HeadConfig cfg;
  cfg.num_classes = 3;
  cfg.scale_bounds = {12.0};
  std::vector<LevelGeometry> levels;
  const int strides[] = {8, 16};
  for (int i = 0; i < 2; ++i) {
    const auto [lo, hi] = cfg.scale_range(i);
    levels.push_back(LevelGeometry{3 + i, 32 / strides[i], 32 / strides[i], strides[i], lo, hi});
  }
  std::vector<ImageTargets> targets;
  HeadOutputs<double> base;
  const int n = 2;
  for (int img = 0; img < n; ++img) targets.push_back(assign_targets(random_boxes(rng, 3, 32, 3), levels));
  for (const auto& g : levels) {
    LevelOutputs<double> o;
    o.cls = rnd({n, 3, g.height, g.width}, rng, -2, 1);
    o.reg = rnd({n, 4, g.height, g.width}, rng, -0.5, 1);
    o.ctr = rnd({n, 1, g.height, g.width}, rng);
    o.label = g.label;
    o.stride = g.stride;
    base.push_back(o);
  }
  Inputs inputs;
  for (const auto& o : base) {
    inputs.push_back(o.cls);
    inputs.push_back(o.reg);
    inputs.push_back(o.ctr);
  }
  auto fn = [&, base](const Inputs& in) {
    auto outs = base;
    for (std::size_t l = 0; l < outs.size(); ++l) {
      outs[l].cls = in[3 * l];
      outs[l].reg = in[3 * l + 1];
      outs[l].ctr = in[3 * l + 2];
    }
    return detection_loss<double>(outs, targets, cfg).total;
  };
  return check(fn, inputs, rng);
}

BasicFusionLevelParams<double> to_double(const FusionLevelParams& p, std::mt19937_64& rng) {
  auto cast = [](const Tensor& t) { return t.defined() ? t.cast<double>() : Tensor64(); };
  BasicFusionLevelParams<double> d;
  d.fc1_w = cast(p.fc1_w);
  d.fc1_b = cast(p.fc1_b);
  // The output layer starts at zero; randomise it so its gradient path is exercised.
  d.fc2_w = p.fc2_w.defined() ? rnd(p.fc2_w.shape(), rng) : Tensor64();
  d.fc2_b = p.fc2_b.defined() ? rnd(p.fc2_b.shape(), rng) : Tensor64();
  d.conv_high_w = cast(p.conv_high_w);
  d.conv_high_b = cast(p.conv_high_b);
  d.conv_low_w = cast(p.conv_low_w);
  d.conv_low_b = cast(p.conv_low_b);
  d.conv_cat_w = cast(p.conv_cat_w);
  d.conv_cat_b = cast(p.conv_cat_b);
  return d;
}

double fusion_case(FusionVariant v, std::mt19937_64& rng) {
  const int c = 4;
  const FusionLevelParams fp = make_fusion_params(v, c, 2, rng);
  const auto base = to_double(fp, rng);
  Inputs inputs{rnd({2, c, 3, 3}, rng), rnd({2, c, 3, 3}, rng)};
  std::vector<Tensor64 BasicFusionLevelParams<double>::*> fields;
  if (base.fc1_w.defined()) fields = {&BasicFusionLevelParams<double>::fc1_w, &BasicFusionLevelParams<double>::fc1_b,
                                      &BasicFusionLevelParams<double>::fc2_w, &BasicFusionLevelParams<double>::fc2_b};
  if (base.conv_high_w.defined()) fields = {&BasicFusionLevelParams<double>::conv_high_w,
                                            &BasicFusionLevelParams<double>::conv_low_w};
  if (base.conv_cat_w.defined()) fields = {&BasicFusionLevelParams<double>::conv_cat_w,
                                           &BasicFusionLevelParams<double>::conv_cat_b};
  for (auto f : fields) inputs.push_back(base.*f);
  auto fn = [=](const Inputs& in) {
    auto p = base;
    for (std::size_t i = 0; i < fields.size(); ++i) p.*fields[i] = in[2 + i];
    return fusion_variant_forward<double>(v, in[0], in[1], p).fused;
  };
  return check(fn, inputs, rng);
}

}  // namespace

std::vector<GradcheckCase> gradcheck_suite() {
  std::vector<GradcheckCase> s;
  const Shape sh{2, 3, 4};
  s.push_back(make_case("add", [=](auto& rng) {
    return check([](const Inputs& x) { return add(x[0], x[1]); }, {rnd(sh, rng), rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("sub", [=](auto& rng) {
    return check([](const Inputs& x) { return sub(x[0], x[1]); }, {rnd(sh, rng), rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("mul", [=](auto& rng) {
    return check([](const Inputs& x) { return mul(x[0], x[1]); }, {rnd(sh, rng), rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("scale", [=](auto& rng) {
    return check([](const Inputs& x) { return scale(x[0], -1.7); }, {rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("add_scalar", [=](auto& rng) {
    return check([](const Inputs& x) { return add_scalar(x[0], 0.3); }, {rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("broadcast_mul", [](auto& rng) {
    return check([](const Inputs& x) { return broadcast_mul(x[0], x[1]); }, {rnd({2, 3, 2, 2}, rng), rnd({2, 3}, rng)},
                 rng);
  }));
  s.push_back(make_case("convex_mix", [](auto& rng) {
    return check([](const Inputs& x) { return convex_mix(x[0], x[1], x[2]); },
                 {rnd({2, 3, 2, 2}, rng), rnd({2, 3, 2, 2}, rng), rnd({2}, rng, 0.05, 0.95)}, rng);
  }));
  s.push_back(make_case("relu", [=](auto& rng) {
    return check([](const Inputs& x) { return relu(x[0]); }, {rnd(sh, rng, -1, 1, 0.05)}, rng);
  }));
  s.push_back(make_case("sigmoid", [=](auto& rng) {
    return check([](const Inputs& x) { return sigmoid(x[0]); }, {rnd(sh, rng, -3, 3)}, rng);
  }));
  s.push_back(make_case("exp", [=](auto& rng) {
    return check([](const Inputs& x) { return exp(x[0]); }, {rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("log", [=](auto& rng) {
    return check([](const Inputs& x) { return log(x[0]); }, {rnd(sh, rng, 0.5, 2.0)}, rng);
  }));
  s.push_back(make_case("abs", [=](auto& rng) {
    return check([](const Inputs& x) { return abs(x[0]); }, {rnd(sh, rng, -1, 1, 0.05)}, rng);
  }));
  s.push_back(make_case("sum", [=](auto& rng) {
    return check([](const Inputs& x) { return sum(x[0]); }, {rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("mean", [=](auto& rng) {
    return check([](const Inputs& x) { return mean(x[0]); }, {rnd(sh, rng)}, rng);
  }));
  s.push_back(make_case("softmax", [=](auto& rng) {
    return std::max(check([](const Inputs& x) { return softmax(x[0], 1); }, {rnd(sh, rng, -2, 2)}, rng),
                    check([](const Inputs& x) { return softmax(x[0]); }, {rnd(sh, rng, -2, 2)}, rng));
  }));
  s.push_back(make_case("linear", [](auto& rng) {
    return check([](const Inputs& x) { return linear(x[0], x[1], x[2]); },
                 {rnd({3, 5}, rng), rnd({4, 5}, rng), rnd({4}, rng)}, rng);
  }));
  s.push_back(make_case("conv2d", [](auto& rng) {
    const double a = check([](const Inputs& x) { return conv2d(x[0], x[1], x[2], 1, 1); },
                           {rnd({2, 3, 5, 5}, rng), rnd({4, 3, 3, 3}, rng), rnd({4}, rng)}, rng);
    const double b = check([](const Inputs& x) { return conv2d(x[0], x[1], Tensor64(), 2, 0); },
                           {rnd({1, 2, 6, 6}, rng), rnd({3, 2, 3, 3}, rng)}, rng);
    return std::max(a, b);
  }));
  s.push_back(make_case("max_pool2d", [](auto& rng) {
    return check([](const Inputs& x) { return max_pool2d(x[0], 2, 2); }, {rnd({2, 2, 4, 4}, rng)}, rng);
  }));
  s.push_back(make_case("global_average_pool", [](auto& rng) {
    return check([](const Inputs& x) { return global_average_pool(x[0]); }, {rnd({2, 3, 3, 2}, rng)}, rng);
  }));
  s.push_back(make_case("upsample_nearest_2x", [](auto& rng) {
    return check([](const Inputs& x) { return upsample_nearest_2x(x[0]); }, {rnd({2, 2, 3, 2}, rng)}, rng);
  }));
  s.push_back(make_case("reshape", [](auto& rng) {
    return check([](const Inputs& x) { return reshape(x[0], {4, 6}); }, {rnd({2, 3, 4}, rng)}, rng);
  }));
  s.push_back(make_case("concat_channels", [](auto& rng) {
    return check([](const Inputs& x) { return concat_channels(std::vector<Tensor64>{x[0], x[1]}); },
                 {rnd({2, 2, 2, 2}, rng), rnd({2, 3, 2, 2}, rng)}, rng);
  }));
  s.push_back(make_case("slice_channels", [](auto& rng) {
    return check([](const Inputs& x) { return slice_channels(x[0], 1, 2); }, {rnd({2, 4, 2, 2}, rng)}, rng);
  }));
  s.push_back(make_case("to_rows", [](auto& rng) {
    return check([](const Inputs& x) { return to_rows(x[0]); }, {rnd({2, 3, 2, 2}, rng)}, rng);
  }));
  s.push_back(make_case("concat_rows", [](auto& rng) {
    return check([](const Inputs& x) { return concat_rows(std::vector<Tensor64>{x[0], x[1]}); },
                 {rnd({2, 3}, rng), rnd({4, 3}, rng)}, rng);
  }));
  s.push_back(make_case("gather_rows", [](auto& rng) {
    static const std::int64_t rows[] = {2, 0, 2, 3};
    return check([](const Inputs& x) { return gather_rows(x[0], std::span<const std::int64_t>(rows)); },
                 {rnd({4, 3}, rng)}, rng);
  }));
  s.push_back(make_case("sigmoid_focal_loss", [](auto& rng) {
    std::uniform_int_distribution<int> label(-1, 2);
    auto labels = std::make_shared<std::vector<int>>();
    for (int i = 0; i < 6; ++i) labels->push_back(label(rng));
    return check([labels](const Inputs& x) { return sigmoid_focal_loss(x[0], std::span<const int>(*labels), 0.25, 2.0); },
                 {rnd({6, 3}, rng, -3, 3)}, rng);
  }));
  s.push_back(make_case("bce_with_logits", [](auto& rng) {
    auto t = std::make_shared<Tensor64>(rnd({7}, rng, 0.0, 1.0));
    return check([t](const Inputs& x) { return bce_with_logits(x[0], t->data()); }, {rnd({7}, rng, -3, 3)}, rng);
  }));
  s.push_back(make_case("iou_loss", [](auto& rng) {
    auto t = std::make_shared<Tensor64>(rnd({5, 4}, rng, 0.5, 3.0));
    return check([t](const Inputs& x) { return iou_loss(x[0], t->data()); }, {rnd({5, 4}, rng, 0.5, 3.0)}, rng);
  }));
  s.push_back(make_case("detection_loss", [](auto& rng) { return detection_case(rng); }));
  s.push_back(make_case("feature_matching_loss", [](auto& rng) {
    // Student = teacher + offsets bounded away from zero so |.| is smooth.
    Inputs teacher{rnd({2, 3, 4, 4}, rng), rnd({2, 3, 2, 2}, rng)};
    Inputs student{add(teacher[0], rnd({2, 3, 4, 4}, rng, -1, 1, 0.05)),
                   add(teacher[1], rnd({2, 3, 2, 2}, rng, -1, 1, 0.05))};
    double worst = 0.0;
    for (KdReduction r : {KdReduction::Mean, KdReduction::Sum}) {
      worst = std::max(worst, check([teacher, r](const Inputs& x) {
                         return feature_matching_loss<double>(teacher, x, 3.0, r);
                       },
                                    student, rng));
    }
    return worst;
  }));
  for (FusionVariant v : {FusionVariant::CFF, FusionVariant::SC_SUM, FusionVariant::CC, FusionVariant::SIGMOID,
                          FusionVariant::CHANNELWISE}) {
    s.push_back(make_case("fusion_" + to_string(v), [v](auto& rng) { return fusion_case(v, rng); }));
  }
  return s;
}

GradcheckCase broken_conv_case() {
  return make_case("conv2d", [](auto& rng) {
    auto broken = [](const Inputs& x) {
      Tensor64 ref;
      {
        NoGradGuard guard;
        ref = conv2d(x[0], x[1], Tensor64(), 1, 1);
      }
      const Shape shape = ref.shape();
      std::vector<double> values(ref.data().begin(), ref.data().end());
      // Wrong rule: the input receives nothing and every weight gets the
      // plain sum of the output gradient.
      return Tensor64::from_op(shape, std::move(values), {x[0], x[1]}, "conv2d",
                               [](std::span<const double>, std::span<const double> g,
                                  std::span<const std::span<double>> in) {
                                 double total = 0.0;
                                 for (double v : g) total += v;
                                 for (double& w : in[1]) w += total;
                               });
    };
    return check(broken, {rnd({1, 2, 4, 4}, rng), rnd({2, 2, 3, 3}, rng)}, rng);
  });
}

}  // namespace lrd
