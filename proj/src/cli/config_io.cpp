#include "lrd/cli/config_io.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace lrd {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "<root>" : path_, "expected an object");
  }

  ~Section() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [key, value] : j_.items()) {
      if (!seen_.count(key)) fail(join(key), "unknown key");
    }
  }

  void get(const char* key, int& out) { read(key, out, "an integer", [](const json& v) { return v.is_number_integer(); }); }
  void get(const char* key, std::uint64_t& out) {
    read(key, out, "a non-negative integer", [](const json& v) { return v.is_number_unsigned(); });
  }
  void get(const char* key, double& out) { read(key, out, "a number", [](const json& v) { return v.is_number(); }); }
  void get(const char* key, bool& out) { read(key, out, "a boolean", [](const json& v) { return v.is_boolean(); }); }
  void get(const char* key, std::string& out) {
    read(key, out, "a string", [](const json& v) { return v.is_string(); });
  }
  void get(const char* key, std::vector<int>& out) {
    read(key, out, "an array of integers", [](const json& v) {
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number_integer(); });
    });
  }
  void get(const char* key, std::vector<double>& out) {
    read(key, out, "an array of numbers", [](const json& v) {
      return v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
    });
  }

  /// String-valued enum with its own parser.
  template <typename E, typename Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string s;
    if (!j_.contains(key)) {
      seen_.insert(key);
      return;
    }
    get(key, s);
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      fail(join(key), e.what());
    }
  }

  void section(const char* key, const std::function<void(Section&)>& body) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Section child(j_.at(key), join(key));
    body(child);
  }

  const json* raw(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError(path + ": " + what);
  }

 private:
  template <typename T, typename Check>
  void read(const char* key, T& out, const char* expected, Check check) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!check(v)) fail(join(key), std::string("expected ") + expected + ", got " + v.dump());
    out = v.get<T>();
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

json config_to_json(const ExperimentConfig& c) {
  json sizes = json::array();
  for (const auto& s : c.data.scene.class_sizes) sizes.push_back({{"min_side", s.min_side}, {"max_side", s.max_side}});
  const auto& sc = c.data.scene;
  return json{
      {"seed", c.seed},
      {"k", c.k},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"log_interval", c.log_interval},
      {"out_dir", c.out_dir},
      {"backbone",
       {{"stem_width", c.backbone.stem_width},
        {"stage_widths", c.backbone.stage_widths},
        {"pyramid_channels", c.backbone.pyramid_channels},
        {"min_level", c.backbone.min_level},
        {"max_level", c.backbone.max_level}}},
      {"head",
       {{"num_classes", c.head.num_classes},
        {"tower_depth", c.head.tower_depth},
        {"scale_bounds", c.head.scale_bounds},
        {"focal_alpha", c.head.focal_alpha},
        {"focal_gamma", c.head.focal_gamma},
        {"prior_prob", c.head.prior_prob},
        {"score_threshold", c.head.score_threshold},
        {"nms_iou", c.head.nms_iou},
        {"pre_nms_top_k", c.head.pre_nms_top_k},
        {"max_detections", c.head.max_detections}}},
      {"fusion", {{"variant", to_string(c.fusion.variant)}, {"compression_ratio", c.fusion.compression_ratio}}},
      {"jitter", {{"alpha_min", c.jitter.alpha_min}, {"alpha_max", c.jitter.alpha_max}}},
      {"loss",
       {{"lambda", c.loss.lambda},
        {"gamma", c.loss.gamma},
        {"tau", c.loss.tau},
        {"kd_reduction", to_string(c.loss.kd_reduction)}}},
      {"optim",
       {{"lr", c.optim.lr},
        {"momentum", c.optim.momentum},
        {"weight_decay", c.optim.weight_decay},
        {"milestones", c.optim.milestones},
        {"decay", c.optim.decay},
        {"warmup_steps", c.optim.warmup_steps},
        {"warmup_factor", c.optim.warmup_factor},
        {"grad_clip_norm", c.optim.grad_clip_norm}}},
      {"teacher",
       {{"mode", to_string(c.teacher.mode)},
        {"strategy", to_string(c.teacher.strategy)},
        {"fusion", c.teacher.fusion},
        {"fusion_epochs", c.teacher.fusion_epochs}}},
      {"student", {{"epochs", c.student.epochs}, {"kd", c.student.kd}}},
      {"data",
       {{"train_images", c.data.train_images},
        {"val_images", c.data.val_images},
        {"scene",
         {{"image_size", sc.image_size},
          {"num_classes", sc.num_classes},
          {"min_objects", sc.min_objects},
          {"max_objects", sc.max_objects},
          {"class_sizes", sizes},
          {"aspect_min", sc.aspect_min},
          {"noise", sc.noise},
          {"stripe_period_min", sc.stripe_period_min},
          {"stripe_period_max", sc.stripe_period_max},
          {"seed", sc.seed},
          {"placement_attempts", sc.placement_attempts},
          {"layout_attempts", sc.layout_attempts}}}}},
  };
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("k", c.k);
  root.get("epochs", c.epochs);
  root.get("batch_size", c.batch_size);
  root.get("log_interval", c.log_interval);
  root.get("out_dir", c.out_dir);
  root.section("backbone", [&](Section& s) {
    s.get("stem_width", c.backbone.stem_width);
    s.get("stage_widths", c.backbone.stage_widths);
    s.get("pyramid_channels", c.backbone.pyramid_channels);
    s.get("min_level", c.backbone.min_level);
    s.get("max_level", c.backbone.max_level);
  });
  root.section("head", [&](Section& s) {
    s.get("num_classes", c.head.num_classes);
    s.get("tower_depth", c.head.tower_depth);
    s.get("scale_bounds", c.head.scale_bounds);
    s.get("focal_alpha", c.head.focal_alpha);
    s.get("focal_gamma", c.head.focal_gamma);
    s.get("prior_prob", c.head.prior_prob);
    s.get("score_threshold", c.head.score_threshold);
    s.get("nms_iou", c.head.nms_iou);
    s.get("pre_nms_top_k", c.head.pre_nms_top_k);
    s.get("max_detections", c.head.max_detections);
  });
  root.section("fusion", [&](Section& s) {
    s.get_enum("variant", c.fusion.variant, parse_fusion_variant);
    s.get("compression_ratio", c.fusion.compression_ratio);
  });
  root.section("jitter", [&](Section& s) {
    s.get("alpha_min", c.jitter.alpha_min);
    s.get("alpha_max", c.jitter.alpha_max);
  });
  root.section("loss", [&](Section& s) {
    s.get("lambda", c.loss.lambda);
    s.get("gamma", c.loss.gamma);
    s.get("tau", c.loss.tau);
    s.get_enum("kd_reduction", c.loss.kd_reduction, parse_kd_reduction);
  });
  root.section("optim", [&](Section& s) {
    s.get("lr", c.optim.lr);
    s.get("momentum", c.optim.momentum);
    s.get("weight_decay", c.optim.weight_decay);
    s.get("milestones", c.optim.milestones);
    s.get("decay", c.optim.decay);
    s.get("warmup_steps", c.optim.warmup_steps);
    s.get("warmup_factor", c.optim.warmup_factor);
    s.get("grad_clip_norm", c.optim.grad_clip_norm);
  });
  root.section("teacher", [&](Section& s) {
    s.get_enum("mode", c.teacher.mode, parse_teacher_mode);
    s.get_enum("strategy", c.teacher.strategy, parse_fusion_strategy);
    s.get("fusion", c.teacher.fusion);
    s.get("fusion_epochs", c.teacher.fusion_epochs);
  });
  root.section("student", [&](Section& s) {
    s.get("epochs", c.student.epochs);
    s.get("kd", c.student.kd);
  });
  root.section("data", [&](Section& s) {
    s.get("train_images", c.data.train_images);
    s.get("val_images", c.data.val_images);
    s.section("scene", [&](Section& t) {
      auto& sc = c.data.scene;
      t.get("image_size", sc.image_size);
      t.get("num_classes", sc.num_classes);
      t.get("min_objects", sc.min_objects);
      t.get("max_objects", sc.max_objects);
      if (const json* sizes = t.raw("class_sizes")) {
        if (!sizes->is_array()) Section::fail(t.join("class_sizes"), "expected an array");
        sc.class_sizes.clear();
        for (std::size_t i = 0; i < sizes->size(); ++i) {
          ClassSizeSpec cs;
          Section e((*sizes)[i], t.join("class_sizes") + "[" + std::to_string(i) + "]");
          e.get("min_side", cs.min_side);
          e.get("max_side", cs.max_side);
          sc.class_sizes.push_back(cs);
        }
      }
      t.get("aspect_min", sc.aspect_min);
      t.get("noise", sc.noise);
      t.get("stripe_period_min", sc.stripe_period_min);
      t.get("stripe_period_max", sc.stripe_period_max);
      t.get("seed", sc.seed);
      t.get("placement_attempts", sc.placement_attempts);
      t.get("layout_attempts", sc.layout_attempts);
    });
  });
  return c;
}

std::string config_to_text(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

ExperimentConfig config_from_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("<root>: not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = config_from_text(ss.str());
  cfg.validate();
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << config_to_text(cfg);
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace lrd
