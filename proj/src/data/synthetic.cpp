#include "lrd/data/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include <json.hpp>

namespace lrd {

void SyntheticSceneSpec::validate() const {
  if (image_size < 16) throw std::invalid_argument("data.image_size must be >= 16");
  if (num_classes < 1 || num_classes > 3) throw std::invalid_argument("data.num_classes must be in [1,3]");
  if (static_cast<int>(class_sizes.size()) != num_classes) {
    throw std::invalid_argument("data.class_sizes must have one entry per class");
  }
  if (min_objects < 0 || max_objects < min_objects) {
    throw std::invalid_argument("data.min_objects/max_objects must satisfy 0 <= min <= max");
  }
  if (!(aspect_min > 0.0 && aspect_min <= 1.0)) throw std::invalid_argument("data.aspect_min must be in (0,1]");
  for (const auto& c : class_sizes) {
    if (!(c.min_side > 0 && c.max_side >= c.min_side)) {
      throw std::invalid_argument("data.class_sizes entries need 0 < min_side <= max_side");
    }
    if (c.min_side * std::sqrt(aspect_min) < 4.0) {
      throw std::invalid_argument("data.class_sizes: min_side * sqrt(aspect_min) must be >= 4 px");
    }
    if (c.max_side / std::sqrt(aspect_min) > image_size) {
      throw std::invalid_argument("data.class_sizes: objects may exceed the image");
    }
  }
  if (!(noise >= 0.0 && noise <= 0.5)) throw std::invalid_argument("data.noise must be in [0,0.5]");
  if (stripe_period_min < 2 || stripe_period_max < stripe_period_min) {
    throw std::invalid_argument("data.stripe_period range must satisfy 2 <= min <= max");
  }
  if (placement_attempts < 1 || layout_attempts < 1) {
    throw std::invalid_argument("data.placement_attempts/layout_attempts must be >= 1");
  }
}

double SyntheticSceneSpec::expected_area(int class_id) const {
  const auto& c = class_sizes.at(static_cast<std::size_t>(class_id));
  const double a = c.min_side, b = c.max_side;
  return (a * a + a * b + b * b) / 3.0;
}

std::uint64_t DetectionSample::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* p, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  mix(pixels.data(), pixels.size());
  for (const Box& b : boxes) {
    const float v[4] = {b.x0, b.y0, b.x1, b.y1};
    mix(v, sizeof v);
    mix(&b.class_id, sizeof b.class_id);
  }
  return h;
}

std::string class_name(int class_id) {
  switch (class_id) {
    case 0: return "rectangle";
    case 1: return "ellipse";
    case 2: return "stripes";
  }
  return "class" + std::to_string(class_id);
}

namespace {

struct Rgb {
  double c[3];
};

bool overlaps(const Box& a, const Box& b) {
  // One pixel of clearance so shapes never touch.
  return a.x0 < b.x1 + 1 && b.x0 < a.x1 + 1 && a.y0 < b.y1 + 1 && b.y0 < a.y1 + 1;
}

std::vector<Box> layout(const SyntheticSceneSpec& spec, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count_dist(spec.min_objects, spec.max_objects);
  std::uniform_int_distribution<int> class_dist(0, spec.num_classes - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int count = count_dist(rng);
  std::vector<std::pair<int, std::pair<double, double>>> wanted;
  for (int i = 0; i < count; ++i) {
    const int cls = class_dist(rng);
    const auto& cs = spec.class_sizes[static_cast<std::size_t>(cls)];
    const double side = cs.min_side + (cs.max_side - cs.min_side) * unit(rng);
    const double lo = spec.aspect_min, hi = 1.0 / spec.aspect_min;
    const double aspect = lo + (hi - lo) * unit(rng);
    wanted.push_back({cls, {side * std::sqrt(aspect), side / std::sqrt(aspect)}});
  }
  const double s = spec.image_size;
  for (int attempt = 0; attempt < spec.layout_attempts; ++attempt) {
    std::vector<Box> boxes;
    bool ok = true;
    for (const auto& [cls, wh] : wanted) {
      const auto [w, h] = wh;
      bool placed = false;
      for (int p = 0; p < spec.placement_attempts && !placed; ++p) {
        Box b;
        b.x0 = static_cast<float>(unit(rng) * (s - w));
        b.y0 = static_cast<float>(unit(rng) * (s - h));
        b.x1 = static_cast<float>(b.x0 + w);
        b.y1 = static_cast<float>(b.y0 + h);
        b.class_id = cls;
        if (b.x1 > s || b.y1 > s) continue;
        if (std::none_of(boxes.begin(), boxes.end(), [&](const Box& o) { return overlaps(o, b); })) {
          boxes.push_back(b);
          placed = true;
        }
      }
      if (!placed) {
        ok = false;
        break;
      }
    }
    if (ok) return boxes;
  }
  throw InfeasibleSceneError("could not place " + std::to_string(count) + " objects in a " +
                             std::to_string(spec.image_size) + "px image after " +
                             std::to_string(spec.layout_attempts) + " layouts");
}

Rgb contrasting_color(const Rgb& bg, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (;;) {
    Rgb c{{unit(rng), unit(rng), unit(rng)}};
    const double diff = (std::abs(c.c[0] - bg.c[0]) + std::abs(c.c[1] - bg.c[1]) + std::abs(c.c[2] - bg.c[2])) / 3;
    if (diff >= 0.25) return c;
  }
}

}  // namespace

DetectionSample generate_sample(const SyntheticSceneSpec& spec, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  DetectionSample out;
  out.id = index;
  out.size = spec.image_size;
  out.boxes = layout(spec, rng);

  const int s = spec.image_size;
  const std::size_t plane = static_cast<std::size_t>(s) * s;
  std::vector<double> img(3 * plane);
  const Rgb bg{{0.3 + 0.4 * unit(rng), 0.3 + 0.4 * unit(rng), 0.3 + 0.4 * unit(rng)}};
  for (int ch = 0; ch < 3; ++ch) std::fill_n(img.begin() + static_cast<std::ptrdiff_t>(ch * plane), plane, bg.c[ch]);

  for (const Box& b : out.boxes) {
    const Rgb color = contrasting_color(bg, rng);
    const auto kind = static_cast<ShapeKind>(b.class_id % 3);
    std::uniform_int_distribution<int> period_dist(spec.stripe_period_min, spec.stripe_period_max);
    const int period = period_dist(rng);
    const bool vertical = unit(rng) < 0.5;
    const double cx = (b.x0 + b.x1) / 2.0, cy = (b.y0 + b.y1) / 2.0;
    const double rx = b.width() / 2.0, ry = b.height() / 2.0;
    const int px0 = static_cast<int>(std::floor(b.x0)), py0 = static_cast<int>(std::floor(b.y0));
    for (int y = py0; y < std::min(s, static_cast<int>(std::ceil(b.y1)) + 1); ++y) {
      for (int x = px0; x < std::min(s, static_cast<int>(std::ceil(b.x1)) + 1); ++x) {
        const double fx = x + 0.5, fy = y + 0.5;
        if (fx <= b.x0 || fx >= b.x1 || fy <= b.y0 || fy >= b.y1) continue;
        double shade = 1.0;
        if (kind == ShapeKind::FilledEllipse) {
          const double dx = (fx - cx) / rx, dy = (fy - cy) / ry;
          if (dx * dx + dy * dy > 1.0) continue;
        } else if (kind == ShapeKind::StripedRect) {
          const int along = vertical ? x - px0 : y - py0;
          if (2 * (along % period) >= period) shade = 0.2;
        }
        for (int ch = 0; ch < 3; ++ch) img[ch * plane + static_cast<std::size_t>(y * s + x)] = color.c[ch] * shade;
      }
    }
  }

  out.pixels.resize(3 * plane);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img[i] + spec.noise * (2.0 * unit(rng) - 1.0), 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

Dataset generate_dataset(const SyntheticSceneSpec& spec, int count, std::uint64_t first) {
  spec.validate();
  Dataset out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(generate_sample(spec, first + static_cast<std::uint64_t>(i)));
  return out;
}

Tensor batch_images(const Dataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("batch_images: empty batch");
  const int s = data.at(indices[0]).size;
  const std::size_t per = 3 * static_cast<std::size_t>(s) * s;
  std::vector<float> v(indices.size() * per);
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& sample = data.at(indices[b]);
    if (sample.size != s) throw ShapeError("batch_images: mixed image sizes");
    for (std::size_t i = 0; i < per; ++i) v[b * per + i] = (sample.pixels[i] / 255.0f - 0.5f) / 0.25f;
  }
  return Tensor({static_cast<std::int64_t>(indices.size()), 3, s, s}, std::move(v));
}

void export_dataset(const Dataset& data, const SyntheticSceneSpec& spec, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "images");
  nlohmann::json doc;
  doc["image_size"] = spec.image_size;
  doc["classes"] = nlohmann::json::array();
  for (int c = 0; c < spec.num_classes; ++c) doc["classes"].push_back({{"id", c}, {"name", class_name(c)}});
  doc["images"] = nlohmann::json::array();
  for (const auto& sample : data) {
    char name[32];
    std::snprintf(name, sizeof name, "%06llu.ppm", static_cast<unsigned long long>(sample.id));
    const fs::path file = dir / "images" / name;
    std::ofstream os(file, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + file.string());
    os << "P6\n" << sample.size << ' ' << sample.size << "\n255\n";
    const std::size_t plane = static_cast<std::size_t>(sample.size) * sample.size;
    std::vector<char> interleaved(3 * plane);
    for (std::size_t i = 0; i < plane; ++i)
      for (int ch = 0; ch < 3; ++ch) interleaved[i * 3 + ch] = static_cast<char>(sample.pixels[ch * plane + i]);
    os.write(interleaved.data(), static_cast<std::streamsize>(interleaved.size()));
    if (!os) throw std::runtime_error("cannot write " + file.string());

    nlohmann::json entry;
    entry["id"] = sample.id;
    entry["file"] = std::string("images/") + name;
    entry["width"] = sample.size;
    entry["height"] = sample.size;
    entry["boxes"] = nlohmann::json::array();
    entry["classes"] = nlohmann::json::array();
    for (const Box& b : sample.boxes) {
      entry["boxes"].push_back({b.x0, b.y0, b.x1, b.y1});
      entry["classes"].push_back(b.class_id);
    }
    doc["images"].push_back(std::move(entry));
  }
  std::ofstream os(dir / "annotations.json");
  if (!os) throw std::runtime_error("cannot write " + (dir / "annotations.json").string());
  os << doc.dump(1) << '\n';
}

}  // namespace lrd
