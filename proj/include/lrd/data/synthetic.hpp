#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lrd/model/head.hpp"
#include "lrd/tensor/tensor.hpp"

namespace lrd {

/// Side length s of a class's objects is uniform in [min_side, max_side];
/// the box is s*sqrt(a) wide and s/sqrt(a) tall with aspect a uniform in
/// [aspect_min, 1/aspect_min], so E[area] = E[s^2].
struct ClassSizeSpec {
  double min_side = 6.0;
  double max_side = 40.0;
};

enum class ShapeKind { FilledRect = 0, FilledEllipse = 1, StripedRect = 2 };

struct SyntheticSceneSpec {
  int image_size = 128;
  int num_classes = 3;
  int min_objects = 1;
  int max_objects = 6;
  std::vector<ClassSizeSpec> class_sizes{{6.0, 40.0}, {6.0, 40.0}, {8.0, 40.0}};
  double aspect_min = 0.75;
  double noise = 0.06;
  int stripe_period_min = 3;
  int stripe_period_max = 4;
  std::uint64_t seed = 7;
  /// Position draws per object before the whole layout is redrawn, and
  /// layout redraws before the spec is declared infeasible.
  int placement_attempts = 100;
  int layout_attempts = 50;

  void validate() const;
  double expected_area(int class_id) const;
};

/// Image stored as 8-bit RGB planes [3,S,S] in row-major order.
struct DetectionSample {
  std::uint64_t id = 0;
  int size = 0;
  std::vector<std::uint8_t> pixels;
  std::vector<Box> boxes;

  std::uint64_t checksum() const;
};

using Dataset = std::vector<DetectionSample>;

class InfeasibleSceneError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Sample `index` of the stream seeded by spec.seed. Each sample derives its
/// own RNG from (seed, index), so samples can be produced independently.
DetectionSample generate_sample(const SyntheticSceneSpec& spec, std::uint64_t index);

/// Samples [first, first + count).
Dataset generate_dataset(const SyntheticSceneSpec& spec, int count, std::uint64_t first = 0);

/// Stacks samples into a normalised [N,3,S,S] batch, (x/255 - 0.5) / 0.25.
Tensor batch_images(const Dataset& data, std::span<const std::size_t> indices);

/// Writes images/<id>.ppm and annotations.json under `dir`.
void export_dataset(const Dataset& data, const SyntheticSceneSpec& spec, const std::filesystem::path& dir);

std::string class_name(int class_id);

}  // namespace lrd
