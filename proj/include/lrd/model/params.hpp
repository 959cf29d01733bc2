#pragma once

#include <random>
#include <string>
#include <vector>

#include "lrd/tensor/tensor.hpp"

namespace lrd {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedTensor>;

/// He/Kaiming uniform with fan-in scaling: U(-b, b), b = sqrt(6 / fan_in).
Tensor kaiming_uniform(const Shape& shape, std::int64_t fan_in, std::mt19937_64& rng);

/// Trainable leaf with N(0, stddev^2) entries.
Tensor normal_param(const Shape& shape, double stddev, std::mt19937_64& rng);

/// Trainable leaf initialised to a constant.
Tensor constant_param(const Shape& shape, float value);

void set_trainable(const ParamList& params, bool on);
void zero_grads(const ParamList& params);
void clear_grads(const ParamList& params);

/// Copies values (not handles) from `src` into same-named tensors of `dst`.
/// Throws if a name is missing or shapes differ.
void copy_values(const ParamList& src, const ParamList& dst);

/// Fresh leaves with copied values and the same trainable flags.
ParamList clone_params(const ParamList& params);

bool values_equal(const ParamList& a, const ParamList& b);

}  // namespace lrd
