#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "lrd/tensor/tensor.hpp"

namespace lrd {

/// Max over elements of |analytic - central difference| / max(1, |analytic|, |numeric|)
/// for the gradient of scalar f at x.
double finite_diff_gradcheck(const std::function<Tensor64(const Tensor64&)>& f, const Tensor64& x,
                             double eps = 1e-6);

/// Uniform samples in [lo, hi], redrawing any value with |v| < min_abs so
/// that piecewise ops are probed away from their kinks.
Tensor64 random_tensor64(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                         double min_abs = 0.0);

/// A named check; run(seed) returns the max relative error for that seed.
struct GradcheckCase {
  std::string name;
  std::function<double(std::uint64_t seed)> run;
};

struct GradcheckOutcome {
  std::string name;
  double max_relative_error = 0.0;
  int seeds = 0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckOutcome> outcomes;
  double seconds = 0.0;
  bool all_passed() const;
  std::vector<std::string> failures() const;
};

GradcheckReport run_gradcheck(const std::vector<GradcheckCase>& cases, int seeds, double tolerance);

}  // namespace lrd
