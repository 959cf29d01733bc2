#pragma once

#include <vector>

#include "lrd/tensor/gradcheck.hpp"

namespace lrd {

/// Finite-difference checks for every differentiable op, the detection loss,
/// the feature-matching loss and each fusion variant, all at 64-bit.
std::vector<GradcheckCase> gradcheck_suite();

/// A "conv2d" case whose backward rule is deliberately wrong; the harness
/// must report it as failed.
GradcheckCase broken_conv_case();

inline constexpr int kGradcheckSeeds = 10;
inline constexpr double kGradcheckTolerance = 1e-3;

}  // namespace lrd
