#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "charparse/autodiff.hpp"

namespace charparse {

struct GradCheckOptions {
  double eps = 1e-6;
  /// Coordinates sampled per parameter (all of them when the parameter is
  /// smaller).
  std::size_t coords_per_param = 24;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates = 0;
  /// The same ratio over every coordinate, resolution ignored.
  double max_raw_error = 0.0;
  /// Coordinates with raw error >= 1e-5 whose disagreement was within the
  /// finite-difference resolution.
  std::size_t below_resolution = 0;
};

using LossFn = std::function<Var<double>(Tape<double>&)>;

/// Compares reverse-mode gradients of `loss` against central differences
/// for the parameters in `params`. The relative error of one coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8). Absolute
/// disagreements under 16 ulp(|loss|) / (2 eps), the smallest slope a
/// central difference can resolve, count as zero error. Runs in f64 with
/// the tape in eval mode (no dropout).
GradCheckResult grad_check(const LossFn& loss, ParameterStore<double>& params,
                           const GradCheckOptions& options = {});

}  // namespace charparse
