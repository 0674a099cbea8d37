#include "charparse/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace charparse {

namespace {

double evaluate(const LossFn& loss) {
  Tape<double> tape(false);
  const double v = loss(tape).value().item();
  if (!std::isfinite(v)) throw std::runtime_error("grad_check: non-finite loss");
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossFn& loss, ParameterStore<double>& params,
                           const GradCheckOptions& options) {
  if (!(options.eps >= 1e-7 && options.eps <= 1e-4)) {
    throw std::invalid_argument("grad_check: eps must be in [1e-7, 1e-4]");
  }
  params.zero_grad();
  {
    Tape<double> tape(false);
    Var<double> l = loss(tape);
    if (!std::isfinite(l.value().item())) throw std::runtime_error("grad_check: non-finite loss");
    tape.backward(l);
  }
  Rng rng(options.seed);
  GradCheckResult result;
  const double base = std::abs(evaluate(loss));
  // Differences below a few ulps of the loss are rounding noise, not signal.
  const double resolution = 16.0 * std::numeric_limits<double>::epsilon() * std::max(base, 1.0) / (2.0 * options.eps);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter<double>& p = params[pi];
    const Tensor<double> analytic = p.grad;
    std::vector<std::size_t> coords(p.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (coords.size() > options.coords_per_param) {
      rng.shuffle(coords);
      coords.resize(options.coords_per_param);
    }
    for (std::size_t c : coords) {
      const double orig = p.value[c];
      p.value[c] = orig + options.eps;
      const double up = evaluate(loss);
      p.value[c] = orig - options.eps;
      const double down = evaluate(loss);
      p.value[c] = orig;
      const double numeric = (up - down) / (2.0 * options.eps);
      const double a = analytic[c];
      const double diff = std::abs(a - numeric);
      const double raw = diff / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++result.coordinates;
      result.max_raw_error = std::max(result.max_raw_error, raw);
      if (diff <= resolution) {
        if (raw >= 1e-5) ++result.below_resolution;
        continue;
      }
      const double err = raw;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_parameter = p.name + "[" + std::to_string(c) + "]";
      }
    }
  }
  params.zero_grad();
  return result;
}

}  // namespace charparse
