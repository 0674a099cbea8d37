#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "charparse/params.hpp"

namespace charparse {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Linear warmup length in steps; 0 disables warmup.
  std::size_t warmup_steps = 0;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
};

/// Per-parameter learning rate; returning 0 leaves a parameter untouched.
using LearningRateFn = std::function<double(const std::string& name)>;

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::vector<double> lr;
  std::size_t t = 0;
};

/// Zero moments for every parameter currently in the store.
template <typename T>
AdamState<T> make_adam_state(const ParameterStore<T>& params, const AdamConfig& config,
                             const LearningRateFn& lr_for = {});

/// One bias-corrected Adam update over the store, then zeroes gradients.
/// Throws if the state was built for a different parameter set.
template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state);

template <typename T>
double gradient_norm(const ParameterStore<T>& params);

}  // namespace charparse
