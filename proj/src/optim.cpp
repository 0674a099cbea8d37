#include "charparse/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace charparse {

template <typename T>
AdamState<T> make_adam_state(const ParameterStore<T>& params, const AdamConfig& config,
                             const LearningRateFn& lr_for) {
  AdamState<T> s;
  s.config = config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m.emplace_back(params[i].value.shape());
    s.v.emplace_back(params[i].value.shape());
    s.lr.push_back(lr_for ? lr_for(params[i].name) : config.lr);
  }
  return s;
}

template <typename T>
double gradient_norm(const ParameterStore<T>& params) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (T g : params[i].grad.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return std::sqrt(sq);
}

template <typename T>
void adam_step(ParameterStore<T>& params, AdamState<T>& state) {
  if (state.m.size() != params.size() || state.lr.size() != params.size()) {
    throw std::logic_error("adam_step: optimizer state not initialized for this parameter set");
  }
  const AdamConfig& c = state.config;
  ++state.t;
  const double t = static_cast<double>(state.t);
  double warm = 1.0;
  if (c.warmup_steps > 0) warm = std::min(1.0, t / static_cast<double>(c.warmup_steps));
  double clip = 1.0;
  if (c.clip_norm > 0.0) {
    const double norm = gradient_norm(params);
    if (norm > c.clip_norm) clip = c.clip_norm / norm;
  }
  const double bc1 = 1.0 - std::pow(c.beta1, t);
  const double bc2 = 1.0 - std::pow(c.beta2, t);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = params[i];
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape()) {
      throw std::logic_error("adam_step: state shape mismatch for " + p.name);
    }
    const double lr = state.lr[i] * warm;
    if (lr != 0.0) {
      T* m = state.m[i].data();
      T* v = state.v[i].data();
      T* w = p.value.data();
      const T* g = p.grad.data();
      const T step = static_cast<T>(lr / bc1);
      const T inv_bc2 = static_cast<T>(1.0 / bc2);
      const T eps = static_cast<T>(c.eps);
      const T cl = static_cast<T>(clip);
      for (std::size_t j = 0; j < p.value.size(); ++j) {
        const T gj = g[j] * cl;
        m[j] = b1 * m[j] + (T(1) - b1) * gj;
        v[j] = b2 * v[j] + (T(1) - b2) * gj * gj;
        w[j] -= step * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
      }
    }
    p.grad.fill(T(0));
  }
}

template AdamState<float> make_adam_state<float>(const ParameterStore<float>&, const AdamConfig&, const LearningRateFn&);
template AdamState<double> make_adam_state<double>(const ParameterStore<double>&, const AdamConfig&, const LearningRateFn&);
template void adam_step<float>(ParameterStore<float>&, AdamState<float>&);
template void adam_step<double>(ParameterStore<double>&, AdamState<double>&);
template double gradient_norm<float>(const ParameterStore<float>&);
template double gradient_norm<double>(const ParameterStore<double>&);

}  // namespace charparse
