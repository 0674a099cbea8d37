#pragma once

#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charparse/rng.hpp"
#include "charparse/tensor.hpp"

namespace charparse {

/// Named trainable tensor with its gradient slot.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Owns a model's parameters in registration order. Addresses are stable,
/// so components keep plain pointers to their parameters.
template <typename T>
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  /// Registers a zero-initialized parameter. Names must be unique.
  Parameter<T>& add(std::string name, Shape shape);

  Parameter<T>* find(std::string_view name);
  const Parameter<T>* find(std::string_view name) const;
  Parameter<T>& get(std::string_view name);

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }
  std::size_t element_count() const;

  void zero_grad();

  /// Copies of all parameter values, in registration order.
  std::vector<Tensor<T>> snapshot() const;
  void restore(const std::vector<Tensor<T>>& values);

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng);
template <typename T>
void init_normal(Tensor<T>& t, double stddev, Rng& rng);
/// Glorot-uniform for a [fan_in x fan_out] matrix.
template <typename T>
void init_xavier(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace charparse
