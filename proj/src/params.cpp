#include "charparse/params.hpp"

#include <cmath>

namespace charparse {

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Shape shape) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  auto p = std::make_unique<Parameter<T>>();
  p->name = name;
  p->value = Tensor<T>(shape);
  p->grad = Tensor<T>(shape);
  index_.emplace(std::move(name), params_.size());
  params_.push_back(std::move(p));
  return *params_.back();
}

template <typename T>
Parameter<T>* ParameterStore<T>::find(std::string_view name) {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename T>
const Parameter<T>* ParameterStore<T>::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  return it == index_.end() ? nullptr : params_[it->second].get();
}

template <typename T>
Parameter<T>& ParameterStore<T>::get(std::string_view name) {
  auto* p = find(name);
  if (!p) throw std::out_of_range("unknown parameter: " + std::string(name));
  return *p;
}

template <typename T>
std::size_t ParameterStore<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p->grad.fill(T(0));
}

template <typename T>
std::vector<Tensor<T>> ParameterStore<T>::snapshot() const {
  std::vector<Tensor<T>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p->value);
  return out;
}

template <typename T>
void ParameterStore<T>::restore(const std::vector<Tensor<T>>& values) {
  if (values.size() != params_.size()) throw std::invalid_argument("restore: parameter count mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i]->value.shape()) {
      throw ShapeError("restore: shape mismatch for " + params_[i]->name);
    }
    params_[i]->value = values[i];
  }
}

template <typename T>
void init_uniform(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
void init_normal(Tensor<T>& t, double stddev, Rng& rng) {
  for (auto& v : t.values()) v = static_cast<T>(rng.normal(0.0, stddev));
}

template <typename T>
void init_xavier(Tensor<T>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  init_uniform(t, std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)), rng);
}

template class ParameterStore<float>;
template class ParameterStore<double>;
template void init_uniform<float>(Tensor<float>&, double, Rng&);
template void init_uniform<double>(Tensor<double>&, double, Rng&);
template void init_normal<float>(Tensor<float>&, double, Rng&);
template void init_normal<double>(Tensor<double>&, double, Rng&);
template void init_xavier<float>(Tensor<float>&, std::size_t, std::size_t, Rng&);
template void init_xavier<double>(Tensor<double>&, std::size_t, std::size_t, Rng&);

}  // namespace charparse
