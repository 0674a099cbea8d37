#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "charparse/params.hpp"
#include "charparse/rng.hpp"
#include "charparse/tensor.hpp"

namespace charparse {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, which is a
/// topological order; backward() visits them once, last to first. One tape
/// serves one forward/backward pass and is owned by a single thread.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool training = false, std::uint64_t seed = 0);
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Differentiable input whose gradient can be read back with grad().
  Var<T> leaf(Tensor<T> value);
  /// Parameter reference. Trainable parameters accumulate their gradient
  /// directly into Parameter::grad; non-trainable ones behave as constants.
  Var<T> param(Parameter<T>& p, bool trainable = true);

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward);

  void backward(Var<T> loss);

  const Tensor<T>& value(std::size_t id) const;
  /// Gradient of a node after backward(); zeros when nothing reached it.
  Tensor<T> grad(std::size_t id) const;
  /// Writable gradient buffer, allocated on first use; nullptr for nodes
  /// that do not require a gradient.
  Tensor<T>* grad_slot(std::size_t id);
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

  bool training() const { return training_; }
  Rng& rng() { return rng_; }
  std::size_t size() const { return nodes_.size(); }

  /// When enabled, every recorded op with finite inputs must produce finite
  /// outputs. On by default in debug builds.
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* value_ref = nullptr;
    Tensor<T> grad;
    Tensor<T>* grad_ref = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  Var<T> push(Node node);
  const Tensor<T>& value_of(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.value_ref ? *n.value_ref : n.value;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
  bool training_;
  bool consumed_ = false;
  bool check_finite_;
  Rng rng_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape->value(id);
}

/// Differentiable primitives. Shapes are checked eagerly; mismatches throw
/// ShapeError naming the op and both shapes.
namespace ad {

/// a [.. x k] times b [k x n] (or b [n x k] with trans_b). Leading
/// dimensions of a are flattened.
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_b = false);
/// a [B x m x k] times b [B x k x n] (or [B x n x k] with trans_b).
template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool trans_b = false);

/// Elementwise ops with numpy-style broadcasting.
template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, double factor);

template <typename T>
Var<T> sum_all(Var<T> a);
template <typename T>
Var<T> sum(Var<T> a, std::size_t axis);
template <typename T>
Var<T> mean(Var<T> a, std::size_t axis);

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis);
template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
/// 2-D transpose.
template <typename T>
Var<T> transpose(Var<T> a);
/// Axis permutation of a rank-3 tensor.
template <typename T>
Var<T> permute(Var<T> a, std::array<std::size_t, 3> order);

/// Rows of `table` selected by `ids`: [V x ...] -> [|ids| x ...].
template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids);

/// Valid convolution along axis 1: x [N x L x C], w [(W*C) x F] ->
/// [N x (L-W+1) x F] with W = w.dim(0) / C.
template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w);
/// Max over axis 1: [N x T x F] -> [N x F]. Ties route the gradient to the
/// first maximal position. When `steps` is given, row b only considers its
/// first steps[b] positions.
template <typename T>
Var<T> max_over_time(Var<T> x, std::span<const std::size_t> steps = {});

template <typename T>
Var<T> relu(Var<T> a);
template <typename T>
Var<T> gelu(Var<T> a);
template <typename T>
Var<T> sigmoid(Var<T> a);
template <typename T>
Var<T> tanh(Var<T> a);

/// Softmax over the last axis.
template <typename T>
Var<T> softmax(Var<T> a);
template <typename T>
Var<T> log_softmax(Var<T> a);

/// Normalizes over the last axis, then applies gamma/beta. Rows whose
/// variance is below 1e-12 normalize to exactly zero.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta);

/// Inverted dropout; identity when the tape is not in training mode.
template <typename T>
Var<T> dropout(Var<T> a, double rate);

/// Summed cross-entropy of rows of `logits` [n x C] against `targets`.
/// Entries of -1 are ignored. Returns a [1] tensor.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets);

}  // namespace ad

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kZeroVariance = 1e-12;

}  // namespace charparse
