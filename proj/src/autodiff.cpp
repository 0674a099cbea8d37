#include "charparse/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "charparse/kernels.hpp"

namespace charparse {

// Tape ----------------------------------------------------------------------

template <typename T>
Tape<T>::Tape(bool training, std::uint64_t seed)
    : training_(training),
#ifdef NDEBUG
      check_finite_(false),
#else
      check_finite_(true),
#endif
      rng_(seed) {
}

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>{this, nodes_.size() - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p, bool trainable) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var<T>{this, it->second};
  Node n;
  n.value_ref = &p.value;
  if (trainable) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor<T>(p.value.shape());
    n.grad_ref = &p.grad;
    n.requires_grad = true;
  }
  Var<T> v = push(std::move(n));
  param_nodes_.emplace(&p, v.id);
  return v;
}

namespace {

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> inputs, Backward backward) {
  bool needs_grad = false;
  bool inputs_finite = true;
  for (const auto& in : inputs) {
    if (in.tape != this) throw std::invalid_argument("op input recorded on a different tape");
    needs_grad = needs_grad || nodes_[in.id].requires_grad;
    if (check_finite_) inputs_finite = inputs_finite && all_finite(value_of(in.id));
  }
  if (check_finite_ && inputs_finite && !all_finite(value)) {
    throw std::runtime_error("non-finite output at tape node " + std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs_grad;
  if (needs_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward backward) {
  return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()),
                std::move(backward));
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  return value_of(id);
}

template <typename T>
Tensor<T> Tape<T>::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.grad_ref) return *n.grad_ref;
  if (!n.grad.empty()) return n.grad;
  return Tensor<T>(value_of(id).shape());
}

template <typename T>
Tensor<T>* Tape<T>::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad_ref) return n.grad_ref;
  if (n.grad.empty()) n.grad = Tensor<T>(value_of(id).shape());
  return &n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) throw std::invalid_argument("backward: loss belongs to another tape");
  if (consumed_) throw std::logic_error("backward: tape already consumed");
  if (value_of(loss.id).size() != 1) {
    throw ShapeError("backward: loss is not a scalar, shape " + shape_string(value_of(loss.id).shape()));
  }
  consumed_ = true;
  Tensor<T>* seed = grad_slot(loss.id);
  if (!seed) return;
  (*seed)[0] += T(1);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward) continue;
    if (!n.grad_ref && n.grad.empty()) continue;
    n.backward(*this, i);
  }
}

// Ops -----------------------------------------------------------------------

namespace ad {

namespace {

[[noreturn]] void shape_fail(const std::string& op, const Shape& a, const Shape& b) {
  throw ShapeError(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

// Index maps for a broadcast binary op. Modes avoid materializing indices
// in the common bias/scalar cases.
struct Broadcast {
  enum class Mode { same, a_repeat, b_repeat, general } mode = Mode::same;
  Shape out;
  std::vector<std::size_t> ia, ib;  // general mode only
};

Broadcast make_broadcast(const std::string& op, const Shape& a, const Shape& b) {
  Broadcast bc;
  if (a == b) {
    bc.out = a;
    return bc;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  Shape pa(rank - a.size(), 1), pb(rank - b.size(), 1);
  pa.insert(pa.end(), a.begin(), a.end());
  pb.insert(pb.end(), b.begin(), b.end());
  bc.out.resize(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] == pb[d] || pb[d] == 1) {
      bc.out[d] = pa[d];
    } else if (pa[d] == 1) {
      bc.out[d] = pb[d];
    } else {
      shape_fail(op, a, b);
    }
  }
  // b tiles a: b's padded shape is all ones followed by a's trailing dims
  auto repeats = [&](const Shape& big, const Shape& small) {
    if (big != bc.out) return false;
    std::size_t d = 0;
    while (d < rank && small[d] == 1) ++d;
    for (std::size_t e = d; e < rank; ++e) {
      if (small[e] != big[e]) return false;
    }
    return true;
  };
  if (repeats(pa, pb)) {
    bc.mode = Broadcast::Mode::b_repeat;
    return bc;
  }
  if (repeats(pb, pa)) {
    bc.mode = Broadcast::Mode::a_repeat;
    return bc;
  }
  bc.mode = Broadcast::Mode::general;
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t acc_a = 1, acc_b = 1;
  for (std::size_t d = rank; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : acc_a;
    sb[d] = pb[d] == 1 ? 0 : acc_b;
    acc_a *= pa[d];
    acc_b *= pb[d];
  }
  const std::size_t total = shape_size(bc.out);
  bc.ia.resize(total);
  bc.ib.resize(total);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < total; ++o) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      oa += idx[d] * sa[d];
      ob += idx[d] * sb[d];
    }
    bc.ia[o] = oa;
    bc.ib[o] = ob;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < bc.out[d]) break;
      idx[d] = 0;
    }
  }
  return bc;
}

inline std::size_t index_a(const Broadcast& bc, std::size_t o, std::size_t a_size) {
  switch (bc.mode) {
    case Broadcast::Mode::same:
    case Broadcast::Mode::b_repeat:
      return o;
    case Broadcast::Mode::a_repeat:
      return o % a_size;
    default:
      return bc.ia[o];
  }
}

inline std::size_t index_b(const Broadcast& bc, std::size_t o, std::size_t b_size) {
  switch (bc.mode) {
    case Broadcast::Mode::same:
    case Broadcast::Mode::a_repeat:
      return o;
    case Broadcast::Mode::b_repeat:
      return o % b_size;
    default:
      return bc.ib[o];
  }
}

// f(a, b) -> out; da(a, b, g), db(a, b, g) -> input gradient contributions.
template <typename T, typename F, typename DA, typename DB>
Var<T> binary(const std::string& op, Var<T> a, Var<T> b, F f, DA da, DB db) {
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  auto bc = std::make_shared<Broadcast>(make_broadcast(op, av.shape(), bv.shape()));
  Tensor<T> out(bc->out);
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t o = 0; o < out.size(); ++o) {
    out[o] = f(av[index_a(*bc, o, na)], bv[index_b(*bc, o, nb)]);
  }
  return a.tape->record(std::move(out), {a, b}, [a, b, bc, da, db](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = *t.grad_slot(self);
    const Tensor<T>& av = t.value(a.id);
    const Tensor<T>& bv = t.value(b.id);
    const std::size_t na = av.size(), nb = bv.size();
    Tensor<T>* ga = t.grad_slot(a.id);
    Tensor<T>* gb = t.grad_slot(b.id);
    for (std::size_t o = 0; o < g.size(); ++o) {
      const std::size_t i = index_a(*bc, o, na);
      const std::size_t j = index_b(*bc, o, nb);
      if (ga) (*ga)[i] += da(av[i], bv[j], g[o]);
      if (gb) (*gb)[j] += db(av[i], bv[j], g[o]);
    }
  });
}

// Elementwise unary op; dfdx(x, y) is the local derivative.
template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D dfdx) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return a.tape->record(std::move(out), {a}, [a, dfdx](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const Tensor<T>& g = *t.grad_slot(self);
    const Tensor<T>& x = t.value(a.id);
    const Tensor<T>& y = t.value(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * dfdx(x[i], y[i]);
  });
}

std::size_t trailing(const Shape& s) { return s.empty() ? 1 : s.back(); }

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b, bool trans_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.empty() || bs.size() != 2) shape_fail("matmul", as, bs);
  const std::size_t k = as.back();
  const std::size_t n = trans_b ? bs[0] : bs[1];
  if ((trans_b ? bs[1] : bs[0]) != k) shape_fail("matmul", as, bs);
  const std::size_t m = a.value().size() / std::max<std::size_t>(k, 1);
  Shape os = as;
  os.back() = n;
  Tensor<T> out(os);
  kernels::gemm(false, trans_b, m, n, k, a.value().data(), k, b.value().data(), trans_b ? k : n,
                out.data(), n, false);
  return a.tape->record(std::move(out), {a, b}, [a, b, m, n, k, trans_b](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_slot(self)->data();
    const T* av = t.value(a.id).data();
    const T* bv = t.value(b.id).data();
    if (Tensor<T>* ga = t.grad_slot(a.id)) {
      if (trans_b) {
        kernels::gemm(false, false, m, k, n, g, n, bv, k, ga->data(), k, true);
      } else {
        kernels::gemm(false, true, m, k, n, g, n, bv, n, ga->data(), k, true);
      }
    }
    if (Tensor<T>* gb = t.grad_slot(b.id)) {
      if (trans_b) {
        kernels::gemm(true, false, n, k, m, g, n, av, k, gb->data(), k, true);
      } else {
        kernels::gemm(true, false, k, n, m, av, k, g, n, gb->data(), n, true);
      }
    }
  });
}

template <typename T>
Var<T> bmm(Var<T> a, Var<T> b, bool trans_b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 3 || bs.size() != 3 || as[0] != bs[0]) shape_fail("bmm", as, bs);
  const std::size_t batch = as[0], m = as[1], k = as[2];
  const std::size_t n = trans_b ? bs[1] : bs[2];
  if ((trans_b ? bs[2] : bs[1]) != k) shape_fail("bmm", as, bs);
  Tensor<T> out(Shape{batch, m, n});
  const std::size_t ldb = trans_b ? k : n;
  for (std::size_t i = 0; i < batch; ++i) {
    kernels::gemm(false, trans_b, m, n, k, a.value().data() + i * m * k, k,
                  b.value().data() + i * k * n, ldb, out.data() + i * m * n, n, false);
  }
  return a.tape->record(std::move(out), {a, b}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_slot(self)->data();
    const T* av = t.value(a.id).data();
    const T* bv = t.value(b.id).data();
    Tensor<T>* ga = t.grad_slot(a.id);
    Tensor<T>* gb = t.grad_slot(b.id);
    for (std::size_t i = 0; i < batch; ++i) {
      const T* gi = g + i * m * n;
      const T* ai = av + i * m * k;
      const T* bi = bv + i * k * n;
      if (ga) {
        T* gai = ga->data() + i * m * k;
        if (trans_b) {
          kernels::gemm(false, false, m, k, n, gi, n, bi, k, gai, k, true);
        } else {
          kernels::gemm(false, true, m, k, n, gi, n, bi, n, gai, k, true);
        }
      }
      if (gb) {
        T* gbi = gb->data() + i * k * n;
        if (trans_b) {
          kernels::gemm(true, false, n, k, m, gi, n, ai, k, gbi, k, true);
        } else {
          kernels::gemm(true, false, k, n, m, ai, k, gi, n, gbi, n, true);
        }
      }
    }
  });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  return binary<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return g; });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  return binary<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T, T g) { return g; },
      [](T, T, T g) { return -g; });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  return binary<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
      [](T x, T, T g) { return g * x; });
}

template <typename T>
Var<T> scale(Var<T> a, double factor) {
  const T c = static_cast<T>(factor);
  return unary<T>(
      a, [c](T x) { return c * x; }, [c](T, T) { return c; });
}

template <typename T>
Var<T> sum_all(Var<T> a) {
  T s = 0;
  for (T v : a.value().values()) s += v;
  return a.tape->record(Tensor<T>::scalar(s), {a}, [a](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const T g = (*t.grad_slot(self))[0];
    for (auto& v : ga->values()) v += g;
  });
}

template <typename T>
Var<T> sum(Var<T> a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw ShapeError("sum: axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[axis];
  Shape os = s;
  os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  if (os.empty()) os = {1};
  Tensor<T> out(os);
  const T* x = a.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t l = 0; l < len; ++l) {
      for (std::size_t i = 0; i < inner; ++i) out[o * inner + i] += x[(o * len + l) * inner + i];
    }
  }
  return a.tape->record(std::move(out), {a}, [=](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t l = 0; l < len; ++l) {
        for (std::size_t i = 0; i < inner; ++i) (*ga)[(o * len + l) * inner + i] += g[o * inner + i];
      }
    }
  });
}

template <typename T>
Var<T> mean(Var<T> a, std::size_t axis) {
  if (axis >= a.shape().size()) throw ShapeError("mean: axis out of range for " + shape_string(a.shape()));
  const std::size_t len = a.shape()[axis];
  return scale(sum(a, axis), 1.0 / static_cast<double>(std::max<std::size_t>(len, 1)));
}

template <typename T>
Var<T> concat(std::span<const Var<T>> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_string(s0));
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s0[d];
  for (std::size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) shape_fail("concat", s0, s);
    for (std::size_t d = 0; d < s.size(); ++d) {
      if (d != axis && s[d] != s0[d]) shape_fail("concat", s0, s);
    }
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  Shape os = s0;
  os[axis] = total;
  Tensor<T> out(os);
  const std::size_t row = total * inner;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const T* src = parts[p].value().data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy(src + o * widths[p], src + (o + 1) * widths[p], out.data() + o * row + offset);
    }
    offset += widths[p];
  }
  std::vector<Var<T>> inputs(parts.begin(), parts.end());
  return parts[0].tape->record(std::move(out), inputs, [inputs, widths, outer, row](Tape<T>& t, std::size_t self) {
    const Tensor<T>& g = *t.grad_slot(self);
    std::size_t offset = 0;
    for (std::size_t p = 0; p < inputs.size(); ++p) {
      if (Tensor<T>* gp = t.grad_slot(inputs[p].id)) {
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = g.data() + o * row + offset;
          T* dst = gp->data() + o * widths[p];
          for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
        }
      }
      offset += widths[p];
    }
  });
}

template <typename T>
Var<T> slice(Var<T> a, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = a.shape();
  if (axis >= s.size() || begin > end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") on axis " + std::to_string(axis) + " of " + shape_string(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= s[d];
  for (std::size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  const std::size_t len = s[axis];
  const std::size_t width = (end - begin) * inner;
  Shape os = s;
  os[axis] = end - begin;
  Tensor<T> out(os);
  const T* x = a.value().data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy(x + (o * len + begin) * inner, x + (o * len + begin) * inner + width, out.data() + o * width);
  }
  return a.tape->record(std::move(out), {a}, [=](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t o = 0; o < outer; ++o) {
      T* dst = ga->data() + (o * len + begin) * inner;
      const T* src = g.data() + o * width;
      for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return a.tape->record(std::move(out), {a}, [a](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const Shape& s = a.shape();
  if (s.size() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_string(s));
  const std::size_t r = s[0], c = s[1];
  Tensor<T> out(Shape{c, r});
  const T* x = a.value().data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return a.tape->record(std::move(out), {a}, [a, r, c](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[j * r + i];
    }
  });
}

template <typename T>
Var<T> permute(Var<T> a, std::array<std::size_t, 3> order) {
  const Shape& s = a.shape();
  if (s.size() != 3) throw ShapeError("permute: expected rank 3, got " + shape_string(s));
  std::array<bool, 3> seen{};
  for (auto o : order) {
    if (o > 2 || seen[o]) throw ShapeError("permute: invalid axis order");
    seen[o] = true;
  }
  const std::array<std::size_t, 3> in_stride{s[1] * s[2], s[2], 1};
  const Shape os{s[order[0]], s[order[1]], s[order[2]]};
  // source offset of each output element
  auto src_index = std::make_shared<std::vector<std::size_t>>(shape_size(os));
  std::size_t o = 0;
  for (std::size_t i = 0; i < os[0]; ++i) {
    for (std::size_t j = 0; j < os[1]; ++j) {
      for (std::size_t k = 0; k < os[2]; ++k) {
        (*src_index)[o++] = i * in_stride[order[0]] + j * in_stride[order[1]] + k * in_stride[order[2]];
      }
    }
  }
  Tensor<T> out(os);
  const T* x = a.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[(*src_index)[i]];
  return a.tape->record(std::move(out), {a}, [a, src_index](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[(*src_index)[i]] += g[i];
  });
}

template <typename T>
Var<T> gather_rows(Var<T> table, std::span<const int> ids) {
  const Shape& s = table.shape();
  if (s.empty()) throw ShapeError("gather_rows: scalar table");
  const std::size_t rows = s[0];
  const std::size_t width = table.value().size() / std::max<std::size_t>(rows, 1);
  std::vector<int> idx(ids.begin(), ids.end());
  Shape os = s;
  os[0] = idx.size();
  Tensor<T> out(os);
  const T* x = table.value().data();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= rows) {
      throw std::out_of_range("gather_rows: id " + std::to_string(idx[i]) + " outside table of " +
                              std::to_string(rows) + " rows");
    }
    std::copy(x + idx[i] * width, x + (idx[i] + 1) * width, out.data() + i * width);
  }
  return table.tape->record(std::move(out), {table}, [table, idx, width](Tape<T>& t, std::size_t self) {
    Tensor<T>* gt = t.grad_slot(table.id);
    if (!gt) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      T* dst = gt->data() + static_cast<std::size_t>(idx[i]) * width;
      const T* src = g.data() + i * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

template <typename T>
Var<T> conv1d(Var<T> x, Var<T> w) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 3 || ws.size() != 2 || xs[2] == 0 || ws[0] % xs[2] != 0) shape_fail("conv1d", xs, ws);
  const std::size_t batch = xs[0], len = xs[1], ch = xs[2];
  const std::size_t width = ws[0] / ch, filters = ws[1];
  if (width == 0 || width > len) shape_fail("conv1d", xs, ws);
  const std::size_t steps = len - width + 1;
  Tensor<T> out(Shape{batch, steps, filters});
  kernels::conv1d(batch, len, ch, width, filters, x.value().data(), w.value().data(), out.data());
  return x.tape->record(std::move(out), {x, w}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_slot(self)->data();
    const T* xv = t.value(x.id).data();
    const T* wv = t.value(w.id).data();
    const std::size_t patch = width * ch;
    const std::size_t rows = batch * steps;
    if (Tensor<T>* gw = t.grad_slot(w.id)) {
      std::vector<T> cols(rows * patch);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < steps; ++s) {
          const T* src = xv + (b * len + s) * ch;
          std::copy(src, src + patch, cols.data() + (b * steps + s) * patch);
        }
      }
      kernels::gemm(true, false, patch, filters, rows, cols.data(), patch, g, filters, gw->data(), filters, true);
    }
    if (Tensor<T>* gx = t.grad_slot(x.id)) {
      std::vector<T> dcols(rows * patch);
      kernels::gemm(false, true, rows, patch, filters, g, filters, wv, filters, dcols.data(), patch, false);
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t s = 0; s < steps; ++s) {
          T* dst = gx->data() + (b * len + s) * ch;
          const T* src = dcols.data() + (b * steps + s) * patch;
          for (std::size_t i = 0; i < patch; ++i) dst[i] += src[i];
        }
      }
    }
  });
}

template <typename T>
Var<T> max_over_time(Var<T> x, std::span<const std::size_t> valid) {
  const Shape& s = x.shape();
  if (s.size() != 3 || s[1] == 0) throw ShapeError("max_over_time: expected [N x T x F], got " + shape_string(s));
  const std::size_t batch = s[0], steps = s[1], feats = s[2];
  if (!valid.empty() && valid.size() != batch) {
    throw ShapeError("max_over_time: " + std::to_string(valid.size()) + " lengths for " + shape_string(s));
  }
  Tensor<T> out(Shape{batch, feats});
  auto arg = std::make_shared<std::vector<std::size_t>>(batch * feats);
  const T* xv = x.value().data();
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = valid.empty() ? steps : std::clamp<std::size_t>(valid[b], 1, steps);
    for (std::size_t f = 0; f < feats; ++f) {
      std::size_t best = 0;
      T bv = xv[(b * steps) * feats + f];
      for (std::size_t st = 1; st < n; ++st) {
        const T v = xv[(b * steps + st) * feats + f];
        if (v > bv) {
          bv = v;
          best = st;
        }
      }
      out[b * feats + f] = bv;
      (*arg)[b * feats + f] = (b * steps + best) * feats + f;
    }
  }
  return x.tape->record(std::move(out), {x}, [x, arg](Tape<T>& t, std::size_t self) {
    Tensor<T>* gx = t.grad_slot(x.id);
    if (!gx) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[(*arg)[i]] += g[i];
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary<T>(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> gelu(Var<T> a) {
  constexpr T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  constexpr T inv_sqrt2pi = static_cast<T>(0.39894228040143267794);
  return unary<T>(
      a, [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) {
        const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(T(-0.5) * x * x);
      });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary<T>(
      a,
      [](T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary<T>(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> softmax(Var<T> a) {
  const Shape& s = a.shape();
  const std::size_t cols = trailing(s);
  const std::size_t rows = a.value().size() / std::max<std::size_t>(cols, 1);
  Tensor<T> out(s);
  kernels::softmax_rows(rows, cols, a.value().data(), out.data());
  return a.tape->record(std::move(out), {a}, [a, rows, cols](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const T* g = t.grad_slot(self)->data();
    const T* y = t.value(self).data();
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        (*ga)[r * cols + c] += y[r * cols + c] * (g[r * cols + c] - dot);
      }
    }
  });
}

template <typename T>
Var<T> log_softmax(Var<T> a) {
  const Shape& s = a.shape();
  const std::size_t cols = trailing(s);
  const std::size_t rows = a.value().size() / std::max<std::size_t>(cols, 1);
  Tensor<T> out(s);
  const T* x = a.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x[r * cols + c]);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(x[r * cols + c] - mx);
    const T lse = mx + std::log(sum);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = x[r * cols + c] - lse;
  }
  return a.tape->record(std::move(out), {a}, [a, rows, cols](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const T* g = t.grad_slot(self)->data();
    const T* y = t.value(self).data();
    for (std::size_t r = 0; r < rows; ++r) {
      T gs = 0;
      for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        (*ga)[r * cols + c] += g[r * cols + c] - std::exp(y[r * cols + c]) * gs;
      }
    }
  });
}

template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta) {
  const Shape& s = x.shape();
  const std::size_t d = trailing(s);
  if (gamma.value().size() != d || beta.value().size() != d) shape_fail("layer_norm", s, gamma.shape());
  const std::size_t rows = x.value().size() / std::max<std::size_t>(d, 1);
  auto xhat = std::make_shared<std::vector<T>>(x.value().size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  Tensor<T> out(s);
  const T* xv = x.value().data();
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T inv = var < static_cast<T>(kZeroVariance) ? T(0) : T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    (*rstd)[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const T h = (row[j] - mu) * inv;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return x.tape->record(std::move(out), {x, gamma, beta}, [=](Tape<T>& t, std::size_t self) {
    const T* g = t.grad_slot(self)->data();
    const T* gv = t.value(gamma.id).data();
    Tensor<T>* gx = t.grad_slot(x.id);
    Tensor<T>* gg = t.grad_slot(gamma.id);
    Tensor<T>* gb = t.grad_slot(beta.id);
    std::vector<T> dxhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = g + r * d;
      const T* hr = xhat->data() + r * d;
      if (gg) {
        for (std::size_t j = 0; j < d; ++j) (*gg)[j] += gr[j] * hr[j];
      }
      if (gb) {
        for (std::size_t j = 0; j < d; ++j) (*gb)[j] += gr[j];
      }
      if (gx && (*rstd)[r] != T(0)) {
        T mean_d = 0, mean_dh = 0;
        for (std::size_t j = 0; j < d; ++j) {
          dxhat[j] = gr[j] * gv[j];
          mean_d += dxhat[j];
          mean_dh += dxhat[j] * hr[j];
        }
        mean_d /= static_cast<T>(d);
        mean_dh /= static_cast<T>(d);
        for (std::size_t j = 0; j < d; ++j) {
          (*gx)[r * d + j] += (*rstd)[r] * (dxhat[j] - mean_d - hr[j] * mean_dh);
        }
      }
    }
  });
}

template <typename T>
Var<T> dropout(Var<T> a, double rate) {
  Tape<T>& tape = *a.tape;
  if (!tape.training() || rate <= 0.0) return a;
  if (rate >= 1.0) throw std::invalid_argument("dropout: rate must be < 1");
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<std::vector<T>>(a.value().size());
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    (*mask)[i] = tape.rng().bernoulli(rate) ? T(0) : keep_scale;
    out[i] = a.value()[i] * (*mask)[i];
  }
  return tape.record(std::move(out), {a}, [a, mask](Tape<T>& t, std::size_t self) {
    Tensor<T>* ga = t.grad_slot(a.id);
    if (!ga) return;
    const Tensor<T>& g = *t.grad_slot(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (*mask)[i];
  });
}

template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != targets.size()) {
    throw ShapeError("cross_entropy: logits " + shape_string(s) + " for " + std::to_string(targets.size()) + " targets");
  }
  const std::size_t rows = s[0], cols = s[1];
  std::vector<int> tg(targets.begin(), targets.end());
  auto probs = std::make_shared<std::vector<T>>(rows * cols);
  const T* x = logits.value().data();
  T loss = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tg[r] < 0) continue;
    if (static_cast<std::size_t>(tg[r]) >= cols) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(tg[r]) + " >= " + std::to_string(cols) + " classes");
    }
    kernels::softmax_rows_reference<T>(1, cols, x + r * cols, probs->data() + r * cols);
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t c = 0; c < cols; ++c) mx = std::max(mx, x[r * cols + c]);
    T sum = 0;
    for (std::size_t c = 0; c < cols; ++c) sum += std::exp(x[r * cols + c] - mx);
    loss += mx + std::log(sum) - x[r * cols + static_cast<std::size_t>(tg[r])];
  }
  return logits.tape->record(Tensor<T>::scalar(loss), {logits}, [logits, tg, probs, cols](Tape<T>& t, std::size_t self) {
    Tensor<T>* gl = t.grad_slot(logits.id);
    if (!gl) return;
    const T g = (*t.grad_slot(self))[0];
    for (std::size_t r = 0; r < tg.size(); ++r) {
      if (tg[r] < 0) continue;
      T* dst = gl->data() + r * cols;
      const T* p = probs->data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) dst[c] += g * p[c];
      dst[tg[r]] -= g;
    }
  });
}

#define CHARPARSE_AD_OPS(T)                                                       \
  template Var<T> matmul<T>(Var<T>, Var<T>, bool);                                \
  template Var<T> bmm<T>(Var<T>, Var<T>, bool);                                   \
  template Var<T> add<T>(Var<T>, Var<T>);                                         \
  template Var<T> sub<T>(Var<T>, Var<T>);                                         \
  template Var<T> mul<T>(Var<T>, Var<T>);                                         \
  template Var<T> scale<T>(Var<T>, double);                                       \
  template Var<T> sum_all<T>(Var<T>);                                             \
  template Var<T> sum<T>(Var<T>, std::size_t);                                    \
  template Var<T> mean<T>(Var<T>, std::size_t);                                   \
  template Var<T> concat<T>(std::span<const Var<T>>, std::size_t);                \
  template Var<T> slice<T>(Var<T>, std::size_t, std::size_t, std::size_t);        \
  template Var<T> reshape<T>(Var<T>, Shape);                                      \
  template Var<T> transpose<T>(Var<T>);                                           \
  template Var<T> permute<T>(Var<T>, std::array<std::size_t, 3>);                 \
  template Var<T> gather_rows<T>(Var<T>, std::span<const int>);                   \
  template Var<T> conv1d<T>(Var<T>, Var<T>);                                      \
  template Var<T> max_over_time<T>(Var<T>, std::span<const std::size_t>);                                       \
  template Var<T> relu<T>(Var<T>);                                                \
  template Var<T> gelu<T>(Var<T>);                                                \
  template Var<T> sigmoid<T>(Var<T>);                                             \
  template Var<T> tanh<T>(Var<T>);                                                \
  template Var<T> softmax<T>(Var<T>);                                             \
  template Var<T> log_softmax<T>(Var<T>);                                         \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>);                          \
  template Var<T> dropout<T>(Var<T>, double);                                     \
  template Var<T> cross_entropy<T>(Var<T>, std::span<const int>);

CHARPARSE_AD_OPS(float)
CHARPARSE_AD_OPS(double)

}  // namespace ad

template class Tape<float>;
template class Tape<double>;

}  // namespace charparse
