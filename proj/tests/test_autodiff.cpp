#include <doctest.h>

#include <cmath>

#include "charparse/autodiff.hpp"
#include "charparse/char_encoder.hpp"
#include "charparse/grad_check.hpp"
#include "charparse/optim.hpp"

using namespace charparse;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = rng.normal(0.0, scale);
  return t;
}

// Weighted sum so every output element carries a distinct gradient.
Var<double> project(Tape<double>& tape, Var<double> x, std::uint64_t seed) {
  Rng rng(seed);
  return ad::sum_all(ad::mul(x, tape.constant(random_tensor(x.shape(), rng))));
}

}  // namespace

TEST_CASE("forward: matmul with the identity") {
  Tape<double> tape;
  Tensor<double> eye(Shape{2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor<double> a(Shape{2, 2}, std::vector<double>{1.5, -2, 3, 4.25});
  CHECK(ad::matmul(tape.constant(eye), tape.constant(a)).value().storage() == a.storage());
}

TEST_CASE("forward: softmax of zeros is uniform") {
  Tape<double> tape;
  const auto y = ad::softmax(tape.constant(Tensor<double>(Shape{3})));
  for (double v : y.value().values()) CHECK(v == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("forward: layer norm of a constant row is zero before the affine part") {
  Tape<double> tape;
  Tensor<double> g(Shape{4}, 1.0), b(Shape{4}, 0.0);
  const auto y = ad::layer_norm(tape.constant(Tensor<double>(Shape{2, 4}, 7.0)), tape.constant(g), tape.constant(b));
  for (double v : y.value().values()) CHECK(v == 0.0);
  Tensor<double> shift(Shape{4}, 0.5);
  const auto z = ad::layer_norm(tape.constant(Tensor<double>(Shape{1, 4}, -3.0)), tape.constant(g), tape.constant(shift));
  for (double v : z.value().values()) CHECK(v == 0.5);
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2p") {
  {
    Tape<double> tape;
    auto p = tape.leaf(Tensor<double>(Shape{2, 3}, 0.7));
    tape.backward(ad::sum_all(p));
    const auto grad = tape.grad(p.id);
    for (double g : grad.values()) CHECK(g == 1.0);
  }
  {
    Tape<double> tape;
    auto p = tape.leaf(Tensor<double>(Shape{1}, 3.0));
    tape.backward(ad::sum_all(ad::mul(p, p)));
    CHECK(tape.grad(p.id)[0] == 6.0);
  }
}

TEST_CASE("backward: a tape can only be consumed once") {
  Tape<double> tape;
  auto p = tape.leaf(Tensor<double>(Shape{1}, 1.0));
  auto loss = ad::sum_all(p);
  tape.backward(loss);
  CHECK_THROWS(tape.backward(loss));
}

TEST_CASE("shape errors name the op") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>(Shape{2, 3}));
  auto b = tape.constant(Tensor<double>(Shape{2, 3}));
  try {
    ad::matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
}

TEST_CASE("adam: first step, zero gradient, monotone steps") {
  ParameterStore<double> store;
  auto& p = store.add("theta", {1});
  AdamConfig cfg;
  cfg.lr = 0.1;
  auto state = make_adam_state(store, cfg);
  p.grad[0] = 1.0;
  adam_step(store, state);
  CHECK(std::abs(p.value[0] + 0.1) < 1e-7);

  ParameterStore<double> still;
  auto& q = still.add("q", {3});
  q.value.fill(0.25);
  auto s2 = make_adam_state(still, cfg);
  adam_step(still, s2);
  for (double v : q.value.values()) CHECK(v == 0.25);

  ParameterStore<double> mono;
  auto& r = mono.add("r", {1});
  auto s3 = make_adam_state(mono, cfg);
  double prev = r.value[0];
  for (int i = 0; i < 2; ++i) {
    r.grad[0] = 1.0;
    adam_step(mono, s3);
    CHECK(r.value[0] < prev);
    prev = r.value[0];
  }
}

TEST_CASE("adam: zero learning rate for selected parameters") {
  ParameterStore<double> store;
  auto& a = store.add("frozen.w", {2});
  auto& b = store.add("free.w", {2});
  auto state = make_adam_state(store, AdamConfig{}, [](const std::string& n) { return n.starts_with("frozen") ? 0.0 : 1e-3; });
  a.grad.fill(1.0);
  b.grad.fill(1.0);
  adam_step(store, state);
  CHECK(a.value[0] == 0.0);
  CHECK(b.value[0] < 0.0);
}

TEST_CASE("grad_check: x squared") {
  ParameterStore<double> store;
  store.add("x", {1}).value[0] = 3.0;
  auto r = grad_check([&](Tape<double>& t) {
    auto x = t.param(store.get("x"));
    return ad::sum_all(ad::mul(x, x));
  }, store);
  CHECK(r.max_rel_error < 1e-9);
}

TEST_CASE("grad_check: every primitive") {
  Rng rng(42);
  ParameterStore<double> store;
  auto& a = store.add("a", {3, 4});
  auto& b = store.add("b", {4, 5});
  auto& c = store.add("c", {3, 4});
  auto& g = store.add("g", {4});
  auto& be = store.add("be", {4});
  auto& x3 = store.add("x3", {2, 3, 4});
  auto& y3 = store.add("y3", {2, 5, 4});
  auto& seq = store.add("seq", {2, 6, 3});
  auto& w = store.add("w", {6, 4});
  auto& table = store.add("table", {5, 4});
  for (std::size_t i = 0; i < store.size(); ++i) init_normal(store[i].value, 1.0, rng);
  const int ids[] = {3, 0, 3, 4};
  const int targets[] = {1, -1, 3};
  const std::size_t steps[] = {6, 3};

  using Op = std::function<Var<double>(Tape<double>&)>;
  std::vector<std::pair<const char*, Op>> ops = {
      {"matmul", [&](Tape<double>& t) { return ad::matmul(t.param(a), t.param(b)); }},
      {"matmul_t", [&](Tape<double>& t) { return ad::matmul(t.param(a), t.param(c), true); }},
      {"bmm", [&](Tape<double>& t) { return ad::bmm(t.param(x3), t.param(y3), true); }},
      {"add_broadcast", [&](Tape<double>& t) { return ad::add(t.param(a), t.param(g)); }},
      {"sub", [&](Tape<double>& t) { return ad::sub(t.param(a), t.param(c)); }},
      {"mul", [&](Tape<double>& t) { return ad::mul(t.param(a), t.param(c)); }},
      {"scale", [&](Tape<double>& t) { return ad::scale(t.param(a), -1.7); }},
      {"sum_axis", [&](Tape<double>& t) { return ad::sum(t.param(x3), 1); }},
      {"mean_axis", [&](Tape<double>& t) { return ad::mean(t.param(x3), 2); }},
      {"concat", [&](Tape<double>& t) {
         std::array<Var<double>, 2> parts{t.param(a), t.param(c)};
         return ad::concat<double>(parts, 1);
       }},
      {"slice", [&](Tape<double>& t) { return ad::slice(t.param(x3), 1, 1, 3); }},
      {"reshape", [&](Tape<double>& t) { return ad::reshape(t.param(a), Shape{2, 6}); }},
      {"transpose", [&](Tape<double>& t) { return ad::transpose(t.param(a)); }},
      {"permute", [&](Tape<double>& t) { return ad::permute(t.param(x3), {1, 0, 2}); }},
      {"gather_rows", [&](Tape<double>& t) { return ad::gather_rows(t.param(table), std::span<const int>(ids)); }},
      {"conv1d", [&](Tape<double>& t) { return ad::conv1d(t.param(seq), t.param(w)); }},
      {"max_over_time", [&](Tape<double>& t) { return ad::max_over_time(t.param(seq)); }},
      {"max_over_time_steps",
       [&](Tape<double>& t) { return ad::max_over_time(t.param(seq), std::span<const std::size_t>(steps)); }},
      {"relu", [&](Tape<double>& t) { return ad::relu(t.param(a)); }},
      {"gelu", [&](Tape<double>& t) { return ad::gelu(t.param(a)); }},
      {"sigmoid", [&](Tape<double>& t) { return ad::sigmoid(t.param(a)); }},
      {"tanh", [&](Tape<double>& t) { return ad::tanh(t.param(a)); }},
      {"softmax", [&](Tape<double>& t) { return ad::softmax(t.param(x3)); }},
      {"log_softmax", [&](Tape<double>& t) { return ad::log_softmax(t.param(a)); }},
      {"layer_norm", [&](Tape<double>& t) { return ad::layer_norm(t.param(a), t.param(g), t.param(be)); }},
      {"cross_entropy", [&](Tape<double>& t) { return ad::cross_entropy(t.param(a), std::span<const int>(targets)); }},
  };
  for (const auto& [name, op] : ops) {
    CAPTURE(name);
    std::uint64_t salt = 0;
    for (const char* p = name; *p; ++p) salt = salt * 31 + static_cast<unsigned char>(*p);
    auto r = grad_check([&](Tape<double>& t) { return project(t, op(t), salt); }, store);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("grad_check: char-CNN, highway and projection chain") {
  Rng rng(5);
  ParameterStore<double> store;
  CharEncoderConfig cfg;
  cfg.char_emb_dim = 3;
  cfg.kernels = {{1, 2}, {2, 3}};
  cfg.n_highway = 1;
  cfg.d_model = 4;
  cfg.max_word_len = 6;
  CharEncoder<double> enc(cfg, 12, store, "c.", rng);
  for (std::size_t i = 0; i < store.size(); ++i) init_normal(store[i].value, 0.5, rng);
  std::vector<int> ids = {1, 9, 10, 2, 0, 0, 0, 0, 1, 11, 2, 0, 0, 0, 0, 0};
  auto r = grad_check([&](Tape<double>& t) { return project(t, enc.embed(t, ids, 2), 3); }, store);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("dropout is the identity outside training and scales inside") {
  Tensor<double> x(Shape{1000}, 1.0);
  {
    Tape<double> tape(false);
    CHECK(ad::dropout(tape.constant(x), 0.5).value().storage() == x.storage());
  }
  Tape<double> tape(true, 3);
  const auto y = ad::dropout(tape.constant(x), 0.5).value();
  std::size_t kept = 0;
  for (double v : y.values()) {
    CHECK((v == 0.0 || v == 2.0));
    kept += v != 0.0;
  }
  CHECK(kept > 400);
  CHECK(kept < 600);
}

TEST_CASE("forward is deterministic") {
  Rng r1(9), r2(9);
  const auto x = random_tensor({4, 5}, r1);
  CHECK(x.storage() == random_tensor({4, 5}, r2).storage());
  Tape<double> t1(true, 4), t2(true, 4);
  CHECK(ad::dropout(ad::gelu(t1.constant(x)), 0.3).value().storage() ==
        ad::dropout(ad::gelu(t2.constant(x)), 0.3).value().storage());
}
