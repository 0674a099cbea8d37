#include <doctest.h>

#include <cmath>

#include "charparse/encoder.hpp"
#include "charparse/grad_check.hpp"
#include "test_support.hpp"

using namespace charparse;

namespace {

EncoderConfig tiny_encoder(std::size_t layers = 2, std::size_t d = 16) {
  EncoderConfig c;
  c.n_layers = layers;
  c.n_heads = 2;
  c.d_model = d;
  c.d_ff = 2 * d;
  c.max_seq_len = 10;
  c.dropout = 0.0;
  return c;
}

template <typename T>
Tensor<T> random_tensor(Shape s, Rng& rng) {
  Tensor<T> t(std::move(s));
  for (auto& v : t.values()) v = static_cast<T>(rng.normal());
  return t;
}

}  // namespace

TEST_CASE("encode: one output per layer with the input shape") {
  Rng rng(1);
  ParameterStore<double> store;
  TransformerEncoder<double> enc(tiny_encoder(3), store, "e.", rng);
  Tape<double> tape;
  auto out = enc.encode(tape, tape.constant(random_tensor<double>({6, 16}, rng)));
  REQUIRE(out.hidden.size() == 3);
  for (const auto& h : out.hidden) CHECK(h.shape() == Shape{6, 16});
}

TEST_CASE("encode: padding keys receive zero attention") {
  Rng rng(2);
  ParameterStore<double> store;
  TransformerEncoder<double> enc(tiny_encoder(), store, "e.", rng);
  Tape<double> tape;
  const bool valid[] = {true, true, true, false, false};
  auto out = enc.encode(tape, tape.constant(random_tensor<double>({5, 16}, rng)), valid);
  for (const auto& a : out.attention) {
    const auto& w = a.value();
    REQUIRE(w.shape() == Shape{2, 5, 5});
    for (std::size_t h = 0; h < 2; ++h) {
      for (std::size_t i = 0; i < 3; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < 5; ++j) {
          if (j >= 3) CHECK(w(h, i, j) == 0.0);
          s += w(h, i, j);
        }
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("encode: padding does not change real positions") {
  Rng rng(3);
  ParameterStore<double> store;
  TransformerEncoder<double> enc(tiny_encoder(), store, "e.", rng);
  const auto x = random_tensor<double>({5, 16}, rng);
  Tensor<double> prefix(Shape{3, 16}, std::vector<double>(x.values().begin(), x.values().begin() + 48));
  Tape<double> t1, t2;
  const bool valid[] = {true, true, true, false, false};
  const auto padded = enc.encode(t1, t1.constant(x), valid).hidden.back().value();
  const auto plain = enc.encode(t2, t2.constant(prefix)).hidden.back().value();
  for (std::size_t i = 0; i < 48; ++i) CHECK(padded[i] == doctest::Approx(plain[i]).epsilon(1e-12));
}

TEST_CASE("encode: too long sequences are rejected") {
  Rng rng(4);
  ParameterStore<double> store;
  TransformerEncoder<double> enc(tiny_encoder(), store, "e.", rng);
  Tape<double> tape;
  CHECK_THROWS_AS(enc.encode(tape, tape.constant(Tensor<double>(Shape{11, 16}))), std::length_error);
}

TEST_CASE("grad_check: two-block encoder d=16") {
  Rng rng(5);
  ParameterStore<double> store;
  TransformerEncoder<double> enc(tiny_encoder(), store, "e.", rng);
  auto& x = store.add("x", {4, 16});
  init_normal(x.value, 1.0, rng);
  const auto w = random_tensor<double>({4, 16}, rng);
  const bool valid[] = {true, true, true, false};
  auto r = grad_check([&](Tape<double>& t) {
    return ad::sum_all(ad::mul(enc.encode(t, t.param(x), valid).hidden.back(), t.constant(w)));
  }, store);
  CHECK(r.max_rel_error < 1e-5);
}

TEST_CASE("layer sets") {
  CHECK(parse_layer_set("all", 4) == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(parse_layer_set("2", 4) == std::vector<std::size_t>{2});
  CHECK(parse_layer_set("1-2", 4) == std::vector<std::size_t>{1, 2});
  CHECK_THROWS_AS(parse_layer_set("4", 4), ConfigError);
  CHECK_THROWS_AS(parse_layer_set("99", 4), ConfigError);
  CHECK_THROWS_AS(parse_layer_set("3-1", 4), ConfigError);
  CHECK_THROWS_AS(parse_layer_set("x", 4), ConfigError);
  CHECK(layer_set_string(std::vector<std::size_t>{0, 1, 2, 3}, 4) == "all");
  CHECK(layer_set_string(std::vector<std::size_t>{1, 2}, 4) == "1-2");
}

TEST_CASE("aggregation spec normalization") {
  AggregationSpec s;
  s.mode = AggregationMode::last_layer;
  s.layers = parse_layer_set("11", 12);
  s.normalize(12);
  CHECK(s.layers == std::vector<std::size_t>{11});
  CHECK(s.name() == "last-layer-ft");
  AggregationSpec m;
  m.mode = AggregationMode::mean;
  m.trainable = false;
  m.layers = parse_layer_set("4-7", 12);
  m.normalize(12);
  CHECK(m.layers == std::vector<std::size_t>{4, 5, 6, 7});
  CHECK(m.name() == "mean-fz");
  AggregationSpec empty;
  empty.normalize(4);
  CHECK(empty.layers == std::vector<std::size_t>{3});
}

TEST_CASE("aggregate: mean of equal layers, uniform mix, singleton identities") {
  ParameterStore<double> store;
  ScalarMix<double> mix(4, store, "mix.");
  Rng rng(6);
  Tape<double> tape;
  EncoderOutput<double> out;
  const auto h = random_tensor<double>({3, 8}, rng);
  for (int l = 0; l < 4; ++l) out.hidden.push_back(tape.constant(h));
  AggregationSpec mean{{0, 1, 2, 3}, AggregationMode::mean, true};
  const auto m = aggregate(tape, out, mean, &mix).value();
  for (std::size_t i = 0; i < h.size(); ++i) CHECK(m[i] == doctest::Approx(h[i]).epsilon(1e-15));

  EncoderOutput<double> diff;
  for (int l = 0; l < 4; ++l) diff.hidden.push_back(tape.constant(random_tensor<double>({3, 8}, rng)));
  mix.scalars().value.fill(0.37);
  AggregationSpec sm{{1, 2, 3}, AggregationMode::scalar_mix, true};
  AggregationSpec mn{{1, 2, 3}, AggregationMode::mean, true};
  const auto a = aggregate(tape, diff, sm, &mix).value();
  const auto b = aggregate(tape, diff, mn, &mix).value();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));

  AggregationSpec last{{3}, AggregationMode::last_layer, true};
  AggregationSpec mean_top{{3}, AggregationMode::mean, true};
  AggregationSpec mix_top{{3}, AggregationMode::scalar_mix, true};
  const auto top = diff.hidden.back().value().storage();
  CHECK(aggregate(tape, diff, last, &mix).value().storage() == top);
  CHECK(aggregate(tape, diff, mean_top, &mix).value().storage() == top);
  CHECK(aggregate(tape, diff, mix_top, &mix).value().storage() == top);

  AggregationSpec bad{{4}, AggregationMode::mean, true};
  CHECK_THROWS_AS(aggregate(tape, diff, bad, &mix), ConfigError);
}

TEST_CASE("scalar mix weights are a softmax over the selected layers") {
  ParameterStore<double> store;
  ScalarMix<double> mix(4, store, "mix.");
  mix.scalars().value[0] = 2.0;
  mix.scalars().value[2] = -1.0;
  const std::size_t layers[] = {0, 2, 3};
  const auto w = mix.weights(layers);
  REQUIRE(w.size() == 3);
  CHECK(w[0] + w[1] + w[2] == doctest::Approx(1.0).epsilon(1e-12));
  const double z = std::exp(2.0) + std::exp(-1.0) + 1.0;
  CHECK(w[0] == doctest::Approx(std::exp(2.0) / z));
}

TEST_CASE("grad_check: scalar mix") {
  Rng rng(7);
  ParameterStore<double> store;
  ScalarMix<double> mix(3, store, "mix.");
  init_normal(mix.scalars().value, 1.0, rng);
  std::vector<Parameter<double>*> hs;
  for (int l = 0; l < 3; ++l) {
    hs.push_back(&store.add("h" + std::to_string(l), {2, 4}));
    init_normal(hs.back()->value, 1.0, rng);
  }
  const auto w = random_tensor<double>({2, 4}, rng);
  const std::size_t layers[] = {0, 2};
  auto r = grad_check([&](Tape<double>& t) {
    std::vector<Var<double>> h;
    for (auto* p : hs) h.push_back(t.param(*p));
    return ad::sum_all(ad::mul(mix.mix(t, h, layers), t.constant(w)));
  }, store);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("mlm vocabulary keeps [UNK] at 0") {
  const auto v = MlmVocab::build(parse_raw_corpus("a b a c a b [MASK]"), 2);
  CHECK(v.size() == 3);
  CHECK(v.word(0) == "[UNK]");
  CHECK(v.id("a") == 1);
  CHECK(v.id("b") == 2);
  CHECK(v.id("c") == 0);
  CHECK(MlmVocab::from_text(v.to_text()) == v);
}

TEST_CASE("mlm_mask: rate zero and determinism") {
  const auto corpus = testing::toy_corpus(20);
  const auto vocab = MlmVocab::build(corpus, 100);
  MlmConfig none;
  none.mask_rate = 0.0;
  const auto& words = corpus.sentences[0];
  const auto ex = mlm_mask(words, vocab, none, 1);
  CHECK(ex.corrupted == words);
  CHECK(ex.selected.empty());
  for (int t : ex.targets) CHECK(t == -1);

  MlmConfig cfg;
  cfg.mask_rate = 0.5;
  const auto a = mlm_mask(words, vocab, cfg, 9);
  const auto b = mlm_mask(words, vocab, cfg, 9);
  CHECK(a.corrupted == b.corrupted);
  CHECK(a.targets == b.targets);
}

TEST_CASE("mlm_mask: split proportions") {
  std::vector<std::string> words(20000, "w");
  const auto vocab = MlmVocab::build(parse_raw_corpus("w x y z"), 10);
  MlmConfig cfg;
  const auto ex = mlm_mask(words, vocab, cfg, 3);
  const double selected = static_cast<double>(ex.selected.size());
  CHECK(selected / 20000.0 == doctest::Approx(0.15).epsilon(0.1));
  std::size_t masked = 0;
  for (auto i : ex.selected) masked += ex.corrupted[i] == "[MASK]";
  CHECK(static_cast<double>(masked) / selected == doctest::Approx(0.8).epsilon(0.05));
  for (auto i : ex.selected) CHECK(ex.targets[i] == vocab.id("w"));
}

TEST_CASE("mlm_loss: uniform logits and a peaked limit") {
  ParameterStore<double> store;
  Rng rng(8);
  MlmHead<double> head(4, 100, store, "mlm.", rng);
  store.get("mlm.w").value.fill(0.0);
  Tape<double> tape;
  const int targets[] = {5, -1, 42};
  auto l = mlm_loss(tape, tape.constant(Tensor<double>(Shape{3, 4}, 1.0)), targets, head);
  CHECK(l.count == 2);
  CHECK(l.loss.value()[0] == doctest::Approx(std::log(100.0)).epsilon(1e-12));
  CHECK(l.log_likelihood == doctest::Approx(-2.0 * std::log(100.0)));

  store.get("mlm.b").value[5] = 80.0;
  Tape<double> t2;
  const int only5[] = {5};
  auto peaked = mlm_loss(t2, t2.constant(Tensor<double>(Shape{1, 4}, 1.0)), only5, head);
  CHECK(peaked.loss.value()[0] < 1e-30);

  const int bad[] = {100};
  Tape<double> t3;
  CHECK_THROWS(mlm_loss(t3, t3.constant(Tensor<double>(Shape{1, 4})), bad, head));
}

TEST_CASE("grad_check: mlm head") {
  Rng rng(9);
  ParameterStore<double> store;
  MlmHead<double> head(6, 11, store, "mlm.", rng);
  auto& h = store.add("h", {4, 6});
  init_normal(h.value, 1.0, rng);
  init_normal(store.get("mlm.b").value, 0.5, rng);
  const int targets[] = {3, -1, 10, 0};
  auto r = grad_check([&](Tape<double>& t) { return mlm_loss(t, t.param(h), targets, head).loss; }, store);
  CHECK(r.max_rel_error < 1e-6);
}
