#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "charparse/char_encoder.hpp"
#include "charparse/grad_check.hpp"
#include "charparse/specials.hpp"

using namespace charparse;

namespace {

Var<double> weighted_sum(Tape<double>& t, Var<double> x, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<double> w(x.shape());
  for (auto& v : w.values()) v = rng.normal();
  return ad::sum_all(ad::mul(x, t.constant(w)));
}

std::vector<int> flatten(const CharVocab& v, std::span<const std::string> words, std::size_t max_len) {
  std::vector<int> ids;
  for (const auto& w : words) {
    auto row = v.encode(w, max_len);
    ids.insert(ids.end(), row.begin(), row.end());
  }
  return ids;
}

}  // namespace

TEST_CASE("encode_chars: empty word") {
  CharVocab v = CharVocab::build(parse_raw_corpus("abc"));
  const auto ids = v.encode("", 5);
  REQUIRE(ids.size() == 7);
  CHECK(ids[0] == CharVocab::kBow);
  CHECK(ids[1] == CharVocab::kEow);
  for (std::size_t i = 2; i < ids.size(); ++i) CHECK(ids[i] == CharVocab::kPad);
}

TEST_CASE("encode_chars: special word is one pseudo-character") {
  CharVocab v = CharVocab::build(parse_raw_corpus("abc"));
  const auto ids = v.encode("[MASK]", 5);
  CHECK(ids[0] == CharVocab::kBow);
  CHECK(ids[1] == CharVocab::special_id("[MASK]"));
  CHECK(ids[1] >= CharVocab::kFirstSpecialWord);
  CHECK(ids[1] < CharVocab::kReserved);
  CHECK(ids[2] == CharVocab::kEow);
  CHECK(ids[3] == CharVocab::kPad);
  std::set<int> distinct;
  for (auto w : kSpecialWords) distinct.insert(CharVocab::special_id(w));
  CHECK(distinct.size() == kSpecialWords.size());
}

TEST_CASE("encode_chars: digits are ordinary characters") {
  CharVocab v = CharVocab::build(parse_raw_corpus("wa3lach w3alh 3alach"));
  const auto ids = v.encode("wa3lach", 10);
  CHECK(ids[0] == CharVocab::kBow);
  const std::string word = "wa3lach";
  for (std::size_t i = 0; i < word.size(); ++i) {
    CHECK(ids[i + 1] == v.id(static_cast<char32_t>(word[i])));
    CHECK(ids[i + 1] >= CharVocab::kReserved);
  }
  CHECK(ids[8] == CharVocab::kEow);
  CHECK(ids[9] == CharVocab::kPad);
}

TEST_CASE("encode_chars: unseen characters and truncation") {
  CharVocab v = CharVocab::build(parse_raw_corpus("ab"));
  CHECK(v.encode("az", 4)[2] == CharVocab::kUnk);
  const auto ids = v.encode("abababab", 3);
  CHECK(ids.size() == 5);
  CHECK(ids[4] == CharVocab::kEow);
}

TEST_CASE("char vocabulary text round trip keeps ids") {
  CharVocab v = CharVocab::build(parse_raw_corpus("wa3lach é ç"));
  CharVocab back = CharVocab::from_text(v.to_text());
  CHECK(back == v);
  CHECK(back.encode("wa3é", 6) == v.encode("wa3é", 6));
}

TEST_CASE("embed_words: same word gives identical rows, batch width does not matter") {
  Rng rng(3);
  ParameterStore<double> store;
  CharEncoderConfig cfg;
  cfg.d_model = 16;
  cfg.kernels = {{1, 4}, {2, 4}, {3, 4}};
  cfg.max_word_len = 12;
  CharVocab v = CharVocab::build(parse_raw_corpus("kol nas wahed sbe7 mezyan"));
  CharEncoder<double> enc(cfg, v.size(), store, "c.", rng);
  const std::vector<std::string> words = {"nas", "mezyan", "nas", "kol"};
  Tape<double> tape;
  const auto full = enc.embed(tape, flatten(v, words, cfg.max_word_len), words.size()).value();
  const auto b = v.encode_batch(words, cfg.max_word_len, enc.min_width());
  const auto tight = enc.embed(tape, b.ids, words.size()).value();
  CHECK(b.width < cfg.padded_len());
  CHECK(full.storage() == tight.storage());
  for (std::size_t d = 0; d < 16; ++d) CHECK(full(0, d) == full(2, d));
  const std::vector<std::string> alone = {"nas"};
  const auto single = enc.embed(tape, v.encode_batch(alone, cfg.max_word_len, enc.min_width()).ids, 1).value();
  for (std::size_t d = 0; d < 16; ++d) CHECK(single(0, d) == full(0, d));
}

TEST_CASE("embed_words: width-1 identity filter gives the elementwise max") {
  ParameterStore<double> store;
  Rng rng(1);
  CharEncoderConfig cfg;
  cfg.char_emb_dim = 1;
  cfg.kernels = {{1, 1}};
  cfg.n_highway = 0;
  cfg.d_model = 1;
  cfg.max_word_len = 4;
  cfg.conv_activation = Activation::identity;
  CharVocab v = CharVocab::build(parse_raw_corpus("ab"));
  CharEncoder<double> enc(cfg, v.size(), store, "c.", rng);
  auto& e = enc.char_embedding().value;
  e.fill(-100.0);
  e[static_cast<std::size_t>(v.id(U'a'))] = 0.3;
  e[static_cast<std::size_t>(v.id(U'b'))] = 1.7;
  enc.conv_weight(0).value.fill(1.0);
  enc.conv_bias(0).value.fill(0.0);
  enc.projection().value.fill(1.0);
  enc.projection_bias().value.fill(0.0);
  Tape<double> tape;
  CHECK(enc.embed(tape, v.encode("ab", 4), 1).value()[0] == doctest::Approx(1.7));
  e[static_cast<std::size_t>(v.id(U'a'))] = 2.5;
  Tape<double> tape2;
  CHECK(enc.embed(tape2, v.encode("ab", 4), 1).value()[0] == doctest::Approx(2.5));
}

TEST_CASE("embed_words rejects malformed batches") {
  ParameterStore<double> store;
  Rng rng(1);
  CharEncoderConfig cfg;
  cfg.d_model = 8;
  cfg.max_word_len = 6;
  CharEncoder<double> enc(cfg, 20, store, "c.", rng);
  Tape<double> tape;
  std::vector<int> ids(3 * 8, 0);
  CHECK_THROWS(enc.embed(tape, ids, 2));
  std::vector<int> bad(8, 99);
  CHECK_THROWS(enc.embed(tape, bad, 1));
}

TEST_CASE("highway gate limits") {
  Rng rng(8);
  Tensor<double> x(Shape{3, 8}), wh(Shape{8, 8}), bh(Shape{8}), wt(Shape{8, 8});
  for (auto* t : {&x, &wh, &bh, &wt}) {
    for (auto& v : t->values()) v = rng.normal();
  }
  Tape<double> tape;
  auto X = tape.constant(x);
  auto carry = highway(X, tape.constant(wh), tape.constant(bh), tape.constant(wt),
                       tape.constant(Tensor<double>(Shape{8}, -1e3)));
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(carry.value()[i] == doctest::Approx(x[i]));
  auto transform = highway(X, tape.constant(wh), tape.constant(bh), tape.constant(wt),
                           tape.constant(Tensor<double>(Shape{8}, 1e3)));
  const auto expected = ad::relu(ad::add(ad::matmul(X, tape.constant(wh)), tape.constant(bh))).value();
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(transform.value()[i] == doctest::Approx(expected[i]));
}

TEST_CASE("grad_check: highway d=8") {
  Rng rng(12);
  ParameterStore<double> store;
  auto& x = store.add("x", {4, 8});
  auto& wh = store.add("wh", {8, 8});
  auto& bh = store.add("bh", {8});
  auto& wt = store.add("wt", {8, 8});
  auto& bt = store.add("bt", {8});
  for (std::size_t i = 0; i < store.size(); ++i) init_normal(store[i].value, 0.7, rng);
  auto r = grad_check([&](Tape<double>& t) {
    return weighted_sum(t, highway(t.param(x), t.param(wh), t.param(bh), t.param(wt), t.param(bt)), 1);
  }, store);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("grad_check: char encoder d=16, widths 1..3") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Rng rng(seed);
    ParameterStore<double> store;
    CharEncoderConfig cfg;
    cfg.char_emb_dim = 4;
    cfg.kernels = {{1, 3}, {2, 3}, {3, 3}};
    cfg.d_model = 16;
    cfg.max_word_len = 8;
    CharVocab v = CharVocab::build(parse_raw_corpus("kol nas 3la sbe7"));
    CharEncoder<double> enc(cfg, v.size(), store, "c.", rng);
    const std::vector<std::string> words = {"kol", "sbe7", "3la", "x"};
    const auto b = v.encode_batch(words, cfg.max_word_len, enc.min_width());
    auto r = grad_check([&](Tape<double>& t) { return weighted_sum(t, enc.embed(t, b.ids, words.size()), seed); },
                        store, GradCheckOptions{1e-6, 12, seed});
    CHECK(r.max_rel_error < 1e-5);
  }
}
