#include <doctest.h>

#include "charparse/grad_check.hpp"
#include "charparse/subword.hpp"
#include "test_support.hpp"

using namespace charparse;

namespace {

std::string specials_text() { return "[PAD]\n[UNK]\n[CLS]\n[SEP]\n[MASK]\n"; }

}  // namespace

TEST_CASE("train_subword_vocab: one merge on 'aa aa aa'") {
  const auto corpus = parse_raw_corpus("aa aa aa");
  const std::size_t base = SubwordVocab::base_size(corpus);
  CHECK(base == SubwordVocab::kSpecialCount + 2);
  const auto v = SubwordVocab::train(corpus, base + 1);
  CHECK(v.size() == base + 1);
  CHECK(v.merge_count() == 1);
  CHECK(v.pieces().back() == "aa");
  CHECK(v.segment("aa") == std::vector<int>{v.id("aa")});
}

TEST_CASE("train_subword_vocab: base size means no merges") {
  const auto corpus = parse_raw_corpus("kol nas wahed");
  const auto v = SubwordVocab::train(corpus, SubwordVocab::base_size(corpus));
  CHECK(v.merge_count() == 0);
  const auto seg = v.segment("kol");
  CHECK(seg == std::vector<int>{v.id("k"), v.id("##o"), v.id("##l")});
  CHECK_THROWS(SubwordVocab::train(corpus, SubwordVocab::base_size(corpus) - 1));
}

TEST_CASE("train_subword_vocab: deterministic and bounded") {
  const auto corpus = testing::toy_corpus(300);
  const auto a = SubwordVocab::train(corpus, 200);
  CHECK(a == SubwordVocab::train(corpus, 200));
  CHECK(a.size() <= 200);
}

TEST_CASE("train_subword_vocab: merges follow a hand run") {
  // counts: (a,##b)=3 via "ab"x2 and "abc"; (##b,##c)=1
  const auto corpus = parse_raw_corpus("ab ab abc");
  const auto base = SubwordVocab::base_size(corpus);
  const auto v = SubwordVocab::train(corpus, base + 2);
  REQUIRE(v.merge_count() == 2);
  CHECK(v.pieces()[base] == "ab");
  CHECK(v.pieces()[base + 1] == "abc");
}

TEST_CASE("segment: verbatim word, out-of-inventory character, longest match") {
  const auto v = SubwordVocab::from_text(specials_text() + "a\n##a\nb\n##b\naa\n##aa\n");
  CHECK(v.segment("aa") == std::vector<int>{v.id("aa")});
  CHECK(v.segment("az") == std::vector<int>{SubwordVocab::kUnkId});
  CHECK(v.segment("aab") == std::vector<int>{v.id("aa"), v.id("##b")});
  CHECK(v.segment("aaaa") == std::vector<int>{v.id("aa"), v.id("##aa")});
  CHECK(v.segment("[MASK]") == std::vector<int>{SubwordVocab::kMaskId});
}

TEST_CASE("subword vocabulary text round trip") {
  const auto v = SubwordVocab::train(testing::toy_corpus(100), 150);
  const auto back = SubwordVocab::from_text(v.to_text());
  CHECK(back == v);
  CHECK(back.merge_count() == v.merge_count());
  CHECK(back.segment("zouhayat") == v.segment("zouhayat"));
}

TEST_CASE("embed_subwords_and_average: one piece and two pieces") {
  Tape<double> tape;
  Tensor<double> pieces(Shape{3, 2}, std::vector<double>{1, 2, 3, 4, 5, 8});
  const std::size_t counts[] = {1, 2};
  const auto out = average_pieces(tape.constant(pieces), std::span<const std::size_t>(counts)).value();
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 2.0);
  CHECK(out(1, 0) == 4.0);
  CHECK(out(1, 1) == 6.0);
  const std::size_t ones[] = {1, 1, 1};
  CHECK(average_pieces(tape.constant(pieces), std::span<const std::size_t>(ones)).value().storage() ==
        pieces.storage());
}

TEST_CASE("grad_check: averaging path") {
  Rng rng(4);
  ParameterStore<double> store;
  SubwordEmbedding<double> emb(12, 5, store, "s.", rng);
  const int ids[] = {3, 7, 7, 1, 11, 0};
  const std::size_t counts[] = {2, 1, 3};
  Tensor<double> w(Shape{3, 5});
  for (auto& x : w.values()) x = rng.normal();
  auto r = grad_check([&](Tape<double>& t) {
    auto words = average_pieces(emb.embed(t, ids), std::span<const std::size_t>(counts));
    return ad::sum_all(ad::mul(words, t.constant(w)));
  }, store);
  CHECK(r.max_rel_error < 1e-6);
}
