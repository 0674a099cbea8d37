#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "charparse/evaluation.hpp"
#include "charparse/model.hpp"
#include "test_support.hpp"

using namespace charparse;

namespace {

Sentence three_tokens() {
  Sentence s;
  s.tokens = {{1, "a", "_", "NOUN", "_", "_", 2, "nsubj"},
              {2, "b", "_", "VERB", "_", "_", 0, "root"},
              {3, "c", "_", "NOUN", "_", "_", 2, "obj"}};
  return s;
}

// n one-token sentences, each either fully right or fully wrong.
EvalReport outcomes(const std::vector<bool>& right) {
  std::vector<Sentence> gold;
  std::vector<ParseTree> pred;
  for (bool r : right) {
    Sentence s;
    s.tokens = {{1, "w", "_", "X", "_", "_", 0, "root"}};
    gold.push_back(s);
    pred.push_back(r ? ParseTree{{0}, {"root"}, {"X"}} : ParseTree{{1}, {"dep"}, {"Y"}});
  }
  return score(gold, pred);
}

}  // namespace

TEST_CASE("score: identity gives 100/100/100") {
  const auto gold = testing::toy_treebank(5);
  const auto r = score(gold, gold);
  CHECK(format_triplet(r) == "100.00/100.00/100.00");
  CHECK(r.tokens == std::accumulate(gold.begin(), gold.end(), std::size_t{0},
                                    [](std::size_t n, const Sentence& s) { return n + s.size(); }));
}

TEST_CASE("score: direct count example") {
  const std::vector<Sentence> gold{three_tokens()};
  const std::vector<ParseTree> pred{{{2, 0, 1}, {"nsubj", "dep", "obj"}, {"NOUN", "VERB", "NOUN"}}};
  const auto r = score(gold, pred);
  CHECK(r.upos == doctest::Approx(100.0));
  CHECK(r.uas == doctest::Approx(200.0 / 3.0));
  CHECK(r.las == doctest::Approx(100.0 / 3.0));
  CHECK(format_triplet(r) == "100.00/66.67/33.33");
  REQUIRE(r.sentences.size() == 1);
  CHECK(r.sentences[0].heads == 2);
  CHECK(r.sentences[0].labeled == 1);
}

TEST_CASE("score: errors and invariants") {
  CHECK_THROWS(score(std::vector<Sentence>{}, std::vector<ParseTree>{}));
  const std::vector<Sentence> gold{three_tokens()};
  CHECK_THROWS(score(gold, std::vector<ParseTree>{}));
  CHECK_THROWS(score(gold, std::vector<ParseTree>{{{0}, {"root"}, {"X"}}}));

  auto gold_many = testing::toy_treebank(12);
  auto pred = gold_many;
  for (std::size_t i = 0; i < pred.size(); i += 2) pred[i].tokens[0].deprel = "other";
  for (std::size_t i = 0; i < pred.size(); i += 3) pred[i].tokens.back().head = 0;
  const auto r = score(gold_many, pred);
  CHECK(r.las <= r.uas);
  CHECK(r.uas <= 100.0);
  std::reverse(gold_many.begin(), gold_many.end());
  std::reverse(pred.begin(), pred.end());
  const auto rev = score(gold_many, pred);
  CHECK(rev.las == r.las);
  CHECK(rev.uas == r.uas);
}

TEST_CASE("significance: identical systems give p = 1") {
  const auto a = outcomes(std::vector<bool>(20, true));
  CHECK(significance(a, a, 1000, 1) == 1.0);
}

TEST_CASE("significance: all right against all wrong") {
  const auto a = outcomes(std::vector<bool>(20, true));
  const auto b = outcomes(std::vector<bool>(20, false));
  const double p = significance(a, b, 10000, 3);
  CHECK(p < 0.01);
  CHECK(p > 0.0);
  CHECK(significance(a, b, 10000, 3) == p);
}

TEST_CASE("significance: symmetric and monotone in the gap") {
  std::vector<bool> base(30, false);
  const auto b = outcomes(base);
  double previous = 2.0;
  for (std::size_t k = 0; k <= 10; k += 2) {
    std::vector<bool> right(30, false);
    std::fill(right.begin(), right.begin() + static_cast<std::ptrdiff_t>(k), true);
    const auto a = outcomes(right);
    const double p = significance(a, b, 2000, 11);
    CHECK(p <= previous);
    previous = p;
    CHECK(significance(b, a, 2000, 12) == doctest::Approx(p).epsilon(0.1 + 0.05 / p));
  }
  CHECK_THROWS(significance(outcomes(base), outcomes(std::vector<bool>(29, false)), 1000, 1));
  CHECK_THROWS(significance(b, b, 10, 1));
}

TEST_CASE("robustness: identity noise leaves every metric unchanged") {
  const auto corpus = testing::toy_corpus(60);
  const auto train = testing::toy_treebank(10, 3);
  Model ch = Model::create(testing::tiny_model_config(EmbeddingSource::character), corpus, 1);
  Model sw = Model::create(testing::tiny_model_config(EmbeddingSource::subword), corpus, 1);
  ch.attach_task(TreebankVocab::build(train, ch.config().parser), 2);
  sw.attach_task(TreebankVocab::build(train, sw.config().parser), 2);
  AggregationSpec spec;
  spec.normalize(2);
  const auto treebank = testing::toy_treebank(15, 9);
  const auto r = robustness_report(ch, sw, treebank, NoiseRuleSet{}, spec);
  REQUIRE(r.rows.size() == 2);
  for (const auto& row : r.rows) {
    CHECK(format_triplet(row.noisy) == format_triplet(row.clean));
    CHECK(row.unk_rate_noisy == row.unk_rate_clean);
    CHECK(row.pieces_noisy == row.pieces_clean);
  }
  const auto again = robustness_report(ch, sw, treebank, NoiseRuleSet{}, spec);
  CHECK(again.tsv() == r.tsv());
  CHECK(r.table().find("char") != std::string::npos);
}

TEST_CASE("robustness: noise raises the subword UNK rate") {
  const auto corpus = testing::toy_corpus(80);
  Model sw = Model::create(testing::tiny_model_config(EmbeddingSource::subword), corpus, 1);
  const auto treebank = testing::toy_treebank(200, 9);
  const auto noisy = inject_noise(treebank, default_noise_rules(0.5, 4));
  std::size_t tokens = 0;
  for (const auto& s : treebank) tokens += s.size();
  REQUIRE(tokens >= 1000);
  const auto clean_stats = subword_statistics(sw, treebank);
  const auto noisy_stats = subword_statistics(sw, noisy);
  CHECK(noisy_stats.first >= clean_stats.first);
  CHECK(noisy_stats.second >= 1.0);
}
