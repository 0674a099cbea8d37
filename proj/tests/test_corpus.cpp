#include <doctest.h>

#include <set>

#include "charparse/corpus.hpp"
#include "charparse/synthetic.hpp"
#include "test_support.hpp"

using namespace charparse;

namespace {

const char* kTwoTokens =
    "1\tkol\t_\tDET\t_\t_\t2\tdet\t_\t_\n"
    "2\tnas\t_\tNOUN\t_\t_\t0\troot\t_\t_\n"
    "\n";

}  // namespace

TEST_CASE("parse_conllu: empty input yields no sentences") { CHECK(parse_conllu("").empty()); }

TEST_CASE("parse_conllu: two-token sentence") {
  const auto s = parse_conllu(kTwoTokens);
  REQUIRE(s.size() == 1);
  REQUIRE(s[0].size() == 2);
  CHECK(s[0].tokens[0].id == 1);
  CHECK(s[0].tokens[0].form == "kol");
  CHECK(s[0].tokens[0].upos == "DET");
  CHECK(s[0].tokens[0].head == 2);
  CHECK(s[0].tokens[0].deprel == "det");
  CHECK(s[0].tokens[1].form == "nas");
  CHECK(s[0].tokens[1].upos == "NOUN");
  CHECK(s[0].tokens[1].head == 0);
  CHECK(s[0].tokens[1].deprel == "root");
}

TEST_CASE("parse_conllu: non-integer head reports its line") {
  const std::string text =
      "# sent_id = 1\n"
      "1\tkol\t_\tDET\t_\t_\tabc\tdet\t_\t_\n"
      "2\tnas\t_\tNOUN\t_\t_\t0\troot\t_\t_\n\n";
  try {
    parse_conllu(text);
    FAIL("expected a parse error");
  } catch (const ConlluError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("non-integer head") != std::string::npos);
  }
}

TEST_CASE("parse_conllu: structural errors") {
  // wrong column count
  CHECK_THROWS_AS(parse_conllu("1\tkol\t_\tDET\n\n"), ConlluError);
  // duplicate id
  CHECK_THROWS_AS(parse_conllu("1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n1\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n"), ConlluError);
  // cycle without a root
  CHECK_THROWS_AS(parse_conllu("1\ta\t_\tX\t_\t_\t2\tdep\t_\t_\n2\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n"), ConlluError);
  // two roots
  const std::string two_roots = "1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n2\tb\t_\tX\t_\t_\t0\troot\t_\t_\n\n";
  CHECK_THROWS_AS(parse_conllu(two_roots), ConlluError);
  std::vector<std::string> warnings;
  CHECK(parse_conllu(two_roots, ConlluOptions{true}, &warnings).size() == 1);
  CHECK(warnings.size() == 1);
}

TEST_CASE("parse_conllu: multiword ranges and empty nodes are skipped") {
  const std::string text =
      "1-2\tdelo\t_\t_\t_\t_\t_\t_\t_\t_\n"
      "1\tde\t_\tADP\t_\t_\t2\tcase\t_\t_\n"
      "2\tlo\t_\tPRON\t_\t_\t0\troot\t_\t_\n"
      "2.1\tx\t_\t_\t_\t_\t_\t_\t_\t_\n\n";
  const auto s = parse_conllu(text);
  REQUIRE(s.size() == 1);
  CHECK(s[0].size() == 2);
}

TEST_CASE("write_conllu: round trip, empty list, prediction length") {
  const auto s = parse_conllu(kTwoTokens);
  CHECK(write_conllu(s) == kTwoTokens);
  CHECK(parse_conllu(write_conllu(s)) == s);
  CHECK(write_conllu(std::vector<Sentence>{}).empty());

  ParseTree bad;
  bad.heads = {0};
  bad.labels = {"root"};
  const std::vector<ParseTree> preds{bad};
  CHECK_THROWS(write_conllu(s, std::span<const ParseTree>(preds)));

  ParseTree good;
  good.heads = {0, 1};
  good.labels = {"root", "dep"};
  const std::vector<ParseTree> ok{good};
  const auto back = parse_conllu(write_conllu(s, std::span<const ParseTree>(ok)));
  CHECK(back[0].tokens[0].head == 0);
  CHECK(back[0].tokens[1].deprel == "dep");
}

TEST_CASE("write_conllu: round trip of a generated treebank") {
  const auto tb = testing::toy_treebank(50);
  CHECK(parse_conllu(write_conllu(tb)) == tb);
}

TEST_CASE("top_k_words") {
  CHECK(top_k_words(parse_raw_corpus("a b a"), 2) == std::vector<WordCount>{{"a", 2}, {"b", 1}});
  CHECK(top_k_words(parse_raw_corpus("a b a"), 10).size() == 2);
  CHECK(top_k_words(parse_raw_corpus("b a"), 2) == std::vector<WordCount>{{"a", 1}, {"b", 1}});
  CHECK_THROWS(top_k_words(RawCorpus{}, 3));
}

TEST_CASE("raw corpus reading drops blank lines") {
  const auto c = parse_raw_corpus("a  b\n\n  \nc\n");
  CHECK(c.sentence_count() == 2);
  CHECK(c.token_count() == 3);
}

TEST_CASE("vocab_coverage") {
  const auto corpus = parse_raw_corpus("a b c");
  CHECK(vocab_coverage({"a", "b"}, corpus).fraction == doctest::Approx(2.0 / 3.0));
  CHECK(vocab_coverage({"a", "b", "c", "d"}, corpus).fraction == 1.0);
  CHECK(vocab_coverage({"x"}, corpus).fraction == 0.0);
  const auto r = vocab_coverage({"a"}, corpus, [](const std::string& w) { return w == "a" ? 1u : 2u; });
  CHECK(r.mean_segments == doctest::Approx(5.0 / 3.0));
}

TEST_CASE("inject_noise: zero rates are the identity") {
  NoiseRuleSet rules;
  rules.word_probability = 1.0;
  const auto tb = testing::toy_treebank(20);
  CHECK(inject_noise(tb, rules) == tb);
}

TEST_CASE("inject_noise: deterministic for a fixed seed") {
  const auto tb = testing::toy_treebank(20);
  const auto rules = default_noise_rules(0.5, 7);
  const auto a = inject_noise(tb, rules);
  CHECK(a == inject_noise(tb, rules));
  CHECK(a != tb);
  auto other = rules;
  other.seed = 8;
  CHECK(inject_noise(tb, other) != a);
}

TEST_CASE("inject_noise: substitution rule") {
  Sentence s = parse_conllu("1\tbeaucoup\t_\tADV\t_\t_\t0\troot\t_\t_\n\n")[0];
  NoiseRuleSet rules;
  rules.word_probability = 1.0;
  rules.rules.push_back({"ou", "u", 1.0});
  CHECK(inject_noise(s, rules).tokens[0].form == "beaucup");
}

TEST_CASE("inject_noise: annotation is untouched") {
  const auto tb = testing::toy_treebank(10);
  const auto noisy = inject_noise(tb, default_noise_rules(1.0, 3));
  for (std::size_t i = 0; i < tb.size(); ++i) {
    for (std::size_t k = 0; k < tb[i].size(); ++k) {
      CHECK(noisy[i].tokens[k].head == tb[i].tokens[k].head);
      CHECK(noisy[i].tokens[k].upos == tb[i].tokens[k].upos);
      CHECK(!noisy[i].tokens[k].form.empty());
    }
  }
}

TEST_CASE("noise rules survive their config form") {
  const auto rules = default_noise_rules(0.3, 11);
  Config cfg = rules.to_config();
  Config reparsed = Config::parse(cfg.to_string());
  const auto back = NoiseRuleSet::from_config(reparsed);
  const auto tb = testing::toy_treebank(10);
  CHECK(inject_noise(tb, back) == inject_noise(tb, rules));
}

TEST_CASE("synthetic treebank is well formed and deterministic") {
  ToyGrammar g;
  const auto a = g.treebank(40, 5);
  CHECK(a == g.treebank(40, 5));
  for (const auto& s : a) {
    std::vector<int> heads;
    for (const auto& t : s.tokens) heads.push_back(t.head);
    CHECK(is_single_rooted_tree(heads));
  }
  CHECK(g.raw_corpus(30, 1).sentence_count() == 30);
}
