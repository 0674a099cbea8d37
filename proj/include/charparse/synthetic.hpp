#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "charparse/corpus.hpp"
#include "charparse/rng.hpp"

namespace charparse {

struct SyntheticConfig {
  std::uint64_t seed = 0;
  std::size_t nouns = 120;
  std::size_t verbs = 60;
  std::size_t adjectives = 40;
  std::size_t adverbs = 20;
  /// Fraction of content words whose ending marks their category; the rest
  /// share neutral endings and can only be told apart by their contexts.
  double cue_rate = 0.5;
  /// Zipf exponent of word choice within a category.
  double zipf = 1.0;
};

/// Small generative grammar with an Arabizi-looking lexicon (digits for
/// some consonants, category suffixes on part of the words) that emits sentences with
/// gold UPOS tags and dependency trees. Subject/object selection depends on
/// the verb, so context carries information a masked LM can learn.
class ToyGrammar {
 public:
  explicit ToyGrammar(const SyntheticConfig& config = {});

  Sentence sample(Rng& rng) const;
  std::vector<Sentence> treebank(std::size_t n, std::uint64_t seed) const;
  RawCorpus raw_corpus(std::size_t n, std::uint64_t seed) const;

  const std::vector<std::string>& nouns() const { return nouns_; }
  const std::vector<std::string>& verbs() const { return verbs_; }

 private:
  struct Node {
    std::string form, upos, deprel;
    int head = -1;  // 0-based index of the head token, -1 = root
  };
  const std::string& pick(const std::vector<std::string>& words, const std::vector<double>& cdf, Rng& rng) const;
  int noun_phrase(std::vector<Node>& out, int noun_class, int depth, Rng& rng) const;
  int clause(std::vector<Node>& out, Rng& rng) const;

  SyntheticConfig config_;
  std::vector<std::string> nouns_, verbs_, adjectives_, adverbs_;
  std::vector<double> noun_cdf_, verb_cdf_, adj_cdf_, adv_cdf_;
};

}  // namespace charparse
