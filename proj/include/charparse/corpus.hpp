#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <istream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "charparse/config.hpp"
#include "charparse/parse_tree.hpp"

namespace charparse {

/// One syntactic word of a CoNLL-U sentence. LEMMA, XPOS, FEATS, DEPS and
/// MISC are carried through untouched.
struct Token {
  int id = 0;
  std::string form;
  std::string lemma = "_";
  std::string upos;
  std::string xpos = "_";
  std::string feats = "_";
  int head = 0;
  std::string deprel;
  std::string deps = "_";
  std::string misc = "_";

  bool operator==(const Token&) const = default;
};

struct Sentence {
  std::vector<Token> tokens;
  std::vector<std::string> comments;

  std::size_t size() const { return tokens.size(); }
  std::vector<std::string> forms() const;
  bool operator==(const Sentence&) const = default;
};

class ConlluError : public std::runtime_error {
 public:
  ConlluError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct ConlluOptions {
  /// Downgrades "multiple roots" from an error to a warning.
  bool allow_multi_root = false;
};

std::vector<Sentence> parse_conllu(std::string_view text, const ConlluOptions& options = {},
                                   std::vector<std::string>* warnings = nullptr);
std::vector<Sentence> read_conllu(const std::filesystem::path& path,
                                  const ConlluOptions& options = {},
                                  std::vector<std::string>* warnings = nullptr);

/// Serializes sentences; when predictions are given, HEAD and DEPREL (and
/// UPOS, if the tree carries tags) come from them.
std::string write_conllu(std::span<const Sentence> sentences,
                         std::optional<std::span<const ParseTree>> predictions = std::nullopt);

/// Whitespace-tokenized raw text, one sentence per line. Blank lines are
/// dropped so every stored sentence is non-empty.
struct RawCorpus {
  std::vector<std::vector<std::string>> sentences;

  std::size_t sentence_count() const { return sentences.size(); }
  std::size_t token_count() const;
};

/// Single-consumer streaming reader over a raw corpus file.
class RawCorpusReader {
 public:
  explicit RawCorpusReader(std::istream& in) : in_(in) {}
  /// Returns false at end of input.
  bool next(std::vector<std::string>& sentence);

 private:
  std::istream& in_;
};

RawCorpus parse_raw_corpus(std::string_view text);
RawCorpus read_raw_corpus(const std::filesystem::path& path);
std::vector<std::string> split_whitespace(std::string_view line);

using WordCount = std::pair<std::string, std::size_t>;

/// Most frequent words, by descending count then lexicographic order.
std::vector<WordCount> top_k_words(const RawCorpus& corpus, std::size_t k);

struct CoverageReport {
  std::size_t tokens = 0;
  std::size_t covered = 0;
  /// Fraction of running tokens found verbatim in the vocabulary.
  double fraction = 0.0;
  /// Mean number of segments per token; 0 when no segmenter was supplied.
  double mean_segments = 0.0;
};

using Segmenter = std::function<std::size_t(const std::string&)>;

CoverageReport vocab_coverage(const std::unordered_set<std::string>& vocab, const RawCorpus& corpus,
                              const Segmenter& segmenter = {});

// Orthographic noise --------------------------------------------------------

struct SubstitutionRule {
  std::string pattern;
  std::string replacement;
  /// Probability of rewriting each occurrence inside a selected word.
  double probability = 1.0;
};

struct NoiseRuleSet {
  std::vector<SubstitutionRule> rules;
  /// Probability that a word is selected for noising at all.
  double word_probability = 0.0;
  double insert_rate = 0.0;
  double delete_rate = 0.0;
  double substitute_rate = 0.0;
  double duplicate_rate = 0.0;
  /// Characters drawn by insert/substitute edits.
  std::string alphabet = "abcdefghijklmnopqrstuvwxyz3579";
  std::uint64_t seed = 0;

  void validate() const;
  static NoiseRuleSet from_config(Config& cfg);
  Config to_config() const;
};

/// Arabizi-flavoured defaults: digit romanizations (3/7/9/5), vowel drops
/// and consonant doubling through the duplicate edit.
NoiseRuleSet default_noise_rules(double word_probability = 0.3, std::uint64_t seed = 0);

/// Rewrites token forms only. `stream` selects an independent random stream
/// so that sentence i of a corpus can be noised with stream i.
Sentence inject_noise(const Sentence& sentence, const NoiseRuleSet& rules, std::uint64_t stream = 0);

std::vector<Sentence> inject_noise(std::span<const Sentence> sentences, const NoiseRuleSet& rules);

}  // namespace charparse
