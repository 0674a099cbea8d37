#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "charparse/corpus.hpp"
#include "charparse/encoder.hpp"
#include "charparse/parse_tree.hpp"

namespace charparse {

class Model;

/// Correct-token counts of one sentence.
struct SentenceCounts {
  std::size_t tokens = 0;
  std::size_t upos = 0;
  std::size_t heads = 0;
  std::size_t labeled = 0;
};

struct EvalReport {
  std::size_t tokens = 0;
  double upos = 0.0;  // percentages
  double uas = 0.0;
  double las = 0.0;
  std::vector<SentenceCounts> sentences;
};

/// Token-pooled UPOS/UAS/LAS, punctuation included, full label strings.
EvalReport score(std::span<const Sentence> gold, std::span<const ParseTree> pred);
EvalReport score(std::span<const Sentence> gold, std::span<const Sentence> pred);

/// Predictions as a tree per sentence (tags from UPOS).
ParseTree tree_of(const Sentence& s);

enum class Metric { upos, uas, las };
Metric parse_metric(std::string_view name);

/// Paired approximate randomization over sentences: p = (hits + 1) / (trials + 1)
/// where a hit is a shuffled gap at least as large as the observed one.
double significance(const EvalReport& a, const EvalReport& b, std::size_t trials, std::uint64_t seed,
                    Metric metric = Metric::las);

/// "UPOS/UAS/LAS" with two decimals.
std::string format_triplet(const EvalReport& r);

struct RobustnessRow {
  std::string system;
  EvalReport clean, noisy;
  /// Subword statistics; zero for the character pipeline.
  double unk_rate_clean = 0.0, unk_rate_noisy = 0.0;
  double pieces_clean = 0.0, pieces_noisy = 0.0;
};

struct RobustnessReport {
  std::vector<RobustnessRow> rows;
  std::string table() const;
  std::string tsv() const;
};

/// Share of words segmented as [UNK] and mean pieces per word.
std::pair<double, double> subword_statistics(const Model& subword_model, std::span<const Sentence> sentences);

/// Evaluates both models on clean and noise-injected copies of `treebank`.
RobustnessReport robustness_report(const Model& char_model, const Model& subword_model,
                                   std::span<const Sentence> treebank, const NoiseRuleSet& rules,
                                   const AggregationSpec& spec);

}  // namespace charparse
