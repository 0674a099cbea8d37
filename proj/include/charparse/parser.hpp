#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charparse/autodiff.hpp"
#include "charparse/config.hpp"
#include "charparse/corpus.hpp"
#include "charparse/parse_tree.hpp"

namespace charparse {

struct ParserConfig {
  std::size_t word_dim = 64;
  std::size_t tag_dim = 32;
  std::size_t tagger_hidden = 128;
  std::size_t arc_dim = 128;
  std::size_t label_dim = 64;
  double dropout = 0.2;
  bool lowercase = false;
  std::size_t min_word_freq = 2;
  /// Training-time probability of replacing a rare in-vocabulary word
  /// (count <= min_word_freq) with the UNK row.
  double unk_replace = 0.25;

  void validate() const;
  static ParserConfig from_config(Config& cfg, const std::string& prefix = "parser.");
  void to_config(Config& cfg, const std::string& prefix = "parser.") const;
};

/// Closed word, tag and label sets of a training treebank. Word id 0 is the
/// UNK row; unknown tags and labels map to -1.
class TreebankVocab {
 public:
  static TreebankVocab build(std::span<const Sentence> train, const ParserConfig& config);

  int word_id(std::string_view form) const;
  int tag_id(std::string_view tag) const;
  int label_id(std::string_view label) const;
  std::size_t word_frequency(int id) const { return counts_.at(static_cast<std::size_t>(id)); }

  const std::vector<std::string>& words() const { return words_; }
  const std::vector<std::string>& tags() const { return tags_; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::string to_text() const;
  static TreebankVocab from_text(std::string_view text);
  bool operator==(const TreebankVocab& o) const {
    return words_ == o.words_ && counts_ == o.counts_ && tags_ == o.tags_ && labels_ == o.labels_ &&
           lowercase_ == o.lowercase_;
  }

 private:
  void reindex();

  bool lowercase_ = false;
  std::vector<std::string> words_;
  std::vector<std::size_t> counts_;
  std::vector<std::string> tags_, labels_;
  std::unordered_map<std::string, int> word_index_, tag_index_, label_index_;
};

/// Gold annotation as ids; unknown tags/labels are -1 and ignored by the loss.
struct GoldIds {
  std::vector<int> heads;
  std::vector<int> labels;
  std::vector<int> tags;
};
GoldIds gold_ids(const Sentence& sentence, const TreebankVocab& vocab);

template <typename T>
struct ArcLabelHeads {
  Var<T> arc_head;    // [(n+1) x arc_dim], row 0 = ROOT
  Var<T> arc_dep;     // [n x arc_dim]
  Var<T> label_head;  // [(n+1) x label_dim]
  Var<T> label_dep;   // [n x label_dim]
};

/// MLP tagger plus biaffine arc and label scorers over
/// concat(word embedding, LM vector, tag embedding).
template <typename T>
class BiaffineParser {
 public:
  BiaffineParser(const ParserConfig& config, const TreebankVocab& vocab, std::size_t lm_dim,
                 ParameterStore<T>& store, const std::string& prefix, Rng& rng);

  Var<T> word_embeddings(Tape<T>& tape, std::span<const int> word_ids) const;
  /// [n x |tags|] from concat(word embedding, LM vector).
  Var<T> tag_logits(Var<T> word_emb, Var<T> lm) const;
  /// [n x d_repr] = concat(word embedding, LM vector, tag embedding).
  Var<T> representation(Var<T> word_emb, Var<T> lm, std::span<const int> tag_ids) const;
  ArcLabelHeads<T> project(Var<T> repr) const;
  /// [(n+1) x n]; entry (i, i-1), the self-arc of token i, is -inf.
  Var<T> arc_scores(const ArcLabelHeads<T>& h) const;
  /// [(n+1) x n x |labels|].
  Var<T> label_scores(const ArcLabelHeads<T>& h) const;
  /// Label scores of the arcs heads[i] -> i+1 only: [n x |labels|].
  Var<T> label_scores_at(const ArcLabelHeads<T>& h, std::span<const int> heads) const;

  std::size_t repr_dim() const { return config_.word_dim + lm_dim_ + config_.tag_dim; }
  std::size_t tag_count() const { return n_tags_; }
  std::size_t label_count() const { return n_labels_; }
  const ParserConfig& config() const { return config_; }

 private:
  Var<T> mlp(Var<T> x, Parameter<T>* w, Parameter<T>* b) const;

  ParserConfig config_;
  std::size_t lm_dim_, n_tags_, n_labels_;
  Parameter<T>*word_emb_, *tag_emb_, *root_;
  Parameter<T>*tag_w1_, *tag_b1_, *tag_w2_, *tag_b2_;
  Parameter<T>*arc_head_w_, *arc_head_b_, *arc_dep_w_, *arc_dep_b_, *arc_u_, *arc_bias_;
  Parameter<T>*lab_head_w_, *lab_head_b_, *lab_dep_w_, *lab_dep_b_, *lab_u_, *lab_wh_, *lab_wd_, *lab_b_;
};

/// (CE(arcs) + CE(labels of gold arcs) + lambda_tag * CE(tags)) / n.
/// label_at_gold comes from label_scores_at(gold heads).
template <typename T>
Var<T> parse_loss(Var<T> arc, Var<T> label_at_gold, Var<T> tag_logits, const GoldIds& gold, double lambda_tag);

}  // namespace charparse
