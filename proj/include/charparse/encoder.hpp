#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charparse/autodiff.hpp"
#include "charparse/config.hpp"
#include "charparse/corpus.hpp"

namespace charparse {

enum class EmbeddingSource { character, subword };
EmbeddingSource parse_embedding_source(std::string_view name);
std::string_view embedding_source_name(EmbeddingSource s);

struct EncoderConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  std::size_t d_ff = 512;
  std::size_t max_seq_len = 128;
  double dropout = 0.1;
  EmbeddingSource source = EmbeddingSource::character;

  void validate() const;
  static EncoderConfig from_config(Config& cfg, const std::string& prefix = "encoder.");
  void to_config(Config& cfg, const std::string& prefix = "encoder.") const;
};

template <typename T>
struct EncoderOutput {
  /// hidden[j] is the output of block j, [n x d_model].
  std::vector<Var<T>> hidden;
  /// attention[j] holds block j's attention weights, [heads x n x n].
  std::vector<Var<T>> attention;
};

/// Post-LN transformer encoder with learned absolute positions.
template <typename T>
class TransformerEncoder {
 public:
  TransformerEncoder(const EncoderConfig& config, ParameterStore<T>& store, const std::string& prefix, Rng& rng);

  /// `valid` marks real positions (empty: all real). Keys at padding
  /// positions are masked out of every attention row.
  EncoderOutput<T> encode(Tape<T>& tape, Var<T> embeddings, std::span<const bool> valid = {},
                          bool trainable = true) const;

  const EncoderConfig& config() const { return config_; }
  Parameter<T>& position_embeddings() { return *pos_; }

 private:
  struct Block {
    Parameter<T>*wq, *bq, *wk, *wv, *bv, *wo, *bo;
    Parameter<T>*ln1_g, *ln1_b;
    Parameter<T>*w1, *b1, *w2, *b2;
    Parameter<T>*ln2_g, *ln2_b;
  };

  Var<T> attend(Tape<T>& tape, const Block& b, Var<T> x, const Tensor<T>& key_mask, bool trainable,
                std::vector<Var<T>>& attention) const;

  EncoderConfig config_;
  Parameter<T>* pos_;
  Parameter<T>*emb_ln_g_, *emb_ln_b_;
  std::vector<Block> blocks_;
};

// Layer aggregation ----------------------------------------------------------

enum class AggregationMode { last_layer, mean, scalar_mix };
AggregationMode parse_aggregation_mode(std::string_view name);
std::string_view aggregation_mode_name(AggregationMode m);

/// Parses "j", "a-b" (inclusive) or "all" against an L-layer encoder.
std::vector<std::size_t> parse_layer_set(std::string_view text, std::size_t n_layers);
std::string layer_set_string(std::span<const std::size_t> layers, std::size_t n_layers);

struct AggregationSpec {
  std::vector<std::size_t> layers;
  AggregationMode mode = AggregationMode::last_layer;
  /// false: encoder weights are frozen feature extractors.
  bool trainable = true;

  /// Sorts and dedupes; last_layer keeps the highest selected layer (L-1
  /// when the set is empty). Throws ConfigError for empty or out-of-range sets.
  void normalize(std::size_t n_layers);
  std::string name() const;
};

/// Learned convex combination over all L layers; the selected subset is
/// renormalized through the softmax.
template <typename T>
class ScalarMix {
 public:
  ScalarMix(std::size_t n_layers, ParameterStore<T>& store, const std::string& prefix);
  Var<T> mix(Tape<T>& tape, std::span<const Var<T>> hidden, std::span<const std::size_t> layers) const;
  /// softmax(s) over `layers`.
  std::vector<double> weights(std::span<const std::size_t> layers) const;
  Parameter<T>& scalars() { return *s_; }
  Parameter<T>& gamma() { return *gamma_; }

 private:
  Parameter<T>* s_;
  Parameter<T>* gamma_;
};

template <typename T>
Var<T> aggregate(Tape<T>& tape, const EncoderOutput<T>& out, const AggregationSpec& spec,
                 const ScalarMix<T>* mix);

// Masked language modeling ---------------------------------------------------

struct MlmConfig {
  std::size_t top_k = 5000;
  double mask_rate = 0.15;
  double replace_prob = 0.8;
  double random_prob = 0.1;
  double keep_prob = 0.1;

  void validate() const;
  static MlmConfig from_config(Config& cfg, const std::string& prefix = "mlm.");
  void to_config(Config& cfg, const std::string& prefix = "mlm.") const;
};

/// Output vocabulary: [UNK] at 0, then the top-K corpus words.
class MlmVocab {
 public:
  static MlmVocab build(const RawCorpus& corpus, std::size_t top_k);
  std::size_t size() const { return words_.size(); }
  /// 0 ([UNK]) for words outside the vocabulary.
  int id(std::string_view word) const;
  const std::string& word(std::size_t id) const { return words_.at(id); }
  std::string to_text() const;
  static MlmVocab from_text(std::string_view text);
  bool operator==(const MlmVocab& o) const { return words_ == o.words_; }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, int> index_;
};

struct MlmExample {
  std::vector<std::string> corrupted;
  /// Per position: output id to predict, or -1.
  std::vector<int> targets;
  std::vector<std::size_t> selected;
};

/// Selects each non-special position with probability mask_rate, then
/// rewrites it to [MASK], a random vocabulary word or itself. Selected
/// positions whose word is outside the vocabulary carry no target.
MlmExample mlm_mask(std::span<const std::string> words, const MlmVocab& vocab, const MlmConfig& config,
                    std::uint64_t seed);

template <typename T>
class MlmHead {
 public:
  MlmHead(std::size_t d_model, std::size_t n_outputs, ParameterStore<T>& store, const std::string& prefix, Rng& rng);
  Var<T> logits(Var<T> hidden, bool trainable = true) const;
  std::size_t outputs() const { return n_outputs_; }

 private:
  Parameter<T>* w_;
  Parameter<T>* b_;
  std::size_t n_outputs_;
};

template <typename T>
struct MlmLoss {
  Var<T> loss;  // mean cross-entropy over scored positions
  std::size_t count = 0;
  double log_likelihood = 0.0;  // summed over scored positions
};

/// hidden [n x d] against per-position targets (-1 = unscored).
template <typename T>
MlmLoss<T> mlm_loss(Tape<T>& tape, Var<T> hidden, std::span<const int> targets, const MlmHead<T>& head,
                    bool trainable = true);

}  // namespace charparse
