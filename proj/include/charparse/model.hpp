#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "charparse/char_encoder.hpp"
#include "charparse/config.hpp"
#include "charparse/encoder.hpp"
#include "charparse/parser.hpp"
#include "charparse/subword.hpp"

namespace charparse {

struct ModelConfig {
  EncoderConfig encoder;
  CharEncoderConfig chars;
  /// Target piece count of the subword pipeline's vocabulary.
  std::size_t subword_size = 4000;
  MlmConfig mlm;
  ParserConfig parser;

  static ModelConfig from_config(Config& cfg);
  void to_config(Config& cfg) const;
};

/// Word-level encoder output for one sentence: hidden rows are
/// [CLS] w_1 .. w_k [SEP], where k <= the sentence length when the
/// sentence had to be windowed.
struct SentenceEncoding {
  EncoderOutput<float> out;
  std::size_t words = 0;
};

/// Embedder (character CNN or subword table) + transformer + MLM head, and
/// after attach_task(), scalar mix + tagger/parser. Parameter names carry
/// the prefixes char., subword., encoder., mlm., mix. and parser.
class Model {
 public:
  Model(const ModelConfig& config, CharVocab chars, SubwordVocab subwords, MlmVocab mlm, std::uint64_t seed);

  /// Builds the input and MLM vocabularies from a raw corpus.
  static Model create(const ModelConfig& config, const RawCorpus& corpus, std::uint64_t seed);

  void attach_task(const TreebankVocab& vocab, std::uint64_t seed);
  bool has_task() const { return parser_ != nullptr; }

  const ModelConfig& config() const { return config_; }
  EmbeddingSource source() const { return config_.encoder.source; }
  ParameterStore<float>& params() { return params_; }
  const ParameterStore<float>& params() const { return params_; }
  const CharVocab& char_vocab() const { return chars_; }
  const SubwordVocab& subword_vocab() const { return subwords_; }
  const MlmVocab& mlm_vocab() const { return mlm_vocab_; }
  const TreebankVocab& treebank_vocab() const { return *treebank_; }
  ScalarMix<float>* mix() { return mix_.get(); }
  const ScalarMix<float>* mix() const { return mix_.get(); }
  const BiaffineParser<float>& parser() const { return *parser_; }
  const MlmHead<float>& mlm_head() const { return *mlm_head_; }

  /// Encoder-side parameters: embedder, transformer and MLM head.
  static bool is_encoder_param(const std::string& name);

  /// Number of leading words that fit into max_seq_len with [CLS]/[SEP].
  std::size_t fit_words(std::span<const std::string> words) const;

  /// Encodes each sentence, windowing to fit_words() leading words.
  std::vector<SentenceEncoding> encode(Tape<float>& tape, std::span<const std::vector<std::string>> sentences,
                                       bool trainable) const;

  /// Aggregated LM vectors for all n words of a sentence: rows past the
  /// encoder window are zero.
  Var<float> lm_vectors(Tape<float>& tape, const SentenceEncoding& enc, std::size_t n_words,
                        const AggregationSpec& spec) const;

 private:
  ModelConfig config_;
  ParameterStore<float> params_;
  CharVocab chars_;
  SubwordVocab subwords_;
  MlmVocab mlm_vocab_;
  std::optional<TreebankVocab> treebank_;
  std::unique_ptr<CharEncoder<float>> char_encoder_;
  std::unique_ptr<SubwordEmbedding<float>> subword_embedding_;
  std::unique_ptr<TransformerEncoder<float>> encoder_;
  std::unique_ptr<MlmHead<float>> mlm_head_;
  std::unique_ptr<ScalarMix<float>> mix_;
  std::unique_ptr<BiaffineParser<float>> parser_;
};

}  // namespace charparse
