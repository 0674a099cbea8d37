#include "charparse/model.hpp"

#include <map>

#include "charparse/specials.hpp"

namespace charparse {

ModelConfig ModelConfig::from_config(Config& cfg) {
  ModelConfig c;
  c.encoder = EncoderConfig::from_config(cfg);
  c.chars = CharEncoderConfig::from_config(cfg);
  c.chars.d_model = c.encoder.d_model;
  c.chars.validate();
  c.subword_size = static_cast<std::size_t>(cfg.resolve_int("subword.size", 4000));
  c.mlm = MlmConfig::from_config(cfg);
  c.parser = ParserConfig::from_config(cfg);
  return c;
}

void ModelConfig::to_config(Config& cfg) const {
  encoder.to_config(cfg);
  chars.to_config(cfg);
  cfg.set("subword.size", std::to_string(subword_size));
  mlm.to_config(cfg);
  parser.to_config(cfg);
}

Model::Model(const ModelConfig& config, CharVocab chars, SubwordVocab subwords, MlmVocab mlm, std::uint64_t seed)
    : config_(config), chars_(std::move(chars)), subwords_(std::move(subwords)), mlm_vocab_(std::move(mlm)) {
  config_.chars.d_model = config_.encoder.d_model;
  Rng rng(derive_seed(seed, 1));
  if (source() == EmbeddingSource::character) {
    char_encoder_ = std::make_unique<CharEncoder<float>>(config_.chars, chars_.size(), params_, "char.", rng);
  } else {
    if (subwords_.size() <= SubwordVocab::kSpecialCount) throw std::invalid_argument("model: empty subword vocabulary");
    subword_embedding_ =
        std::make_unique<SubwordEmbedding<float>>(subwords_.size(), config_.encoder.d_model, params_, "subword.", rng);
  }
  encoder_ = std::make_unique<TransformerEncoder<float>>(config_.encoder, params_, "encoder.", rng);
  mlm_head_ = std::make_unique<MlmHead<float>>(config_.encoder.d_model, mlm_vocab_.size(), params_, "mlm.", rng);
}

Model Model::create(const ModelConfig& config, const RawCorpus& corpus, std::uint64_t seed) {
  if (corpus.token_count() == 0) throw std::invalid_argument("model: empty corpus");
  CharVocab chars;
  SubwordVocab subwords;
  if (config.encoder.source == EmbeddingSource::character) {
    chars = CharVocab::build(corpus);
  } else {
    subwords = SubwordVocab::train(corpus, config.subword_size);
  }
  return Model(config, std::move(chars), std::move(subwords), MlmVocab::build(corpus, config.mlm.top_k), seed);
}

void Model::attach_task(const TreebankVocab& vocab, std::uint64_t seed) {
  if (has_task()) throw std::logic_error("model: task components already attached");
  Rng rng(derive_seed(seed, 2));
  treebank_ = vocab;
  mix_ = std::make_unique<ScalarMix<float>>(config_.encoder.n_layers, params_, "mix.");
  parser_ = std::make_unique<BiaffineParser<float>>(config_.parser, *treebank_, config_.encoder.d_model, params_,
                                                    "parser.", rng);
}

bool Model::is_encoder_param(const std::string& name) {
  for (const char* p : {"char.", "subword.", "encoder.", "mlm."}) {
    if (name.starts_with(p)) return true;
  }
  return false;
}

std::size_t Model::fit_words(std::span<const std::string> words) const {
  const std::size_t budget = config_.encoder.max_seq_len - 2;
  if (source() == EmbeddingSource::character) return std::min(words.size(), budget);
  std::size_t used = 0, k = 0;
  for (; k < words.size(); ++k) {
    const std::size_t p = subwords_.segment(words[k]).size();
    if (used + p > budget) break;
    used += p;
  }
  return k;
}

std::vector<SentenceEncoding> Model::encode(Tape<float>& tape, std::span<const std::vector<std::string>> sentences,
                                            bool trainable) const {
  std::vector<SentenceEncoding> result;
  result.reserve(sentences.size());
  const std::string cls(kClsWord), sep(kSepWord);
  if (source() == EmbeddingSource::character) {
    // embed every distinct word of the batch once
    std::map<std::string, int> rows;
    std::vector<std::string> unique;
    auto row_of = [&](const std::string& w) {
      auto [it, inserted] = rows.emplace(w, static_cast<int>(unique.size()));
      if (inserted) unique.push_back(w);
      return it->second;
    };
    std::vector<std::vector<int>> seqs;
    for (const auto& s : sentences) {
      const std::size_t k = fit_words(s);
      std::vector<int> seq{row_of(cls)};
      for (std::size_t i = 0; i < k; ++i) seq.push_back(row_of(s[i]));
      seq.push_back(row_of(sep));
      seqs.push_back(std::move(seq));
    }
    const auto batch = chars_.encode_batch(unique, config_.chars.max_word_len, char_encoder_->min_width());
    Var<float> table = char_encoder_->embed(tape, batch.ids, unique.size(), trainable);
    for (const auto& seq : seqs) {
      SentenceEncoding enc;
      enc.words = seq.size() - 2;
      enc.out = encoder_->encode(tape, ad::gather_rows(table, seq), {}, trainable);
      result.push_back(std::move(enc));
    }
    return result;
  }
  for (const auto& s : sentences) {
    const std::size_t k = fit_words(s);
    std::vector<int> ids{SubwordVocab::kClsId};
    std::vector<std::size_t> counts{1};
    for (std::size_t i = 0; i < k; ++i) {
      const auto pieces = subwords_.segment(s[i]);
      ids.insert(ids.end(), pieces.begin(), pieces.end());
      counts.push_back(pieces.size());
    }
    ids.push_back(SubwordVocab::kSepId);
    counts.push_back(1);
    EncoderOutput<float> pieces = encoder_->encode(tape, subword_embedding_->embed(tape, ids, trainable), {}, trainable);
    SentenceEncoding enc;
    enc.words = k;
    enc.out.attention = std::move(pieces.attention);
    for (auto& h : pieces.hidden) enc.out.hidden.push_back(average_pieces<float>(h, counts));
    result.push_back(std::move(enc));
  }
  return result;
}

Var<float> Model::lm_vectors(Tape<float>& tape, const SentenceEncoding& enc, std::size_t n_words,
                             const AggregationSpec& spec) const {
  Var<float> agg = aggregate(tape, enc.out, spec, mix_.get());
  Var<float> rows = ad::slice(agg, 0, 1, enc.words + 1);
  if (enc.words == n_words) return rows;
  const std::array<Var<float>, 2> parts{rows,
                                        tape.constant(Tensor<float>(Shape{n_words - enc.words, config_.encoder.d_model}))};
  return ad::concat<float>(parts, 0);
}

}  // namespace charparse
