#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "charparse/autodiff.hpp"
#include "charparse/config.hpp"
#include "charparse/corpus.hpp"

namespace charparse {

/// Open character inventory. Reserved ids come first: padding, word
/// boundaries, unknown character, then one pseudo-character per special
/// word form ([CLS], [SEP], [MASK], [PAD], [UNK]). Corpus characters follow
/// in code point order.
class CharVocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBow = 1;
  static constexpr int kEow = 2;
  static constexpr int kUnk = 3;
  static constexpr int kFirstSpecialWord = 4;
  static constexpr int kReserved = 9;

  CharVocab();
  static CharVocab build(const RawCorpus& corpus);
  static CharVocab build(std::span<const std::string> words);

  std::size_t size() const { return kReserved + chars_.size(); }
  int id(char32_t cp) const;
  /// Pseudo-character of a special word form, or -1.
  static int special_id(std::string_view word);

  /// [BOW] chars... [EOW] [PAD]..., always max_word_len + 2 long. Words are
  /// truncated to max_word_len code points.
  std::vector<int> encode(std::string_view word, std::size_t max_word_len) const;
  /// Row-major batch padded only to the longest word (and at least
  /// min_width); `width` is the row length.
  struct Batch {
    std::vector<int> ids;
    std::size_t width = 0;
  };
  Batch encode_batch(std::span<const std::string> words, std::size_t max_word_len,
                     std::size_t min_width = 1) const;

  std::string to_text() const;
  static CharVocab from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static CharVocab load(const std::filesystem::path& path);

  bool operator==(const CharVocab& other) const { return chars_ == other.chars_; }

 private:
  void add(char32_t cp);

  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, int> index_;
};

enum class Activation { identity, relu, tanh, gelu, sigmoid };
Activation parse_activation(std::string_view name);
std::string_view activation_name(Activation a);

template <typename T>
Var<T> activate(Var<T> x, Activation a);

struct CharEncoderConfig {
  std::size_t char_emb_dim = 16;
  /// (kernel width, filter count) pairs.
  std::vector<std::pair<std::size_t, std::size_t>> kernels = {{1, 16}, {2, 16}, {3, 32}, {4, 32}, {5, 32}};
  std::size_t n_highway = 2;
  std::size_t d_model = 128;
  std::size_t max_word_len = 50;
  Activation conv_activation = Activation::tanh;
  Activation highway_activation = Activation::relu;

  std::size_t padded_len() const { return max_word_len + 2; }
  std::size_t pooled_dim() const;
  void validate() const;
  static CharEncoderConfig from_config(Config& cfg, const std::string& prefix = "char.");
  void to_config(Config& cfg, const std::string& prefix = "char.") const;
};

/// y = t * act(x Wh + bh) + (1 - t) * x with t = sigmoid(x Wt + bt).
template <typename T>
Var<T> highway(Var<T> x, Var<T> transform_w, Var<T> transform_b, Var<T> gate_w, Var<T> gate_b,
               Activation activation = Activation::relu);

/// Context-independent word embedder: char embeddings, one convolution per
/// kernel width with max-over-time pooling, highway layers, projection.
template <typename T>
class CharEncoder {
 public:
  CharEncoder(const CharEncoderConfig& config, std::size_t vocab_size, ParameterStore<T>& store,
              const std::string& prefix, Rng& rng);

  /// char_ids holds n_words equal-length rows (at most config.padded_len()
  /// ids, at least the widest kernel). Pooling ignores windows that lie past
  /// a word's [EOW], so the result does not depend on the row length.
  Var<T> embed(Tape<T>& tape, std::span<const int> char_ids, std::size_t n_words,
               bool trainable = true) const;

  const CharEncoderConfig& config() const { return config_; }
  std::size_t min_width() const;

  struct HighwayParams {
    Parameter<T>* transform_w;
    Parameter<T>* transform_b;
    Parameter<T>* gate_w;
    Parameter<T>* gate_b;
  };

  Parameter<T>& char_embedding() { return *emb_; }
  Parameter<T>& conv_weight(std::size_t k) { return *conv_w_[k]; }
  Parameter<T>& conv_bias(std::size_t k) { return *conv_b_[k]; }
  HighwayParams& highway_params(std::size_t i) { return highway_[i]; }
  Parameter<T>& projection() { return *proj_w_; }
  Parameter<T>& projection_bias() { return *proj_b_; }

 private:
  CharEncoderConfig config_;
  std::size_t vocab_size_;
  Parameter<T>* emb_;
  std::vector<Parameter<T>*> conv_w_, conv_b_;
  std::vector<HighwayParams> highway_;
  Parameter<T>* proj_w_;
  Parameter<T>* proj_b_;
};

}  // namespace charparse
