#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "charparse/autodiff.hpp"
#include "charparse/corpus.hpp"

namespace charparse {

/// Closed subword inventory: BPE merges written in WordPiece surface form
/// ("##" marks a continuation piece). Ids: specials, then every corpus
/// character as an initial and as a continuation piece, then merged pieces
/// in merge order.
class SubwordVocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kClsId = 2;
  static constexpr int kSepId = 3;
  static constexpr int kMaskId = 4;
  static constexpr std::size_t kSpecialCount = 5;
  static constexpr std::string_view kContinuation = "##";

  /// specials + 2 * distinct characters: the size with zero merges.
  static std::size_t base_size(const RawCorpus& corpus);
  /// Merges the most frequent adjacent pair (ties: lexicographically
  /// smallest pair) until `size` pieces exist or no pair remains.
  static SubwordVocab train(const RawCorpus& corpus, std::size_t size);

  std::size_t size() const { return pieces_.size(); }
  /// Id of a piece, or -1.
  int id(std::string_view piece) const;
  const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& pieces() const { return pieces_; }
  std::size_t merge_count() const { return pieces_.size() - base_count_; }

  /// Greedy longest match from the left. A word containing a character
  /// outside the inventory becomes the single piece [UNK].
  std::vector<int> segment(std::string_view word) const;

  std::string to_text() const;
  static SubwordVocab from_text(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static SubwordVocab load(const std::filesystem::path& path);

  bool operator==(const SubwordVocab& other) const { return pieces_ == other.pieces_; }

 private:
  int add(std::string piece);

  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
  std::size_t base_count_ = kSpecialCount;
  std::size_t longest_ = 1;  // code points in the longest piece body
};

/// Piece embedding table [V x d_model].
template <typename T>
class SubwordEmbedding {
 public:
  SubwordEmbedding(std::size_t vocab_size, std::size_t d_model, ParameterStore<T>& store,
                   const std::string& prefix, Rng& rng);
  Var<T> embed(Tape<T>& tape, std::span<const int> piece_ids, bool trainable = true) const;
  Parameter<T>& table() { return *table_; }

 private:
  Parameter<T>* table_;
};

/// [n_words x n_pieces] matrix whose row w averages the pieces of word w.
template <typename T>
Tensor<T> averaging_matrix(std::span<const std::size_t> pieces_per_word);

/// Word vectors as the mean of their pieces' vectors: pieces [P x d] ->
/// [n_words x d]. Gradients flow back through the mean.
template <typename T>
Var<T> average_pieces(Var<T> pieces, std::span<const std::size_t> pieces_per_word);

}  // namespace charparse
