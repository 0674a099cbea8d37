#include "charparse/subword.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "charparse/specials.hpp"
#include "charparse/utf8.hpp"

namespace charparse {

namespace {

// Specials in id order.
constexpr std::array<std::string_view, SubwordVocab::kSpecialCount> kSpecialPieces = {
    kPadWord, kUnkWord, kClsWord, kSepWord, kMaskWord};

std::string_view body(std::string_view piece) {
  if (piece.starts_with(SubwordVocab::kContinuation)) piece.remove_prefix(SubwordVocab::kContinuation.size());
  return piece;
}

std::set<std::string> corpus_chars(const RawCorpus& corpus) {
  std::set<std::string> chars;
  for (const auto& s : corpus.sentences) {
    for (const auto& w : s) {
      for (auto& c : utf8::chars(w)) chars.insert(std::move(c));
    }
  }
  return chars;
}

}  // namespace

int SubwordVocab::add(std::string piece) {
  if (auto it = index_.find(piece); it != index_.end()) return it->second;
  const int id = static_cast<int>(pieces_.size());
  longest_ = std::max(longest_, utf8::length(body(piece)));
  index_.emplace(piece, id);
  pieces_.push_back(std::move(piece));
  return id;
}

std::size_t SubwordVocab::base_size(const RawCorpus& corpus) {
  return kSpecialCount + 2 * corpus_chars(corpus).size();
}

SubwordVocab SubwordVocab::train(const RawCorpus& corpus, std::size_t size) {
  if (corpus.token_count() == 0) throw std::invalid_argument("subword vocabulary: empty corpus");
  const auto chars = corpus_chars(corpus);
  const std::size_t base = kSpecialCount + 2 * chars.size();
  if (size < base) {
    throw std::invalid_argument("subword vocabulary: size " + std::to_string(size) +
                                " is below the character inventory (" + std::to_string(base) + ")");
  }
  SubwordVocab v;
  for (auto sp : kSpecialPieces) v.add(std::string(sp));
  for (const auto& c : chars) v.add(c);
  for (const auto& c : chars) v.add(std::string(kContinuation) + c);
  v.base_count_ = v.pieces_.size();

  std::map<std::string, long long> word_counts;
  for (const auto& s : corpus.sentences) {
    for (const auto& w : s) ++word_counts[w];
  }
  std::vector<std::vector<int>> words;
  std::vector<long long> counts;
  for (const auto& [w, c] : word_counts) {
    std::vector<int> syms;
    const auto cs = utf8::chars(w);
    for (std::size_t i = 0; i < cs.size(); ++i) {
      syms.push_back(v.id(i == 0 ? cs[i] : std::string(kContinuation) + cs[i]));
    }
    words.push_back(std::move(syms));
    counts.push_back(c);
  }

  using Pair = std::pair<int, int>;
  struct Order {
    const std::vector<std::string>* pieces;
    bool operator()(const std::pair<long long, Pair>& x, const std::pair<long long, Pair>& y) const {
      if (x.first != y.first) return x.first > y.first;
      const auto& p = *pieces;
      if (p[x.second.first] != p[y.second.first]) return p[x.second.first] < p[y.second.first];
      return p[x.second.second] < p[y.second.second];
    }
  };
  std::map<Pair, long long> pair_count;
  std::map<Pair, std::vector<std::size_t>> pair_words;
  std::set<std::pair<long long, Pair>, Order> queue(Order{&v.pieces_});

  auto change = [&](Pair p, long long delta, std::size_t word) {
    long long& c = pair_count[p];
    if (c > 0) queue.erase({c, p});
    c += delta;
    if (c > 0) queue.insert({c, p});
    if (delta > 0) pair_words[p].push_back(word);
  };
  auto count_word = [&](std::size_t w, long long sign) {
    const auto& s = words[w];
    for (std::size_t i = 0; i + 1 < s.size(); ++i) change({s[i], s[i + 1]}, sign * counts[w], w);
  };
  for (std::size_t w = 0; w < words.size(); ++w) count_word(w, 1);

  std::vector<std::size_t> seen(words.size(), 0);
  std::size_t stamp = 0;
  while (v.size() < size && !queue.empty()) {
    const Pair best = queue.begin()->second;
    const int merged = v.add(std::string(v.pieces_[best.first]) + std::string(body(v.pieces_[best.second])));
    ++stamp;
    const auto affected = std::move(pair_words[best]);
    pair_words.erase(best);
    for (std::size_t w : affected) {
      if (seen[w] == stamp) continue;
      seen[w] = stamp;
      auto& s = words[w];
      bool present = false;
      for (std::size_t i = 0; i + 1 < s.size(); ++i) present |= s[i] == best.first && s[i + 1] == best.second;
      if (!present) continue;
      count_word(w, -1);
      std::vector<int> out;
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (i + 1 < s.size() && s[i] == best.first && s[i + 1] == best.second) {
          out.push_back(merged);
          ++i;
        } else {
          out.push_back(s[i]);
        }
      }
      s = std::move(out);
      count_word(w, 1);
    }
  }
  return v;
}

int SubwordVocab::id(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> SubwordVocab::segment(std::string_view word) const {
  if (is_special_word(word)) return {id(word)};
  const auto cs = utf8::chars(word);
  if (cs.empty()) return {kUnkId};
  std::vector<int> out;
  std::size_t start = 0;
  std::string candidate;
  while (start < cs.size()) {
    int found = -1;
    std::size_t end = std::min(cs.size(), start + longest_);
    for (; end > start; --end) {
      candidate = start > 0 ? std::string(kContinuation) : std::string();
      for (std::size_t i = start; i < end; ++i) candidate += cs[i];
      if (auto it = index_.find(candidate); it != index_.end() && it->second >= static_cast<int>(kSpecialCount)) {
        found = it->second;
        break;
      }
    }
    if (found < 0) return {kUnkId};
    out.push_back(found);
    start = end;
  }
  return out;
}

std::string SubwordVocab::to_text() const {
  std::string out;
  for (const auto& p : pieces_) {
    out += p;
    out += '\n';
  }
  return out;
}

SubwordVocab SubwordVocab::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  SubwordVocab v;
  for (auto sp : kSpecialPieces) {
    if (!std::getline(in, line) || line != sp) {
      throw std::runtime_error("subword vocabulary: expected special piece " + std::string(sp));
    }
    v.add(line);
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (v.index_.contains(line)) throw std::runtime_error("subword vocabulary: duplicate piece " + line);
    v.add(line);
    if (utf8::length(body(line)) == 1) v.base_count_ = v.pieces_.size();
  }
  return v;
}

void SubwordVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text();
}

SubwordVocab SubwordVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing vocabulary file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

template <typename T>
SubwordEmbedding<T>::SubwordEmbedding(std::size_t vocab_size, std::size_t d_model, ParameterStore<T>& store,
                                      const std::string& prefix, Rng& rng) {
  table_ = &store.add(prefix + "emb", {vocab_size, d_model});
  init_normal(table_->value, 1.0 / std::sqrt(static_cast<double>(d_model)), rng);
}

template <typename T>
Var<T> SubwordEmbedding<T>::embed(Tape<T>& tape, std::span<const int> piece_ids, bool trainable) const {
  return ad::gather_rows(tape.param(*table_, trainable), piece_ids);
}

template <typename T>
Tensor<T> averaging_matrix(std::span<const std::size_t> pieces_per_word) {
  std::size_t total = 0;
  for (auto c : pieces_per_word) {
    if (c == 0) throw std::invalid_argument("averaging_matrix: word without pieces");
    total += c;
  }
  Tensor<T> m(Shape{pieces_per_word.size(), total});
  std::size_t col = 0;
  for (std::size_t w = 0; w < pieces_per_word.size(); ++w) {
    const T weight = T(1) / static_cast<T>(pieces_per_word[w]);
    for (std::size_t i = 0; i < pieces_per_word[w]; ++i) m(w, col++) = weight;
  }
  return m;
}

template <typename T>
Var<T> average_pieces(Var<T> pieces, std::span<const std::size_t> pieces_per_word) {
  Tensor<T> m = averaging_matrix<T>(pieces_per_word);
  if (m.dim(1) != pieces.dim(0)) {
    throw ShapeError("average_pieces: " + std::to_string(m.dim(1)) + " pieces counted, " +
                     shape_string(pieces.shape()) + " given");
  }
  // all words single-piece: the mean is the identity
  bool all_single = true;
  for (auto c : pieces_per_word) all_single &= c == 1;
  if (all_single) return pieces;
  return ad::matmul(pieces.tape->constant(std::move(m)), pieces);
}

template class SubwordEmbedding<float>;
template class SubwordEmbedding<double>;
template Tensor<float> averaging_matrix<float>(std::span<const std::size_t>);
template Tensor<double> averaging_matrix<double>(std::span<const std::size_t>);
template Var<float> average_pieces<float>(Var<float>, std::span<const std::size_t>);
template Var<double> average_pieces<double>(Var<double>, std::span<const std::size_t>);

}  // namespace charparse
