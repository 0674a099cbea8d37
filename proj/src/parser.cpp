#include "charparse/parser.hpp"

#include <algorithm>
#include <cctype>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace charparse {

namespace {

std::string lower_ascii(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

void ParserConfig::validate() const {
  if (word_dim == 0 || tag_dim == 0 || tagger_hidden == 0 || arc_dim == 0 || label_dim == 0) {
    throw ConfigError("parser: dimensions must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("parser: dropout must lie in [0, 1)");
  if (unk_replace < 0.0 || unk_replace > 1.0) throw ConfigError("parser: unk_replace must lie in [0, 1]");
  if (min_word_freq < 1) throw ConfigError("parser: min_word_freq must be at least 1");
}

ParserConfig ParserConfig::from_config(Config& cfg, const std::string& prefix) {
  ParserConfig c;
  c.word_dim = static_cast<std::size_t>(cfg.resolve_int(prefix + "word_dim", 64));
  c.tag_dim = static_cast<std::size_t>(cfg.resolve_int(prefix + "tag_dim", 32));
  c.tagger_hidden = static_cast<std::size_t>(cfg.resolve_int(prefix + "tagger_hidden", 128));
  c.arc_dim = static_cast<std::size_t>(cfg.resolve_int(prefix + "arc_dim", 128));
  c.label_dim = static_cast<std::size_t>(cfg.resolve_int(prefix + "label_dim", 64));
  c.dropout = cfg.resolve_double(prefix + "dropout", 0.2);
  c.lowercase = cfg.resolve_bool(prefix + "lowercase", false);
  c.min_word_freq = static_cast<std::size_t>(cfg.resolve_int(prefix + "min_word_freq", 2));
  c.unk_replace = cfg.resolve_double(prefix + "unk_replace", 0.25);
  c.validate();
  return c;
}

void ParserConfig::to_config(Config& cfg, const std::string& prefix) const {
  cfg.set(prefix + "word_dim", std::to_string(word_dim));
  cfg.set(prefix + "tag_dim", std::to_string(tag_dim));
  cfg.set(prefix + "tagger_hidden", std::to_string(tagger_hidden));
  cfg.set(prefix + "arc_dim", std::to_string(arc_dim));
  cfg.set(prefix + "label_dim", std::to_string(label_dim));
  cfg.set(prefix + "dropout", format_double(dropout));
  cfg.set(prefix + "lowercase", lowercase ? "true" : "false");
  cfg.set(prefix + "min_word_freq", std::to_string(min_word_freq));
  cfg.set(prefix + "unk_replace", format_double(unk_replace));
}

// Vocabulary ---------------------------------------------------------------------

void TreebankVocab::reindex() {
  word_index_.clear();
  tag_index_.clear();
  label_index_.clear();
  for (std::size_t i = 1; i < words_.size(); ++i) word_index_.emplace(words_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < tags_.size(); ++i) tag_index_.emplace(tags_[i], static_cast<int>(i));
  for (std::size_t i = 0; i < labels_.size(); ++i) label_index_.emplace(labels_[i], static_cast<int>(i));
}

TreebankVocab TreebankVocab::build(std::span<const Sentence> train, const ParserConfig& config) {
  TreebankVocab v;
  v.lowercase_ = config.lowercase;
  std::map<std::string, std::size_t> counts;
  std::set<std::string> tags, labels;
  for (const auto& s : train) {
    for (const auto& t : s.tokens) {
      ++counts[config.lowercase ? lower_ascii(t.form) : t.form];
      tags.insert(t.upos);
      labels.insert(t.deprel);
    }
  }
  if (tags.empty() || labels.empty()) throw std::invalid_argument("treebank vocabulary: empty tagset or label set");
  v.words_.push_back("<unk>");
  v.counts_.push_back(0);
  for (const auto& [w, c] : counts) {
    if (c < config.min_word_freq) continue;
    v.words_.push_back(w);
    v.counts_.push_back(c);
  }
  v.tags_.assign(tags.begin(), tags.end());
  v.labels_.assign(labels.begin(), labels.end());
  v.reindex();
  return v;
}

int TreebankVocab::word_id(std::string_view form) const {
  auto it = word_index_.find(lowercase_ ? lower_ascii(form) : std::string(form));
  return it == word_index_.end() ? 0 : it->second;
}

int TreebankVocab::tag_id(std::string_view tag) const {
  auto it = tag_index_.find(std::string(tag));
  return it == tag_index_.end() ? -1 : it->second;
}

int TreebankVocab::label_id(std::string_view label) const {
  auto it = label_index_.find(std::string(label));
  return it == label_index_.end() ? -1 : it->second;
}

std::string TreebankVocab::to_text() const {
  std::ostringstream out;
  out << "lowercase\t" << (lowercase_ ? 1 : 0) << "\n[words]\n";
  for (std::size_t i = 0; i < words_.size(); ++i) out << words_[i] << '\t' << counts_[i] << '\n';
  out << "[tags]\n";
  for (const auto& t : tags_) out << t << '\n';
  out << "[labels]\n";
  for (const auto& l : labels_) out << l << '\n';
  return out.str();
}

TreebankVocab TreebankVocab::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  TreebankVocab v;
  if (!std::getline(in, line) || !line.starts_with("lowercase\t")) {
    throw std::runtime_error("treebank vocabulary: missing header");
  }
  v.lowercase_ = line.substr(10) == "1";
  enum { none, words, tags, labels } section = none;
  while (std::getline(in, line)) {
    if (line == "[words]") { section = words; continue; }
    if (line == "[tags]") { section = tags; continue; }
    if (line == "[labels]") { section = labels; continue; }
    switch (section) {
      case words: {
        const auto tab = line.rfind('\t');
        if (tab == std::string::npos) throw std::runtime_error("treebank vocabulary: malformed word line");
        v.words_.push_back(line.substr(0, tab));
        v.counts_.push_back(static_cast<std::size_t>(parse_int(line.substr(tab + 1), "word count")));
        break;
      }
      case tags: v.tags_.push_back(line); break;
      case labels: v.labels_.push_back(line); break;
      case none: throw std::runtime_error("treebank vocabulary: entry outside a section");
    }
  }
  if (v.words_.empty() || v.tags_.empty() || v.labels_.empty()) {
    throw std::runtime_error("treebank vocabulary: incomplete file");
  }
  v.reindex();
  return v;
}

GoldIds gold_ids(const Sentence& sentence, const TreebankVocab& vocab) {
  GoldIds g;
  for (const auto& t : sentence.tokens) {
    g.heads.push_back(t.head);
    g.labels.push_back(vocab.label_id(t.deprel));
    g.tags.push_back(vocab.tag_id(t.upos));
  }
  return g;
}

// Parser ---------------------------------------------------------------------------

template <typename T>
BiaffineParser<T>::BiaffineParser(const ParserConfig& config, const TreebankVocab& vocab, std::size_t lm_dim,
                                  ParameterStore<T>& store, const std::string& prefix, Rng& rng)
    : config_(config), lm_dim_(lm_dim), n_tags_(vocab.tags().size()), n_labels_(vocab.labels().size()) {
  config_.validate();
  if (n_tags_ == 0 || n_labels_ == 0) throw std::invalid_argument("parser: empty tagset or label set");
  const auto& c = config_;
  auto matrix = [&](const std::string& name, std::size_t in, std::size_t out) {
    auto* p = &store.add(prefix + name, {in, out});
    init_xavier(p->value, in, out, rng);
    return p;
  };
  auto vec = [&](const std::string& name, std::size_t n) { return &store.add(prefix + name, {n}); };
  word_emb_ = &store.add(prefix + "word_emb", {vocab.words().size(), c.word_dim});
  init_normal(word_emb_->value, 1.0 / std::sqrt(static_cast<double>(c.word_dim)), rng);
  tag_emb_ = &store.add(prefix + "tag_emb", {n_tags_, c.tag_dim});
  init_normal(tag_emb_->value, 1.0 / std::sqrt(static_cast<double>(c.tag_dim)), rng);
  root_ = &store.add(prefix + "root", {1, repr_dim()});
  init_normal(root_->value, 1.0 / std::sqrt(static_cast<double>(repr_dim())), rng);

  const std::size_t tagger_in = c.word_dim + lm_dim;
  tag_w1_ = matrix("tagger.w1", tagger_in, c.tagger_hidden);
  tag_b1_ = vec("tagger.b1", c.tagger_hidden);
  tag_w2_ = matrix("tagger.w2", c.tagger_hidden, n_tags_);
  tag_b2_ = vec("tagger.b2", n_tags_);

  arc_head_w_ = matrix("arc_head.w", repr_dim(), c.arc_dim);
  arc_head_b_ = vec("arc_head.b", c.arc_dim);
  arc_dep_w_ = matrix("arc_dep.w", repr_dim(), c.arc_dim);
  arc_dep_b_ = vec("arc_dep.b", c.arc_dim);
  arc_u_ = &store.add(prefix + "arc.U", {c.arc_dim, c.arc_dim});
  arc_bias_ = &store.add(prefix + "arc.u", {c.arc_dim, 1});

  lab_head_w_ = matrix("label_head.w", repr_dim(), c.label_dim);
  lab_head_b_ = vec("label_head.b", c.label_dim);
  lab_dep_w_ = matrix("label_dep.w", repr_dim(), c.label_dim);
  lab_dep_b_ = vec("label_dep.b", c.label_dim);
  lab_u_ = &store.add(prefix + "label.U", {c.label_dim, n_labels_ * c.label_dim});
  lab_wh_ = matrix("label.wh", c.label_dim, n_labels_);
  lab_wd_ = matrix("label.wd", c.label_dim, n_labels_);
  lab_b_ = vec("label.b", n_labels_);
}

template <typename T>
Var<T> BiaffineParser<T>::mlp(Var<T> x, Parameter<T>* w, Parameter<T>* b) const {
  Tape<T>& tape = *x.tape;
  Var<T> h = ad::relu(ad::add(ad::matmul(x, tape.param(*w)), tape.param(*b)));
  return ad::dropout(h, config_.dropout);
}

template <typename T>
Var<T> BiaffineParser<T>::word_embeddings(Tape<T>& tape, std::span<const int> word_ids) const {
  return ad::gather_rows(tape.param(*word_emb_), word_ids);
}

template <typename T>
Var<T> BiaffineParser<T>::tag_logits(Var<T> word_emb, Var<T> lm) const {
  Tape<T>& tape = *word_emb.tape;
  if (word_emb.dim(0) != lm.dim(0)) throw ShapeError("tagger: word embeddings and LM vectors differ in length");
  const std::array<Var<T>, 2> parts{word_emb, lm};
  Var<T> x = ad::dropout(ad::concat<T>(parts, 1), config_.dropout);
  Var<T> h = mlp(x, tag_w1_, tag_b1_);
  return ad::add(ad::matmul(h, tape.param(*tag_w2_)), tape.param(*tag_b2_));
}

template <typename T>
Var<T> BiaffineParser<T>::representation(Var<T> word_emb, Var<T> lm, std::span<const int> tag_ids) const {
  Tape<T>& tape = *word_emb.tape;
  const std::size_t n = word_emb.dim(0);
  if (lm.shape().size() != 2 || lm.dim(0) != n || lm.dim(1) != lm_dim_ || tag_ids.size() != n) {
    throw ShapeError("parser: representation inputs disagree: " + std::to_string(n) + " words, LM " +
                     shape_string(lm.shape()) + ", " + std::to_string(tag_ids.size()) + " tags");
  }
  const std::array<Var<T>, 3> parts{word_emb, lm, ad::gather_rows(tape.param(*tag_emb_), tag_ids)};
  return ad::concat<T>(parts, 1);
}

template <typename T>
ArcLabelHeads<T> BiaffineParser<T>::project(Var<T> repr) const {
  Tape<T>& tape = *repr.tape;
  if (repr.shape().size() != 2 || repr.dim(0) == 0 || repr.dim(1) != repr_dim()) {
    throw ShapeError("parser: expected [n x " + std::to_string(repr_dim()) + "] representations, got " +
                     shape_string(repr.shape()));
  }
  Var<T> x = ad::dropout(repr, config_.dropout);
  const std::array<Var<T>, 2> parts{tape.param(*root_), x};
  Var<T> with_root = ad::concat<T>(parts, 0);
  return {mlp(with_root, arc_head_w_, arc_head_b_), mlp(x, arc_dep_w_, arc_dep_b_),
          mlp(with_root, lab_head_w_, lab_head_b_), mlp(x, lab_dep_w_, lab_dep_b_)};
}

template <typename T>
Var<T> BiaffineParser<T>::arc_scores(const ArcLabelHeads<T>& h) const {
  Tape<T>& tape = *h.arc_head.tape;
  const std::size_t n = h.arc_dep.dim(0);
  Var<T> bilinear = ad::matmul(ad::matmul(h.arc_head, tape.param(*arc_u_)), h.arc_dep, true);
  Var<T> scores = ad::add(bilinear, ad::matmul(h.arc_head, tape.param(*arc_bias_)));
  Tensor<T> ban(Shape{n + 1, n});
  for (std::size_t i = 0; i < n; ++i) ban(i + 1, i) = -std::numeric_limits<T>::infinity();
  return ad::add(scores, tape.constant(std::move(ban)));
}

template <typename T>
Var<T> BiaffineParser<T>::label_scores(const ArcLabelHeads<T>& h) const {
  Tape<T>& tape = *h.label_head.tape;
  const std::size_t n = h.label_dep.dim(0), L = n_labels_, l = config_.label_dim;
  Var<T> t = ad::reshape(ad::matmul(h.label_head, tape.param(*lab_u_)), Shape{(n + 1) * L, l});
  Var<T> bil = ad::permute(ad::reshape(ad::matmul(t, h.label_dep, true), Shape{n + 1, L, n}), {0, 2, 1});
  Var<T> head_term = ad::reshape(ad::matmul(h.label_head, tape.param(*lab_wh_)), Shape{n + 1, 1, L});
  Var<T> dep_term = ad::reshape(ad::matmul(h.label_dep, tape.param(*lab_wd_)), Shape{1, n, L});
  return ad::add(ad::add(ad::add(bil, head_term), dep_term), tape.param(*lab_b_));
}

template <typename T>
Var<T> BiaffineParser<T>::label_scores_at(const ArcLabelHeads<T>& h, std::span<const int> heads) const {
  Tape<T>& tape = *h.label_head.tape;
  const std::size_t n = h.label_dep.dim(0), L = n_labels_, l = config_.label_dim;
  if (heads.size() != n) throw ShapeError("parser: " + std::to_string(heads.size()) + " heads for " + std::to_string(n) + " tokens");
  for (int hd : heads) {
    if (hd < 0 || static_cast<std::size_t>(hd) > n) throw std::out_of_range("parser: head " + std::to_string(hd) + " out of range");
  }
  Var<T> hsel = ad::gather_rows(h.label_head, heads);
  Var<T> t = ad::reshape(ad::matmul(hsel, tape.param(*lab_u_)), Shape{n, L, l});
  Var<T> bil = ad::reshape(ad::bmm(t, ad::reshape(h.label_dep, Shape{n, l, 1})), Shape{n, L});
  Var<T> lin = ad::add(ad::matmul(hsel, tape.param(*lab_wh_)), ad::matmul(h.label_dep, tape.param(*lab_wd_)));
  return ad::add(ad::add(bil, lin), tape.param(*lab_b_));
}

template <typename T>
Var<T> parse_loss(Var<T> arc, Var<T> label_at_gold, Var<T> tag_logits, const GoldIds& gold, double lambda_tag) {
  const std::size_t n = gold.heads.size();
  if (n == 0 || arc.dim(1) != n || arc.dim(0) != n + 1) throw ShapeError("parse_loss: arc scores do not match gold");
  for (std::size_t i = 0; i < n; ++i) {
    if (gold.heads[i] < 0 || static_cast<std::size_t>(gold.heads[i]) > n || gold.heads[i] == static_cast<int>(i + 1)) {
      throw std::out_of_range("parse_loss: gold head " + std::to_string(gold.heads[i]) + " out of range");
    }
  }
  Var<T> loss = ad::cross_entropy(ad::transpose(arc), gold.heads);
  loss = ad::add(loss, ad::cross_entropy(label_at_gold, gold.labels));
  if (lambda_tag != 0.0) loss = ad::add(loss, ad::scale(ad::cross_entropy(tag_logits, gold.tags), lambda_tag));
  return ad::scale(loss, 1.0 / static_cast<double>(n));
}

template class BiaffineParser<float>;
template class BiaffineParser<double>;
template Var<float> parse_loss<float>(Var<float>, Var<float>, Var<float>, const GoldIds&, double);
template Var<double> parse_loss<double>(Var<double>, Var<double>, Var<double>, const GoldIds&, double);

}  // namespace charparse
