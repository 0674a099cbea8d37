#include "charparse/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "charparse/specials.hpp"

namespace charparse {

EmbeddingSource parse_embedding_source(std::string_view name) {
  if (name == "character" || name == "char") return EmbeddingSource::character;
  if (name == "subword") return EmbeddingSource::subword;
  throw ConfigError("unknown embedding source: " + std::string(name));
}

std::string_view embedding_source_name(EmbeddingSource s) {
  return s == EmbeddingSource::character ? "character" : "subword";
}

void EncoderConfig::validate() const {
  if (n_layers < 1) throw ConfigError("encoder: n_layers must be at least 1");
  if (n_heads < 1 || d_model % n_heads != 0) {
    throw ConfigError("encoder: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (d_ff < 1 || max_seq_len < 3) throw ConfigError("encoder: d_ff and max_seq_len too small");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must lie in [0, 1)");
}

EncoderConfig EncoderConfig::from_config(Config& cfg, const std::string& prefix) {
  EncoderConfig c;
  c.n_layers = static_cast<std::size_t>(cfg.resolve_int(prefix + "layers", 4));
  c.n_heads = static_cast<std::size_t>(cfg.resolve_int(prefix + "heads", 4));
  c.d_model = static_cast<std::size_t>(cfg.resolve_int(prefix + "d_model", 128));
  c.d_ff = static_cast<std::size_t>(cfg.resolve_int(prefix + "d_ff", 512));
  c.max_seq_len = static_cast<std::size_t>(cfg.resolve_int(prefix + "max_seq_len", 128));
  c.dropout = cfg.resolve_double(prefix + "dropout", 0.1);
  c.source = parse_embedding_source(cfg.resolve(prefix + "source", "character"));
  c.validate();
  return c;
}

void EncoderConfig::to_config(Config& cfg, const std::string& prefix) const {
  cfg.set(prefix + "layers", std::to_string(n_layers));
  cfg.set(prefix + "heads", std::to_string(n_heads));
  cfg.set(prefix + "d_model", std::to_string(d_model));
  cfg.set(prefix + "d_ff", std::to_string(d_ff));
  cfg.set(prefix + "max_seq_len", std::to_string(max_seq_len));
  cfg.set(prefix + "dropout", format_double(dropout));
  cfg.set(prefix + "source", std::string(embedding_source_name(source)));
}

template <typename T>
TransformerEncoder<T>::TransformerEncoder(const EncoderConfig& config, ParameterStore<T>& store,
                                          const std::string& prefix, Rng& rng)
    : config_(config) {
  config_.validate();
  const std::size_t d = config_.d_model, ff = config_.d_ff;
  pos_ = &store.add(prefix + "pos", {config_.max_seq_len, d});
  // sinusoidal start, comparable in scale to the word embeddings
  for (std::size_t t = 0; t < config_.max_seq_len; ++t) {
    for (std::size_t i = 0; i < d; i += 2) {
      const double angle = static_cast<double>(t) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(d));
      pos_->value(t, i) = static_cast<T>(std::sin(angle));
      if (i + 1 < d) pos_->value(t, i + 1) = static_cast<T>(std::cos(angle));
    }
  }
  emb_ln_g_ = &store.add(prefix + "emb_ln.g", {d});
  emb_ln_g_->value.fill(T(1));
  emb_ln_b_ = &store.add(prefix + "emb_ln.b", {d});
  auto matrix = [&](const std::string& name, std::size_t in, std::size_t out) {
    auto* p = &store.add(name, {in, out});
    init_xavier(p->value, in, out, rng);
    return p;
  };
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string lp = prefix + "layer" + std::to_string(l) + ".";
    Block b{};
    b.wq = matrix(lp + "wq", d, d);
    b.bq = &store.add(lp + "bq", {d});
    b.wk = matrix(lp + "wk", d, d);
    b.wv = matrix(lp + "wv", d, d);
    b.bv = &store.add(lp + "bv", {d});
    b.wo = matrix(lp + "wo", d, d);
    b.bo = &store.add(lp + "bo", {d});
    b.ln1_g = &store.add(lp + "ln1.g", {d});
    b.ln1_g->value.fill(T(1));
    b.ln1_b = &store.add(lp + "ln1.b", {d});
    b.w1 = matrix(lp + "w1", d, ff);
    b.b1 = &store.add(lp + "b1", {ff});
    b.w2 = matrix(lp + "w2", ff, d);
    b.b2 = &store.add(lp + "b2", {d});
    b.ln2_g = &store.add(lp + "ln2.g", {d});
    b.ln2_g->value.fill(T(1));
    b.ln2_b = &store.add(lp + "ln2.b", {d});
    blocks_.push_back(b);
  }
}

template <typename T>
Var<T> TransformerEncoder<T>::attend(Tape<T>& tape, const Block& b, Var<T> x, const Tensor<T>& key_mask,
                                     bool trainable, std::vector<Var<T>>& attention) const {
  const std::size_t n = x.dim(0), d = config_.d_model, h = config_.n_heads, dh = d / h;
  auto p = [&](Parameter<T>* q) { return tape.param(*q, trainable); };
  auto heads = [&](Var<T> v) { return ad::permute(ad::reshape(v, Shape{n, h, dh}), {1, 0, 2}); };
  Var<T> q = heads(ad::add(ad::matmul(x, p(b.wq)), p(b.bq)));
  Var<T> k = heads(ad::matmul(x, p(b.wk)));
  Var<T> v = heads(ad::add(ad::matmul(x, p(b.wv)), p(b.bv)));
  Var<T> scores = ad::scale(ad::bmm(q, k, true), 1.0 / std::sqrt(static_cast<double>(dh)));
  if (key_mask.size() > 0) scores = ad::add(scores, tape.constant(key_mask));
  Var<T> weights = ad::softmax(scores);
  attention.push_back(weights);
  weights = ad::dropout(weights, config_.dropout);
  Var<T> ctx = ad::reshape(ad::permute(ad::bmm(weights, v), {1, 0, 2}), Shape{n, d});
  return ad::add(ad::matmul(ctx, p(b.wo)), p(b.bo));
}

template <typename T>
EncoderOutput<T> TransformerEncoder<T>::encode(Tape<T>& tape, Var<T> embeddings, std::span<const bool> valid,
                                               bool trainable) const {
  const Shape& s = embeddings.shape();
  if (s.size() != 2 || s[1] != config_.d_model) {
    throw ShapeError("encoder: expected [n x " + std::to_string(config_.d_model) + "], got " + shape_string(s));
  }
  const std::size_t n = s[0];
  if (n == 0) throw ShapeError("encoder: empty sequence");
  if (n > config_.max_seq_len) {
    throw std::length_error("encoder: sequence of " + std::to_string(n) + " positions exceeds max_seq_len " +
                            std::to_string(config_.max_seq_len));
  }
  if (!valid.empty() && valid.size() != n) throw ShapeError("encoder: mask length differs from sequence length");
  Tensor<T> key_mask;
  if (!valid.empty() && std::find(valid.begin(), valid.end(), false) != valid.end()) {
    key_mask = Tensor<T>(Shape{1, 1, n});
    for (std::size_t i = 0; i < n; ++i) key_mask[i] = valid[i] ? T(0) : -std::numeric_limits<T>::infinity();
  }
  auto p = [&](Parameter<T>* q) { return tape.param(*q, trainable); };
  Var<T> x = ad::add(embeddings, ad::slice(p(pos_), 0, 0, n));
  x = ad::dropout(ad::layer_norm(x, p(emb_ln_g_), p(emb_ln_b_)), config_.dropout);
  EncoderOutput<T> out;
  for (const Block& b : blocks_) {
    Var<T> a = attend(tape, b, x, key_mask, trainable, out.attention);
    x = ad::layer_norm(ad::add(x, ad::dropout(a, config_.dropout)), p(b.ln1_g), p(b.ln1_b));
    Var<T> f = ad::gelu(ad::add(ad::matmul(x, p(b.w1)), p(b.b1)));
    f = ad::add(ad::matmul(f, p(b.w2)), p(b.b2));
    x = ad::layer_norm(ad::add(x, ad::dropout(f, config_.dropout)), p(b.ln2_g), p(b.ln2_b));
    out.hidden.push_back(x);
  }
  return out;
}

// Aggregation -----------------------------------------------------------------

AggregationMode parse_aggregation_mode(std::string_view name) {
  if (name == "last" || name == "last_layer" || name == "last-layer") return AggregationMode::last_layer;
  if (name == "mean") return AggregationMode::mean;
  if (name == "scalar-mix" || name == "scalar_mix" || name == "mix") return AggregationMode::scalar_mix;
  throw ConfigError("unknown aggregation mode: " + std::string(name));
}

std::string_view aggregation_mode_name(AggregationMode m) {
  switch (m) {
    case AggregationMode::last_layer: return "last";
    case AggregationMode::mean: return "mean";
    case AggregationMode::scalar_mix: return "scalar-mix";
  }
  return "last";
}

std::vector<std::size_t> parse_layer_set(std::string_view text, std::size_t n_layers) {
  auto index = [&](std::string_view s) {
    const long long v = parse_int(s, "layer index");
    if (v < 0 || static_cast<std::size_t>(v) >= n_layers) {
      throw ConfigError("layer index " + std::string(s) + " out of range for " + std::to_string(n_layers) +
                        " layers");
    }
    return static_cast<std::size_t>(v);
  };
  std::vector<std::size_t> out;
  if (text == "all") {
    for (std::size_t j = 0; j < n_layers; ++j) out.push_back(j);
    return out;
  }
  if (const auto dash = text.find('-'); dash != std::string_view::npos && dash > 0) {
    const std::size_t a = index(text.substr(0, dash)), b = index(text.substr(dash + 1));
    if (a > b) throw ConfigError("empty layer range " + std::string(text));
    for (std::size_t j = a; j <= b; ++j) out.push_back(j);
    return out;
  }
  out.push_back(index(text));
  return out;
}

std::string layer_set_string(std::span<const std::size_t> layers, std::size_t n_layers) {
  if (layers.empty()) return "";
  if (layers.size() == n_layers && n_layers > 1) return "all";
  if (layers.size() == 1) return std::to_string(layers[0]);
  return std::to_string(layers.front()) + "-" + std::to_string(layers.back());
}

void AggregationSpec::normalize(std::size_t n_layers) {
  if (layers.empty()) {
    if (mode != AggregationMode::last_layer) throw ConfigError("aggregation: empty layer set");
    layers = {n_layers - 1};
  }
  std::sort(layers.begin(), layers.end());
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  if (layers.back() >= n_layers) {
    throw ConfigError("aggregation: layer " + std::to_string(layers.back()) + " out of range for " +
                      std::to_string(n_layers) + " layers");
  }
  // last-layer reads the top block of the selected set
  if (mode == AggregationMode::last_layer) layers = {layers.back()};
}

std::string AggregationSpec::name() const {
  const std::string base = mode == AggregationMode::last_layer ? "last-layer" : std::string(aggregation_mode_name(mode));
  return base + (trainable ? "-ft" : "-fz");
}

template <typename T>
ScalarMix<T>::ScalarMix(std::size_t n_layers, ParameterStore<T>& store, const std::string& prefix) {
  s_ = &store.add(prefix + "s", {n_layers});
  gamma_ = &store.add(prefix + "gamma", {1});
  gamma_->value.fill(T(1));
}

template <typename T>
Var<T> ScalarMix<T>::mix(Tape<T>& tape, std::span<const Var<T>> hidden, std::span<const std::size_t> layers) const {
  if (layers.empty()) throw ConfigError("scalar mix: empty layer set");
  std::vector<int> ids;
  for (auto j : layers) {
    if (j >= hidden.size() || j >= s_->value.size()) throw ConfigError("scalar mix: layer " + std::to_string(j) + " out of range");
    ids.push_back(static_cast<int>(j));
  }
  Var<T> s = ad::reshape(tape.param(*s_), Shape{s_->value.size(), 1});
  Var<T> w = ad::softmax(ad::reshape(ad::gather_rows(s, ids), Shape{ids.size()}));
  Var<T> r = ad::mul(hidden[layers[0]], ad::slice(w, 0, 0, 1));
  for (std::size_t k = 1; k < layers.size(); ++k) {
    r = ad::add(r, ad::mul(hidden[layers[k]], ad::slice(w, 0, k, k + 1)));
  }
  return ad::mul(r, tape.param(*gamma_));
}

template <typename T>
std::vector<double> ScalarMix<T>::weights(std::span<const std::size_t> layers) const {
  double mx = -std::numeric_limits<double>::infinity();
  for (auto j : layers) mx = std::max(mx, static_cast<double>(s_->value[j]));
  std::vector<double> w;
  double total = 0;
  for (auto j : layers) {
    w.push_back(std::exp(static_cast<double>(s_->value[j]) - mx));
    total += w.back();
  }
  for (auto& x : w) x /= total;
  return w;
}

template <typename T>
Var<T> aggregate(Tape<T>& tape, const EncoderOutput<T>& out, const AggregationSpec& spec, const ScalarMix<T>* mix) {
  const std::size_t L = out.hidden.size();
  if (L == 0) throw std::invalid_argument("aggregate: empty encoder output");
  for (auto j : spec.layers) {
    if (j >= L) throw ConfigError("aggregate: layer " + std::to_string(j) + " out of range for " + std::to_string(L));
  }
  switch (spec.mode) {
    case AggregationMode::last_layer:
      return spec.layers.empty() ? out.hidden.back() : out.hidden[spec.layers.back()];
    case AggregationMode::mean: {
      if (spec.layers.empty()) throw ConfigError("aggregate: empty layer set");
      if (spec.layers.size() == 1) return out.hidden[spec.layers[0]];
      Var<T> r = out.hidden[spec.layers[0]];
      for (std::size_t k = 1; k < spec.layers.size(); ++k) r = ad::add(r, out.hidden[spec.layers[k]]);
      return ad::scale(r, 1.0 / static_cast<double>(spec.layers.size()));
    }
    case AggregationMode::scalar_mix:
      if (!mix) throw std::invalid_argument("aggregate: scalar mix parameters missing");
      return mix->mix(tape, out.hidden, spec.layers);
  }
  return out.hidden.back();
}

// MLM --------------------------------------------------------------------------

void MlmConfig::validate() const {
  if (top_k < 1) throw ConfigError("mlm: top_k must be at least 1");
  for (double p : {mask_rate, replace_prob, random_prob, keep_prob}) {
    if (p < 0.0 || p > 1.0) throw ConfigError("mlm: probabilities must lie in [0, 1]");
  }
  if (std::abs(replace_prob + random_prob + keep_prob - 1.0) > 1e-9) {
    throw ConfigError("mlm: replace/random/keep proportions must sum to 1");
  }
}

MlmConfig MlmConfig::from_config(Config& cfg, const std::string& prefix) {
  MlmConfig c;
  c.top_k = static_cast<std::size_t>(cfg.resolve_int(prefix + "top_k", 5000));
  c.mask_rate = cfg.resolve_double(prefix + "mask_rate", 0.15);
  c.replace_prob = cfg.resolve_double(prefix + "replace", 0.8);
  c.random_prob = cfg.resolve_double(prefix + "random", 0.1);
  c.keep_prob = cfg.resolve_double(prefix + "keep", 0.1);
  c.validate();
  return c;
}

void MlmConfig::to_config(Config& cfg, const std::string& prefix) const {
  cfg.set(prefix + "top_k", std::to_string(top_k));
  cfg.set(prefix + "mask_rate", format_double(mask_rate));
  cfg.set(prefix + "replace", format_double(replace_prob));
  cfg.set(prefix + "random", format_double(random_prob));
  cfg.set(prefix + "keep", format_double(keep_prob));
}

MlmVocab MlmVocab::build(const RawCorpus& corpus, std::size_t top_k) {
  MlmVocab v;
  v.words_.emplace_back(kUnkWord);
  // specials never become prediction targets
  for (auto& [w, c] : top_k_words(corpus, top_k + kSpecialWords.size())) {
    if (v.words_.size() > top_k) break;
    if (is_special_word(w)) continue;
    v.index_.emplace(w, static_cast<int>(v.words_.size()));
    v.words_.push_back(w);
  }
  return v;
}

int MlmVocab::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? 0 : it->second;
}

std::string MlmVocab::to_text() const {
  std::string out;
  for (const auto& w : words_) {
    out += w;
    out += '\n';
  }
  return out;
}

MlmVocab MlmVocab::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != kUnkWord) throw std::runtime_error("mlm vocabulary: missing [UNK] header");
  MlmVocab v;
  v.words_.push_back(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    v.index_.emplace(line, static_cast<int>(v.words_.size()));
    v.words_.push_back(line);
  }
  return v;
}

MlmExample mlm_mask(std::span<const std::string> words, const MlmVocab& vocab, const MlmConfig& config,
                    std::uint64_t seed) {
  Rng rng(seed);
  MlmExample ex;
  ex.corrupted.assign(words.begin(), words.end());
  ex.targets.assign(words.size(), -1);
  const std::size_t k = vocab.size() - 1;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (is_special_word(words[i]) || !rng.bernoulli(config.mask_rate)) continue;
    ex.selected.push_back(i);
    const double r = rng.uniform();
    if (r < config.replace_prob) {
      ex.corrupted[i] = std::string(kMaskWord);
    } else if (r < config.replace_prob + config.random_prob && k > 0) {
      ex.corrupted[i] = vocab.word(1 + rng.below(k));
    }
    if (const int t = vocab.id(words[i]); t > 0) ex.targets[i] = t;
  }
  return ex;
}

template <typename T>
MlmHead<T>::MlmHead(std::size_t d_model, std::size_t n_outputs, ParameterStore<T>& store, const std::string& prefix,
                    Rng& rng)
    : n_outputs_(n_outputs) {
  w_ = &store.add(prefix + "w", {d_model, n_outputs});
  init_xavier(w_->value, d_model, n_outputs, rng);
  b_ = &store.add(prefix + "b", {n_outputs});
}

template <typename T>
Var<T> MlmHead<T>::logits(Var<T> hidden, bool trainable) const {
  Tape<T>& tape = *hidden.tape;
  return ad::add(ad::matmul(hidden, tape.param(*w_, trainable)), tape.param(*b_, trainable));
}

template <typename T>
MlmLoss<T> mlm_loss(Tape<T>& tape, Var<T> hidden, std::span<const int> targets, const MlmHead<T>& head,
                    bool trainable) {
  if (hidden.shape().size() != 2 || hidden.dim(0) != targets.size()) {
    throw ShapeError("mlm_loss: hidden " + shape_string(hidden.shape()) + " for " + std::to_string(targets.size()) +
                     " targets");
  }
  std::vector<int> rows, tg;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    if (static_cast<std::size_t>(targets[i]) >= head.outputs()) {
      throw std::out_of_range("mlm_loss: target " + std::to_string(targets[i]) + " outside " +
                              std::to_string(head.outputs()) + " outputs");
    }
    rows.push_back(static_cast<int>(i));
    tg.push_back(targets[i]);
  }
  MlmLoss<T> out;
  if (rows.empty()) {
    out.loss = tape.constant(Tensor<T>::scalar(T(0)));
    return out;
  }
  Var<T> ce = ad::cross_entropy(head.logits(ad::gather_rows(hidden, rows), trainable), tg);
  out.count = rows.size();
  out.log_likelihood = -static_cast<double>(ce.value()[0]);
  out.loss = ad::scale(ce, 1.0 / static_cast<double>(rows.size()));
  return out;
}

template class TransformerEncoder<float>;
template class TransformerEncoder<double>;
template class ScalarMix<float>;
template class ScalarMix<double>;
template class MlmHead<float>;
template class MlmHead<double>;
template Var<float> aggregate<float>(Tape<float>&, const EncoderOutput<float>&, const AggregationSpec&,
                                     const ScalarMix<float>*);
template Var<double> aggregate<double>(Tape<double>&, const EncoderOutput<double>&, const AggregationSpec&,
                                       const ScalarMix<double>*);
template MlmLoss<float> mlm_loss<float>(Tape<float>&, Var<float>, std::span<const int>, const MlmHead<float>&, bool);
template MlmLoss<double> mlm_loss<double>(Tape<double>&, Var<double>, std::span<const int>, const MlmHead<double>&,
                                          bool);

}  // namespace charparse
