#include "charparse/char_encoder.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "charparse/specials.hpp"
#include "charparse/utf8.hpp"

namespace charparse {

namespace {

constexpr std::array<std::string_view, CharVocab::kReserved> kReservedNames = {
    "<pad>", "<bow>", "<eow>", "<unk>", "[CLS]", "[SEP]", "[MASK]", "[PAD]", "[UNK]"};

}  // namespace

CharVocab::CharVocab() = default;

void CharVocab::add(char32_t cp) {
  if (index_.contains(cp)) return;
  index_.emplace(cp, static_cast<int>(kReserved + chars_.size()));
  chars_.push_back(cp);
}

CharVocab CharVocab::build(const RawCorpus& corpus) {
  std::vector<std::string> words;
  for (const auto& s : corpus.sentences) words.insert(words.end(), s.begin(), s.end());
  return build(words);
}

CharVocab CharVocab::build(std::span<const std::string> words) {
  std::set<char32_t> seen;
  for (const auto& w : words) {
    if (is_special_word(w)) continue;
    for (char32_t cp : utf8::decode(w)) seen.insert(cp);
  }
  CharVocab v;
  for (char32_t cp : seen) v.add(cp);
  return v;
}

int CharVocab::id(char32_t cp) const {
  auto it = index_.find(cp);
  return it == index_.end() ? kUnk : it->second;
}

int CharVocab::special_id(std::string_view word) {
  for (std::size_t i = 0; i < kSpecialWords.size(); ++i) {
    if (kSpecialWords[i] == word) return kFirstSpecialWord + static_cast<int>(i);
  }
  return -1;
}

std::vector<int> CharVocab::encode(std::string_view word, std::size_t max_word_len) const {
  std::vector<int> out(max_word_len + 2, kPad);
  out[0] = kBow;
  if (const int sp = special_id(word); sp >= 0) {
    out[1] = sp;
    out[2] = kEow;
    return out;
  }
  const auto cps = utf8::decode(word);
  const std::size_t n = std::min(cps.size(), max_word_len);
  for (std::size_t i = 0; i < n; ++i) out[1 + i] = id(cps[i]);
  out[1 + n] = kEow;
  return out;
}

CharVocab::Batch CharVocab::encode_batch(std::span<const std::string> words, std::size_t max_word_len,
                                         std::size_t min_width) const {
  std::vector<std::vector<int>> rows;
  rows.reserve(words.size());
  Batch b;
  b.width = min_width;
  for (const auto& w : words) {
    rows.push_back(encode(w, max_word_len));
    const auto& r = rows.back();
    const auto eow = std::find(r.begin(), r.end(), kEow) - r.begin();
    b.width = std::max<std::size_t>(b.width, static_cast<std::size_t>(eow) + 1);
  }
  b.width = std::min(b.width, max_word_len + 2);
  b.ids.reserve(rows.size() * b.width);
  for (const auto& r : rows) b.ids.insert(b.ids.end(), r.begin(), r.begin() + b.width);
  return b;
}

std::string CharVocab::to_text() const {
  std::string out;
  for (auto name : kReservedNames) {
    out += name;
    out += '\n';
  }
  char buf[16];
  for (char32_t cp : chars_) {
    std::snprintf(buf, sizeof(buf), "U+%04X\n", static_cast<unsigned>(cp));
    out += buf;
  }
  return out;
}

CharVocab CharVocab::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  for (auto name : kReservedNames) {
    if (!std::getline(in, line) || line != name) {
      throw std::runtime_error("char vocabulary: expected reserved entry " + std::string(name));
    }
  }
  CharVocab v;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.size() < 3 || line.compare(0, 2, "U+") != 0) {
      throw std::runtime_error("char vocabulary: malformed entry '" + line + "'");
    }
    v.add(static_cast<char32_t>(std::stoul(line.substr(2), nullptr, 16)));
  }
  return v;
}

void CharVocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_text();
}

CharVocab CharVocab::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing vocabulary file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "gelu") return Activation::gelu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation: " + std::string(name));
}

std::string_view activation_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::gelu: return "gelu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "identity";
}

template <typename T>
Var<T> activate(Var<T> x, Activation a) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return ad::relu(x);
    case Activation::tanh: return ad::tanh(x);
    case Activation::gelu: return ad::gelu(x);
    case Activation::sigmoid: return ad::sigmoid(x);
  }
  return x;
}

std::size_t CharEncoderConfig::pooled_dim() const {
  std::size_t d = 0;
  for (const auto& k : kernels) d += k.second;
  return d;
}

void CharEncoderConfig::validate() const {
  if (kernels.empty()) throw ConfigError("char encoder: at least one kernel required");
  if (char_emb_dim == 0 || d_model == 0) throw ConfigError("char encoder: zero dimension");
  for (const auto& [w, f] : kernels) {
    if (w == 0 || f == 0) throw ConfigError("char encoder: kernel width and filter count must be positive");
    if (w > padded_len()) {
      throw ConfigError("char encoder: kernel width " + std::to_string(w) + " exceeds max_word_len + 2");
    }
  }
}

CharEncoderConfig CharEncoderConfig::from_config(Config& cfg, const std::string& prefix) {
  CharEncoderConfig c;
  c.char_emb_dim = static_cast<std::size_t>(cfg.resolve_int(prefix + "emb_dim", 16));
  const std::string spec = cfg.resolve(prefix + "kernels", "1:16,2:16,3:32,4:32,5:32");
  c.kernels.clear();
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("char kernels: expected width:filters, got " + item);
    c.kernels.emplace_back(static_cast<std::size_t>(parse_int(item.substr(0, colon), "kernel width")),
                           static_cast<std::size_t>(parse_int(item.substr(colon + 1), "kernel filters")));
  }
  c.n_highway = static_cast<std::size_t>(cfg.resolve_int(prefix + "highway", 2));
  c.max_word_len = static_cast<std::size_t>(cfg.resolve_int(prefix + "max_word_len", 50));
  c.conv_activation = parse_activation(cfg.resolve(prefix + "conv_activation", "tanh"));
  c.highway_activation = parse_activation(cfg.resolve(prefix + "highway_activation", "relu"));
  return c;
}

void CharEncoderConfig::to_config(Config& cfg, const std::string& prefix) const {
  cfg.set(prefix + "emb_dim", std::to_string(char_emb_dim));
  std::string spec;
  for (const auto& [w, f] : kernels) {
    if (!spec.empty()) spec += ',';
    spec += std::to_string(w) + ":" + std::to_string(f);
  }
  cfg.set(prefix + "kernels", spec);
  cfg.set(prefix + "highway", std::to_string(n_highway));
  cfg.set(prefix + "max_word_len", std::to_string(max_word_len));
  cfg.set(prefix + "conv_activation", std::string(activation_name(conv_activation)));
  cfg.set(prefix + "highway_activation", std::string(activation_name(highway_activation)));
}

template <typename T>
Var<T> highway(Var<T> x, Var<T> transform_w, Var<T> transform_b, Var<T> gate_w, Var<T> gate_b,
               Activation activation) {
  const std::size_t d = x.shape().back();
  if (transform_w.shape() != Shape{d, d} || gate_w.shape() != Shape{d, d}) {
    throw ShapeError("highway: square transform of width " + std::to_string(d) + " expected, got " +
                     shape_string(transform_w.shape()));
  }
  Var<T> h = activate(ad::add(ad::matmul(x, transform_w), transform_b), activation);
  Var<T> t = ad::sigmoid(ad::add(ad::matmul(x, gate_w), gate_b));
  // t*h + (1-t)*x == x + t*(h - x)
  return ad::add(x, ad::mul(t, ad::sub(h, x)));
}

template <typename T>
CharEncoder<T>::CharEncoder(const CharEncoderConfig& config, std::size_t vocab_size,
                            ParameterStore<T>& store, const std::string& prefix, Rng& rng)
    : config_(config), vocab_size_(vocab_size) {
  config_.validate();
  const std::size_t cd = config_.char_emb_dim;
  emb_ = &store.add(prefix + "emb", {vocab_size, cd});
  init_normal(emb_->value, 1.0 / std::sqrt(static_cast<double>(cd)), rng);
  for (std::size_t k = 0; k < config_.kernels.size(); ++k) {
    const auto [w, f] = config_.kernels[k];
    auto& W = store.add(prefix + "conv" + std::to_string(k) + ".w", {w * cd, f});
    init_xavier(W.value, w * cd, f, rng);
    conv_w_.push_back(&W);
    conv_b_.push_back(&store.add(prefix + "conv" + std::to_string(k) + ".b", {f}));
  }
  const std::size_t D = config_.pooled_dim();
  for (std::size_t i = 0; i < config_.n_highway; ++i) {
    const std::string hp = prefix + "highway" + std::to_string(i) + ".";
    HighwayParams h{};
    h.transform_w = &store.add(hp + "wh", {D, D});
    init_xavier(h.transform_w->value, D, D, rng);
    h.transform_b = &store.add(hp + "bh", {D});
    h.gate_w = &store.add(hp + "wt", {D, D});
    init_xavier(h.gate_w->value, D, D, rng);
    h.gate_b = &store.add(hp + "bt", {D});
    h.gate_b->value.fill(T(-1));
    highway_.push_back(h);
  }
  proj_w_ = &store.add(prefix + "proj.w", {D, config_.d_model});
  init_xavier(proj_w_->value, D, config_.d_model, rng);
  proj_b_ = &store.add(prefix + "proj.b", {config_.d_model});
}

template <typename T>
std::size_t CharEncoder<T>::min_width() const {
  std::size_t w = 1;
  for (const auto& k : config_.kernels) w = std::max(w, k.first);
  return w;
}

template <typename T>
Var<T> CharEncoder<T>::embed(Tape<T>& tape, std::span<const int> char_ids, std::size_t n_words,
                             bool trainable) const {
  if (n_words == 0 || char_ids.size() % n_words != 0) {
    throw ShapeError("char encoder: " + std::to_string(char_ids.size()) + " ids for " +
                     std::to_string(n_words) + " words");
  }
  const std::size_t len = char_ids.size() / n_words;
  if (len < min_width() || len > config_.padded_len()) {
    throw ShapeError("char encoder: row length " + std::to_string(len) + " outside [" +
                     std::to_string(min_width()) + ", " + std::to_string(config_.padded_len()) + "]");
  }
  for (int id : char_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
      throw std::out_of_range("char encoder: id " + std::to_string(id) + " outside vocabulary");
    }
  }
  // real length of each row: up to and including [EOW]
  std::vector<std::size_t> word_len(n_words, len);
  for (std::size_t i = 0; i < n_words; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      if (char_ids[i * len + j] == CharVocab::kEow) {
        word_len[i] = j + 1;
        break;
      }
    }
  }
  std::vector<std::size_t> steps(n_words);
  Var<T> table = tape.param(*emb_, trainable);
  Var<T> x = ad::reshape(ad::gather_rows(table, char_ids), Shape{n_words, len, config_.char_emb_dim});
  std::vector<Var<T>> pooled;
  for (std::size_t k = 0; k < config_.kernels.size(); ++k) {
    Var<T> c = ad::conv1d(x, tape.param(*conv_w_[k], trainable));
    c = activate(ad::add(c, tape.param(*conv_b_[k], trainable)), config_.conv_activation);
    const std::size_t w = config_.kernels[k].first;
    for (std::size_t i = 0; i < n_words; ++i) steps[i] = word_len[i] >= w ? word_len[i] - w + 1 : 1;
    pooled.push_back(ad::max_over_time<T>(c, steps));
  }
  Var<T> h = pooled.size() == 1 ? pooled[0] : ad::concat<T>(pooled, 1);
  for (const auto& hw : highway_) {
    h = highway(h, tape.param(*hw.transform_w, trainable), tape.param(*hw.transform_b, trainable),
                tape.param(*hw.gate_w, trainable), tape.param(*hw.gate_b, trainable),
                config_.highway_activation);
  }
  return ad::add(ad::matmul(h, tape.param(*proj_w_, trainable)), tape.param(*proj_b_, trainable));
}

template Var<float> activate<float>(Var<float>, Activation);
template Var<double> activate<double>(Var<double>, Activation);
template Var<float> highway<float>(Var<float>, Var<float>, Var<float>, Var<float>, Var<float>, Activation);
template Var<double> highway<double>(Var<double>, Var<double>, Var<double>, Var<double>, Var<double>, Activation);
template class CharEncoder<float>;
template class CharEncoder<double>;

}  // namespace charparse
