#include "charparse/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace charparse {

ConlluError::ConlluError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

std::vector<std::string> Sentence::forms() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.form);
  return out;
}

bool is_single_rooted_tree(const std::vector<int>& heads) {
  const int n = static_cast<int>(heads.size());
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    if (heads[i] < 0 || heads[i] > n || heads[i] == i + 1) return false;
    if (heads[i] == 0) ++roots;
  }
  if (roots != 1) return false;
  // every node must reach the root without revisiting
  std::vector<int> state(n + 1, 0);  // 0 unvisited, 1 on path, 2 done
  state[0] = 2;
  for (int start = 1; start <= n; ++start) {
    std::vector<int> path;
    int v = start;
    while (state[v] == 0) {
      state[v] = 1;
      path.push_back(v);
      v = heads[v - 1];
    }
    if (state[v] == 1) return false;
    for (int p : path) state[p] = 2;
  }
  return true;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    auto tab = line.find('\t', pos);
    if (tab == std::string_view::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, tab - pos));
    pos = tab + 1;
  }
  return out;
}

bool parse_int_field(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

struct PendingSentence {
  Sentence sentence;
  std::vector<std::size_t> lines;  // source line per token
};

void validate(const PendingSentence& pending, const ConlluOptions& options,
              std::vector<std::string>* warnings) {
  const auto& toks = pending.sentence.tokens;
  const int n = static_cast<int>(toks.size());
  std::size_t root_count = 0;
  for (int i = 0; i < n; ++i) {
    const auto& t = toks[i];
    if (t.head < 0 || t.head > n) {
      throw ConlluError(pending.lines[i], "head " + std::to_string(t.head) + " out of range");
    }
    if (t.head == t.id) throw ConlluError(pending.lines[i], "token is its own head");
    if (t.head == 0) {
      ++root_count;
      if (root_count > 1) {
        if (!options.allow_multi_root) throw ConlluError(pending.lines[i], "multiple roots");
        if (warnings) {
          warnings->push_back("line " + std::to_string(pending.lines[i]) + ": multiple roots");
        }
      }
    }
  }
  // acyclicity: walk up from every token
  std::vector<int> state(n + 1, 0);
  state[0] = 2;
  for (int start = 1; start <= n; ++start) {
    std::vector<int> path;
    int v = start;
    while (state[v] == 0) {
      state[v] = 1;
      path.push_back(v);
      v = toks[v - 1].head;
    }
    if (state[v] == 1) throw ConlluError(pending.lines[v - 1], "cyclic heads");
    for (int p : path) state[p] = 2;
  }
  if (root_count == 0) {
    throw ConlluError(pending.lines.empty() ? 0 : pending.lines.front(), "no root");
  }
}

}  // namespace

std::vector<Sentence> parse_conllu(std::string_view text, const ConlluOptions& options,
                                   std::vector<std::string>* warnings) {
  std::vector<Sentence> out;
  PendingSentence pending;
  bool open = false;

  auto flush = [&]() {
    if (!open) return;
    if (!pending.sentence.tokens.empty()) {
      validate(pending, options, warnings);
      out.push_back(std::move(pending.sentence));
    }
    pending = PendingSentence{};
    open = false;
  };

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);

    if (line.find_first_not_of(" \t") == std::string_view::npos) {
      flush();
      continue;
    }
    open = true;
    if (line.front() == '#') {
      pending.sentence.comments.emplace_back(line);
      continue;
    }
    auto cols = split_tabs(line);
    if (cols.size() != 10) {
      throw ConlluError(line_no, "expected 10 tab-separated columns, found " +
                                     std::to_string(cols.size()));
    }
    // multiword ranges and empty nodes are not syntactic words
    if (cols[0].find('-') != std::string_view::npos || cols[0].find('.') != std::string_view::npos) {
      continue;
    }
    Token t;
    if (!parse_int_field(cols[0], t.id) || t.id < 1) {
      throw ConlluError(line_no, "invalid token id '" + std::string(cols[0]) + "'");
    }
    const int expected = static_cast<int>(pending.sentence.tokens.size()) + 1;
    if (t.id != expected) {
      if (t.id < expected) throw ConlluError(line_no, "duplicate id " + std::to_string(t.id));
      throw ConlluError(line_no, "non-contiguous id " + std::to_string(t.id));
    }
    if (!parse_int_field(cols[6], t.head)) throw ConlluError(line_no, "non-integer head");
    t.form = std::string(cols[1]);
    t.lemma = std::string(cols[2]);
    t.upos = std::string(cols[3]);
    t.xpos = std::string(cols[4]);
    t.feats = std::string(cols[5]);
    t.deprel = std::string(cols[7]);
    t.deps = std::string(cols[8]);
    t.misc = std::string(cols[9]);
    pending.sentence.tokens.push_back(std::move(t));
    pending.lines.push_back(line_no);
  }
  flush();
  return out;
}

std::vector<Sentence> read_conllu(const std::filesystem::path& path, const ConlluOptions& options,
                                  std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_conllu(ss.str(), options, warnings);
}

std::string write_conllu(std::span<const Sentence> sentences,
                         std::optional<std::span<const ParseTree>> predictions) {
  if (predictions && predictions->size() != sentences.size()) {
    throw std::invalid_argument("write_conllu: " + std::to_string(predictions->size()) +
                                " predictions for " + std::to_string(sentences.size()) +
                                " sentences");
  }
  auto field = [](const std::string& s) -> const std::string& {
    static const std::string underscore = "_";
    return s.empty() ? underscore : s;
  };
  std::string out;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const auto& sent = sentences[s];
    const ParseTree* tree = predictions ? &(*predictions)[s] : nullptr;
    if (tree) {
      const auto n = sent.size();
      if (tree->heads.size() != n || tree->labels.size() != n ||
          (!tree->tags.empty() && tree->tags.size() != n)) {
        throw std::invalid_argument("write_conllu: prediction length mismatch in sentence " +
                                    std::to_string(s + 1));
      }
    }
    for (const auto& c : sent.comments) {
      out += c;
      out += '\n';
    }
    for (std::size_t i = 0; i < sent.tokens.size(); ++i) {
      const auto& t = sent.tokens[i];
      const std::string& upos = (tree && !tree->tags.empty()) ? tree->tags[i] : t.upos;
      const int head = tree ? tree->heads[i] : t.head;
      const std::string& deprel = tree ? tree->labels[i] : t.deprel;
      out += std::to_string(t.id);
      for (const std::string* f : {&t.form, &t.lemma, &upos, &t.xpos, &t.feats}) {
        out += '\t';
        out += field(*f);
      }
      out += '\t';
      out += std::to_string(head);
      for (const std::string* f : {&deprel, &t.deps, &t.misc}) {
        out += '\t';
        out += field(*f);
      }
      out += '\n';
    }
    out += '\n';
  }
  return out;
}

std::size_t RawCorpus::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::vector<std::string> split_whitespace(std::string_view line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos < line.size()) {
    auto b = line.find_first_not_of(" \t\r", pos);
    if (b == std::string_view::npos) break;
    auto e = line.find_first_of(" \t\r", b);
    if (e == std::string_view::npos) e = line.size();
    out.emplace_back(line.substr(b, e - b));
    pos = e;
  }
  return out;
}

bool RawCorpusReader::next(std::vector<std::string>& sentence) {
  std::string line;
  while (std::getline(in_, line)) {
    sentence = split_whitespace(line);
    if (!sentence.empty()) return true;
  }
  return false;
}

RawCorpus parse_raw_corpus(std::string_view text) {
  RawCorpus corpus;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto words = split_whitespace(text.substr(pos, nl - pos));
    if (!words.empty()) corpus.sentences.push_back(std::move(words));
    pos = nl + 1;
  }
  return corpus;
}

RawCorpus read_raw_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read corpus " + path.string());
  RawCorpus corpus;
  RawCorpusReader reader(in);
  std::vector<std::string> sentence;
  while (reader.next(sentence)) corpus.sentences.push_back(std::move(sentence));
  return corpus;
}

std::vector<WordCount> top_k_words(const RawCorpus& corpus, std::size_t k) {
  if (k < 1) throw std::invalid_argument("top_k_words: k must be >= 1");
  if (corpus.token_count() == 0) throw std::invalid_argument("top_k_words: empty corpus");
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& s : corpus.sentences) {
    for (const auto& w : s) ++counts[w];
  }
  std::vector<WordCount> all(counts.begin(), counts.end());
  auto by_rank = [](const WordCount& a, const WordCount& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  };
  const std::size_t keep = std::min(k, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(), by_rank);
  all.resize(keep);
  return all;
}

CoverageReport vocab_coverage(const std::unordered_set<std::string>& vocab, const RawCorpus& corpus,
                              const Segmenter& segmenter) {
  if (vocab.empty()) throw std::invalid_argument("vocab_coverage: empty vocabulary");
  if (corpus.token_count() == 0) throw std::invalid_argument("vocab_coverage: empty corpus");
  CoverageReport report;
  std::size_t segments = 0;
  for (const auto& s : corpus.sentences) {
    for (const auto& w : s) {
      ++report.tokens;
      if (vocab.contains(w)) ++report.covered;
      if (segmenter) segments += segmenter(w);
    }
  }
  report.fraction = static_cast<double>(report.covered) / static_cast<double>(report.tokens);
  if (segmenter) {
    report.mean_segments = static_cast<double>(segments) / static_cast<double>(report.tokens);
  }
  return report;
}

}  // namespace charparse
