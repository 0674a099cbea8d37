#include "charparse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace charparse {

namespace {

const std::vector<std::string> kDeterminers = {"el", "had", "wahed", "chi", "dik", "kol"};
const std::vector<std::string> kAdpositions = {"fi", "3la", "m3a", "men", "bla", "7ta"};
const std::vector<std::string> kPronouns = {"ana", "nta", "howa", "hiya", "7na", "homa", "ntouma", "nti"};
const std::vector<std::string> kConjunctions = {"w", "wla", "walakin"};
const std::vector<std::string> kPunct = {".", "?", "!"};

const std::vector<std::string> kOnsets = {"b", "d", "f", "g", "h", "j", "k", "l", "m", "n", "r", "s", "t",
                                          "w", "y", "z", "ch", "kh", "gh", "3", "7", "9", "q", "sh"};
const std::vector<std::string> kVowels = {"a", "i", "ou", "e", "a", "i"};

const std::vector<std::string> kNeutralEndings = {"", "e", "o"};

std::vector<std::string> make_words(std::size_t count, const std::vector<std::string>& prefixes,
                                    const std::vector<std::string>& suffixes, double cue_rate,
                                    std::set<std::string>& used, Rng& rng) {
  std::vector<std::string> out;
  while (out.size() < count) {
    const bool cued = rng.bernoulli(cue_rate);
    std::string w = cued ? prefixes[rng.below(prefixes.size())] : "";
    const std::size_t syllables = 1 + rng.below(2);
    for (std::size_t s = 0; s < syllables; ++s) {
      w += kOnsets[rng.below(kOnsets.size())];
      w += kVowels[rng.below(kVowels.size())];
    }
    w += kOnsets[rng.below(kOnsets.size())];
    w += cued ? suffixes[rng.below(suffixes.size())] : kNeutralEndings[rng.below(kNeutralEndings.size())];
    if (w.size() < 3 || !used.insert(w).second) continue;
    out.push_back(w);
  }
  return out;
}

std::vector<double> zipf_cdf(std::size_t n, double s) {
  std::vector<double> cdf(n);
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    total += 1.0 / std::pow(static_cast<double>(r + 1), s);
    cdf[r] = total;
  }
  for (auto& c : cdf) c /= total;
  return cdf;
}

}  // namespace

ToyGrammar::ToyGrammar(const SyntheticConfig& config) : config_(config) {
  Rng rng(derive_seed(config.seed, 0x51));
  std::set<std::string> used;
  for (const auto* list : {&kDeterminers, &kAdpositions, &kPronouns, &kConjunctions, &kPunct}) {
    used.insert(list->begin(), list->end());
  }
  nouns_ = make_words(config.nouns, {""}, {"a", "ou", "at"}, config.cue_rate, used, rng);
  verbs_ = make_words(config.verbs, {"y", "t", "n"}, {"it", "ou", ""}, config.cue_rate, used, rng);
  adjectives_ = make_words(config.adjectives, {""}, {"i", "ine", "ia"}, config.cue_rate, used, rng);
  adverbs_ = make_words(config.adverbs, {"b", ""}, {"ek", "an"}, config.cue_rate, used, rng);
  noun_cdf_ = zipf_cdf(nouns_.size() / 2, config.zipf);
  verb_cdf_ = zipf_cdf(verbs_.size(), config.zipf);
  adj_cdf_ = zipf_cdf(adjectives_.size(), config.zipf);
  adv_cdf_ = zipf_cdf(adverbs_.size(), config.zipf);
}

const std::string& ToyGrammar::pick(const std::vector<std::string>& words, const std::vector<double>& cdf,
                                    Rng& rng) const {
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), rng.uniform());
  const auto i = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  return words[i];
}

// Nouns are split into two halves (classes); `noun_class` picks the half.
int ToyGrammar::noun_phrase(std::vector<Node>& out, int noun_class, int depth, Rng& rng) const {
  if (depth == 0 && noun_class == 0 && rng.bernoulli(0.15)) {
    out.push_back({kPronouns[rng.below(kPronouns.size())], "PRON", "", -1});
    return static_cast<int>(out.size()) - 1;
  }
  std::vector<int> dependents;
  if (rng.bernoulli(0.7)) {
    out.push_back({kDeterminers[rng.below(kDeterminers.size())], "DET", "det", -1});
    dependents.push_back(static_cast<int>(out.size()) - 1);
  }
  if (rng.bernoulli(0.15)) {
    out.push_back({pick(adjectives_, adj_cdf_, rng), "ADJ", "amod", -1});
    dependents.push_back(static_cast<int>(out.size()) - 1);
  }
  const std::size_t half = nouns_.size() / 2;
  const std::string& noun = pick(nouns_, noun_cdf_, rng);
  const std::size_t ni = static_cast<std::size_t>(std::find(nouns_.begin(), nouns_.begin() + half, noun) - nouns_.begin());
  out.push_back({nouns_[ni + (noun_class == 1 ? half : 0)], "NOUN", "", -1});
  const int head = static_cast<int>(out.size()) - 1;
  if (rng.bernoulli(0.25)) {
    out.push_back({pick(adjectives_, adj_cdf_, rng), "ADJ", "amod", -1});
    dependents.push_back(static_cast<int>(out.size()) - 1);
  }
  for (int d : dependents) out[d].head = head;
  if (depth < 1 && rng.bernoulli(0.15)) {
    out.push_back({kAdpositions[rng.below(kAdpositions.size())], "ADP", "case", -1});
    const int adp = static_cast<int>(out.size()) - 1;
    const int pn = noun_phrase(out, 1, depth + 1, rng);
    out[adp].head = pn;
    out[pn].head = head;
    out[pn].deprel = "nmod";
  }
  return head;
}

int ToyGrammar::clause(std::vector<Node>& out, Rng& rng) const {
  // verb index parity decides which noun class its subject and object favour
  const std::string& verb = pick(verbs_, verb_cdf_, rng);
  const std::size_t vi = static_cast<std::size_t>(std::find(verbs_.begin(), verbs_.end(), verb) - verbs_.begin());
  const int subj_class = (vi % 2 == 0) == rng.bernoulli(0.9) ? 0 : 1;
  const bool vso = rng.bernoulli(0.2);
  int v = -1, subj = -1;
  if (vso) {
    out.push_back({verb, "VERB", "", -1});
    v = static_cast<int>(out.size()) - 1;
    subj = noun_phrase(out, subj_class, 0, rng);
  } else {
    subj = noun_phrase(out, subj_class, 0, rng);
    out.push_back({verb, "VERB", "", -1});
    v = static_cast<int>(out.size()) - 1;
  }
  out[subj].head = v;
  out[subj].deprel = "nsubj";
  if (rng.bernoulli(0.7)) {
    const int obj = noun_phrase(out, 1 - subj_class, 0, rng);
    out[obj].head = v;
    out[obj].deprel = "obj";
  }
  if (rng.bernoulli(0.3)) {
    out.push_back({kAdpositions[rng.below(kAdpositions.size())], "ADP", "case", -1});
    const int adp = static_cast<int>(out.size()) - 1;
    const int pn = noun_phrase(out, 1, 1, rng);
    out[adp].head = pn;
    out[pn].head = v;
    out[pn].deprel = "obl";
  }
  if (rng.bernoulli(0.3)) out.push_back({pick(adverbs_, adv_cdf_, rng), "ADV", "advmod", v});
  return v;
}

Sentence ToyGrammar::sample(Rng& rng) const {
  std::vector<Node> nodes;
  const int main = clause(nodes, rng);
  nodes[main].deprel = "root";
  if (rng.bernoulli(0.2)) {
    nodes.push_back({kConjunctions[rng.below(kConjunctions.size())], "CCONJ", "cc", -1});
    const int cc = static_cast<int>(nodes.size()) - 1;
    const int second = clause(nodes, rng);
    nodes[cc].head = second;
    nodes[second].head = main;
    nodes[second].deprel = "conj";
  }
  nodes.push_back({kPunct[rng.below(kPunct.size())], "PUNCT", "punct", main});
  Sentence s;
  std::string text;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    Token t;
    t.id = static_cast<int>(i) + 1;
    t.form = nodes[i].form;
    t.upos = nodes[i].upos;
    t.head = nodes[i].head + 1;
    t.deprel = nodes[i].deprel;
    s.tokens.push_back(std::move(t));
    if (!text.empty()) text += ' ';
    text += nodes[i].form;
  }
  s.comments.push_back("# text = " + text);
  return s;
}

std::vector<Sentence> ToyGrammar::treebank(std::size_t n, std::uint64_t seed) const {
  std::vector<Sentence> out;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    Sentence s = sample(rng);
    s.comments.insert(s.comments.begin(), "# sent_id = " + std::to_string(i + 1));
    out.push_back(std::move(s));
  }
  return out;
}

RawCorpus ToyGrammar::raw_corpus(std::size_t n, std::uint64_t seed) const {
  RawCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    c.sentences.push_back(sample(rng).forms());
  }
  return c;
}

}  // namespace charparse
