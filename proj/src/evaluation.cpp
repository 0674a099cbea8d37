#include "charparse/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "charparse/model.hpp"
#include "charparse/rng.hpp"
#include "charparse/training.hpp"

namespace charparse {

ParseTree tree_of(const Sentence& s) {
  ParseTree t;
  for (const auto& tok : s.tokens) {
    t.heads.push_back(tok.head);
    t.labels.push_back(tok.deprel);
    t.tags.push_back(tok.upos);
  }
  return t;
}

EvalReport score(std::span<const Sentence> gold, std::span<const ParseTree> pred) {
  if (gold.empty()) throw std::invalid_argument("score: no sentences");
  if (gold.size() != pred.size()) {
    throw std::invalid_argument("score: " + std::to_string(gold.size()) + " gold sentences but " +
                                std::to_string(pred.size()) + " predictions");
  }
  EvalReport r;
  std::size_t upos = 0, heads = 0, labeled = 0;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& g = gold[s].tokens;
    const auto& p = pred[s];
    if (p.heads.size() != g.size() || p.labels.size() != g.size() || (!p.tags.empty() && p.tags.size() != g.size())) {
      throw std::invalid_argument("score: sentence " + std::to_string(s + 1) + " has " + std::to_string(g.size()) +
                                  " gold tokens but a prediction of " + std::to_string(p.heads.size()));
    }
    SentenceCounts c;
    c.tokens = g.size();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!p.tags.empty() && p.tags[i] == g[i].upos) ++c.upos;
      if (p.heads[i] == g[i].head) {
        ++c.heads;
        if (p.labels[i] == g[i].deprel) ++c.labeled;
      }
    }
    r.tokens += c.tokens;
    upos += c.upos;
    heads += c.heads;
    labeled += c.labeled;
    r.sentences.push_back(c);
  }
  if (r.tokens == 0) throw std::invalid_argument("score: no tokens");
  const double n = static_cast<double>(r.tokens);
  r.upos = 100.0 * static_cast<double>(upos) / n;
  r.uas = 100.0 * static_cast<double>(heads) / n;
  r.las = 100.0 * static_cast<double>(labeled) / n;
  return r;
}

EvalReport score(std::span<const Sentence> gold, std::span<const Sentence> pred) {
  std::vector<ParseTree> trees;
  trees.reserve(pred.size());
  for (const auto& s : pred) trees.push_back(tree_of(s));
  return score(gold, trees);
}

Metric parse_metric(std::string_view name) {
  if (name == "upos" || name == "UPOS") return Metric::upos;
  if (name == "uas" || name == "UAS") return Metric::uas;
  if (name == "las" || name == "LAS") return Metric::las;
  throw ConfigError("unknown metric: " + std::string(name));
}

namespace {

long long correct(const SentenceCounts& c, Metric m) {
  switch (m) {
    case Metric::upos: return static_cast<long long>(c.upos);
    case Metric::uas: return static_cast<long long>(c.heads);
    case Metric::las: return static_cast<long long>(c.labeled);
  }
  return 0;
}

}  // namespace

double significance(const EvalReport& a, const EvalReport& b, std::size_t trials, std::uint64_t seed, Metric metric) {
  if (trials < 100) throw std::invalid_argument("significance: at least 100 trials required");
  if (a.sentences.size() != b.sentences.size()) throw std::invalid_argument("significance: reports cover different sentence sets");
  const std::size_t n = a.sentences.size();
  std::vector<long long> diff(n);
  long long observed = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (a.sentences[s].tokens != b.sentences[s].tokens) {
      throw std::invalid_argument("significance: sentence " + std::to_string(s + 1) + " differs in length");
    }
    diff[s] = correct(a.sentences[s], metric) - correct(b.sentences[s], metric);
    observed += diff[s];
  }
  observed = std::llabs(observed);
  long long hits = 0;
#pragma omp parallel for reduction(+ : hits) schedule(static)
  for (long long t = 0; t < static_cast<long long>(trials); ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    long long gap = 0;
    for (std::size_t s = 0; s < n; ++s) gap += (rng.next() & 1u) ? -diff[s] : diff[s];
    if (std::llabs(gap) >= observed) ++hits;
  }
  return static_cast<double>(hits + 1) / static_cast<double>(trials + 1);
}

std::string format_triplet(const EvalReport& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f/%.2f/%.2f", r.upos, r.uas, r.las);
  return buf;
}

std::pair<double, double> subword_statistics(const Model& model, std::span<const Sentence> sentences) {
  std::size_t words = 0, unk = 0, pieces = 0;
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) {
      const auto seg = model.subword_vocab().segment(t.form);
      ++words;
      pieces += seg.size();
      unk += seg.size() == 1 && seg[0] == SubwordVocab::kUnkId;
    }
  }
  if (words == 0) return {0.0, 0.0};
  return {static_cast<double>(unk) / static_cast<double>(words), static_cast<double>(pieces) / static_cast<double>(words)};
}

RobustnessReport robustness_report(const Model& char_model, const Model& subword_model,
                                   std::span<const Sentence> treebank, const NoiseRuleSet& rules,
                                   const AggregationSpec& spec) {
  rules.validate();
  const std::vector<Sentence> noisy = inject_noise(treebank, rules);
  RobustnessReport report;
  for (const Model* m : {&char_model, &subword_model}) {
    RobustnessRow row;
    row.system = std::string(embedding_source_name(m->source()));
    row.clean = score(treebank, predict(*m, treebank, spec));
    row.noisy = score(noisy, predict(*m, noisy, spec));
    if (m->source() == EmbeddingSource::subword) {
      std::tie(row.unk_rate_clean, row.pieces_clean) = subword_statistics(*m, treebank);
      std::tie(row.unk_rate_noisy, row.pieces_noisy) = subword_statistics(*m, noisy);
    }
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::string RobustnessReport::table() const {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-10s %-20s %-20s %-22s %-13s %-13s\n", "system", "clean", "noisy",
                "delta", "unk clean/noisy", "pieces clean/noisy");
  out << buf;
  for (const auto& r : rows) {
    char delta[64];
    std::snprintf(delta, sizeof(delta), "%+.2f/%+.2f/%+.2f", r.noisy.upos - r.clean.upos, r.noisy.uas - r.clean.uas,
                  r.noisy.las - r.clean.las);
    char unk[32], pieces[32];
    std::snprintf(unk, sizeof(unk), "%.4f/%.4f", r.unk_rate_clean, r.unk_rate_noisy);
    std::snprintf(pieces, sizeof(pieces), "%.3f/%.3f", r.pieces_clean, r.pieces_noisy);
    std::snprintf(buf, sizeof(buf), "%-10s %-20s %-20s %-22s %-15s %-13s\n", r.system.c_str(), format_triplet(r.clean).c_str(),
                  format_triplet(r.noisy).c_str(), delta, unk, pieces);
    out << buf;
  }
  return out.str();
}

std::string RobustnessReport::tsv() const {
  std::ostringstream out;
  out << "system\tclean_upos\tclean_uas\tclean_las\tnoisy_upos\tnoisy_uas\tnoisy_las\t"
         "unk_rate_clean\tunk_rate_noisy\tpieces_clean\tpieces_noisy\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s\t%.2f\t%.2f\t%.2f\t%.2f\t%.2f\t%.2f\t%.4f\t%.4f\t%.3f\t%.3f\n", r.system.c_str(),
                  r.clean.upos, r.clean.uas, r.clean.las, r.noisy.upos, r.noisy.uas, r.noisy.las, r.unk_rate_clean,
                  r.unk_rate_noisy, r.pieces_clean, r.pieces_noisy);
    out << buf;
  }
  return out.str();
}

}  // namespace charparse
