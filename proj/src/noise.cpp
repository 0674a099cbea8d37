#include "charparse/corpus.hpp"

#include "charparse/rng.hpp"
#include "charparse/utf8.hpp"

namespace charparse {

namespace {

void check_probability(double p, const std::string& what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw std::invalid_argument("noise rules: " + what + " must be in [0,1], got " + format_double(p));
  }
}

std::string apply_rule(const std::string& word, const SubstitutionRule& rule, Rng& rng) {
  if (rule.pattern.empty()) return word;
  std::string out;
  std::size_t pos = 0;
  while (pos < word.size()) {
    const auto hit = word.find(rule.pattern, pos);
    if (hit == std::string::npos) break;
    out.append(word, pos, hit - pos);
    if (rng.bernoulli(rule.probability)) {
      out += rule.replacement;
    } else {
      out += rule.pattern;
    }
    pos = hit + rule.pattern.size();
  }
  out.append(word, pos, std::string::npos);
  return out;
}

std::string apply_edits(const std::string& word, const NoiseRuleSet& rules, Rng& rng) {
  if (rules.insert_rate == 0.0 && rules.delete_rate == 0.0 && rules.substitute_rate == 0.0 &&
      rules.duplicate_rate == 0.0) {
    return word;
  }
  const auto alphabet = utf8::decode(rules.alphabet);
  auto cps = utf8::decode(word);
  std::vector<char32_t> out;
  out.reserve(cps.size() * 2);
  for (std::size_t i = 0; i < cps.size(); ++i) {
    if (!alphabet.empty() && rng.bernoulli(rules.insert_rate)) {
      out.push_back(alphabet[rng.below(alphabet.size())]);
    }
    // a word never loses its last remaining character
    const bool last_left = out.empty() && i + 1 == cps.size();
    if (!last_left && rng.bernoulli(rules.delete_rate)) continue;
    char32_t c = cps[i];
    if (!alphabet.empty() && rng.bernoulli(rules.substitute_rate)) {
      c = alphabet[rng.below(alphabet.size())];
    }
    out.push_back(c);
    if (rng.bernoulli(rules.duplicate_rate)) out.push_back(c);
  }
  return utf8::encode(out);
}

}  // namespace

void NoiseRuleSet::validate() const {
  check_probability(word_probability, "word_prob");
  check_probability(insert_rate, "insert_rate");
  check_probability(delete_rate, "delete_rate");
  check_probability(substitute_rate, "substitute_rate");
  check_probability(duplicate_rate, "duplicate_rate");
  for (const auto& r : rules) check_probability(r.probability, "rule probability");
}

NoiseRuleSet NoiseRuleSet::from_config(Config& cfg) {
  NoiseRuleSet r;
  r.seed = static_cast<std::uint64_t>(cfg.resolve_int("seed", 0));
  r.word_probability = cfg.resolve_double("word_prob", 0.0);
  r.insert_rate = cfg.resolve_double("insert_rate", 0.0);
  r.delete_rate = cfg.resolve_double("delete_rate", 0.0);
  r.substitute_rate = cfg.resolve_double("substitute_rate", 0.0);
  r.duplicate_rate = cfg.resolve_double("duplicate_rate", 0.0);
  r.alphabet = cfg.resolve("alphabet", r.alphabet);
  // rule = <pattern> -> <replacement> [@ <probability>]
  for (const auto& spec : cfg.get_all("rule")) {
    const auto arrow = spec.find("->");
    if (arrow == std::string::npos) throw ConfigError("noise rule without '->': " + spec);
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t");
      return s.substr(b, e - b + 1);
    };
    SubstitutionRule rule;
    rule.pattern = trim(spec.substr(0, arrow));
    std::string rest = spec.substr(arrow + 2);
    const auto at = rest.rfind('@');
    if (at != std::string::npos) {
      rule.probability = parse_double(trim(rest.substr(at + 1)), "rule probability");
      rest = rest.substr(0, at);
    }
    rule.replacement = trim(rest);
    if (rule.pattern.empty()) throw ConfigError("noise rule with empty pattern: " + spec);
    r.rules.push_back(std::move(rule));
  }
  r.validate();
  return r;
}

Config NoiseRuleSet::to_config() const {
  Config cfg;
  cfg.set("seed", std::to_string(seed));
  cfg.set("word_prob", format_double(word_probability));
  cfg.set("insert_rate", format_double(insert_rate));
  cfg.set("delete_rate", format_double(delete_rate));
  cfg.set("substitute_rate", format_double(substitute_rate));
  cfg.set("duplicate_rate", format_double(duplicate_rate));
  cfg.set("alphabet", alphabet);
  for (const auto& rule : rules) {
    std::string line = rule.pattern + " -> " + rule.replacement;
    if (rule.probability != 1.0) line += " @ " + format_double(rule.probability);
    cfg.add("rule", line);
  }
  return cfg;
}

NoiseRuleSet default_noise_rules(double word_probability, std::uint64_t seed) {
  NoiseRuleSet r;
  r.word_probability = word_probability;
  r.seed = seed;
  r.rules = {
      {"kh", "5", 0.5}, {"gh", "8", 0.3}, {"aa", "3", 0.5}, {"q", "9", 0.6},
      {"h", "7", 0.3},  {"ou", "u", 0.5}, {"ch", "sh", 0.3}, {"qu", "k", 0.5},
      {"e", "", 0.3},   {"i", "", 0.15},
  };
  r.delete_rate = 0.03;
  r.duplicate_rate = 0.05;
  r.substitute_rate = 0.02;
  return r;
}

Sentence inject_noise(const Sentence& sentence, const NoiseRuleSet& rules, std::uint64_t stream) {
  rules.validate();
  Sentence out = sentence;
  if (rules.word_probability == 0.0) return out;
  Rng rng(derive_seed(rules.seed, stream));
  for (auto& tok : out.tokens) {
    if (!rng.bernoulli(rules.word_probability)) continue;
    std::string form = tok.form;
    for (const auto& rule : rules.rules) form = apply_rule(form, rule, rng);
    form = apply_edits(form, rules, rng);
    // keep the form a well-formed CoNLL-U field
    if (form.empty()) form = tok.form;
    tok.form = std::move(form);
  }
  return out;
}

std::vector<Sentence> inject_noise(std::span<const Sentence> sentences, const NoiseRuleSet& rules) {
  std::vector<Sentence> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out.push_back(inject_noise(sentences[i], rules, i));
  }
  return out;
}

}  // namespace charparse
