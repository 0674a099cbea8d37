#include "charparse/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "charparse/checkpoint.hpp"
#include "charparse/corpus.hpp"
#include "charparse/evaluation.hpp"
#include "charparse/synthetic.hpp"
#include "charparse/training.hpp"

namespace charparse {

namespace fs = std::filesystem;

namespace {

// Input problems the operator must fix: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw UsageError(std::string("missing ") + what);
  if (!fs::exists(path)) throw UsageError(std::string(what) + " not found: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

// Options shared by the training commands.
struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  long long seed = -1;
  std::string pipeline;
  long long epochs = -1;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "flat key = value configuration file");
  cmd->add_option("--set", c.overrides, "configuration override key=value (repeatable)");
  cmd->add_option("--out", c.out_dir, "output directory")->required();
  cmd->add_option("--seed", c.seed, "training seed");
  cmd->add_option("--pipeline", c.pipeline, "character or subword");
  cmd->add_option("--epochs", c.epochs, "training epochs");
}

Config base_config(const Common& c) {
  Config cfg;
  if (!c.config_path.empty()) {
    require_file(c.config_path, "config file");
    cfg = Config::load(c.config_path);
  }
  for (const auto& o : c.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + o);
    cfg.set(o.substr(0, eq), o.substr(eq + 1));
  }
  if (c.seed >= 0) cfg.set("train.seed", std::to_string(c.seed));
  if (!c.pipeline.empty()) cfg.set("encoder.source", c.pipeline);
  if (c.epochs >= 0) cfg.set("train.epochs", std::to_string(c.epochs));
  return cfg;
}

// Resolves every model and training key so run.cfg lists the full setup.
struct Resolved {
  Config cfg;
  ModelConfig model;
  TrainConfig train;
};

Resolved resolve(Config cfg) {
  Resolved r;
  r.model = ModelConfig::from_config(cfg);
  r.train = TrainConfig::from_config(cfg);
  r.cfg = std::move(cfg);
  return r;
}

Config model_train_config(const ModelConfig& m, const TrainConfig& t) {
  Config c;
  m.to_config(c);
  t.to_config(c);
  return c;
}

RawCorpus corpus_of(std::span<const Sentence> sentences) {
  RawCorpus c;
  for (const auto& s : sentences) c.sentences.push_back(s.forms());
  return c;
}

std::vector<Sentence> read_treebank(const std::string& path, bool allow_multi_root, std::ostream& err) {
  require_file(path, "treebank");
  std::vector<std::string> warnings;
  auto s = read_conllu(path, ConlluOptions{allow_multi_root}, &warnings);
  for (const auto& w : warnings) err << "warning: " << path << ": " << w << "\n";
  return s;
}

std::string report_row(const std::string& name, const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s\t%.2f\t%.2f\t%.2f\n", name.c_str(), r.upos, r.uas, r.las);
  return buf;
}

std::string aligned_table(const std::string& title, const std::string& tsv) {
  std::ostringstream out;
  out << title << "\n";
  std::istringstream in(tsv);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string cell;
    bool first = true;
    while (std::getline(cells, cell, '\t')) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), first ? "%-24s" : "%8s", cell.c_str());
      out << buf;
      first = false;
    }
    out << "\n";
  }
  return out.str();
}

// pretrain -------------------------------------------------------------------

struct PretrainArgs {
  Common common;
  std::string corpus, init;
};

int cmd_pretrain(const PretrainArgs& a, std::ostream& out, std::ostream& err) {
  Config cfg = base_config(a.common);
  require_file(a.corpus, "corpus file");
  if (!a.init.empty()) require_file(a.init, "checkpoint");
  Resolved r = resolve(cfg);
  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  r.cfg.save(dir / "run.cfg");

  const RawCorpus corpus = read_raw_corpus(a.corpus);
  Model model = a.init.empty() ? Model::create(r.model, corpus, r.train.seed)
                               : load_checkpoint(a.init, r.model.encoder.source);
  err << "pretraining " << embedding_source_name(model.source()) << " model, " << model.params().element_count()
      << " parameters, " << corpus.sentence_count() << " sentences\n";
  auto result = pretrain_mlm(model, corpus, r.train, &err);
  write_text(dir / "metrics.tsv", metrics_tsv(result.epochs));
  save_checkpoint(model, dir / "checkpoint", model_train_config(model.config(), r.train));
  out << "best epoch " << result.best_epoch << ", held-out MLM log-likelihood " << result.best_metric << "\n";
  return kExitOk;
}

// finetune -------------------------------------------------------------------

struct FinetuneArgs {
  Common common;
  std::string checkpoint, train, dev, test, corpus, layers, agg;
  bool frozen = false;
  bool allow_multi_root = false;
};

void apply_strategy(Config& cfg, const std::string& layers, const std::string& agg, bool frozen) {
  if (!layers.empty()) cfg.set("train.layers", layers);
  if (!agg.empty()) cfg.set("train.agg", agg);
  if (frozen) cfg.set("train.frozen", "true");
}

Model initial_model(const std::string& checkpoint, const std::string& corpus_path, std::span<const Sentence> train,
                    const Resolved& r) {
  if (!checkpoint.empty()) {
    Model m = load_checkpoint(checkpoint, r.model.encoder.source);
    if (m.config().encoder.n_layers != r.model.encoder.n_layers || m.config().encoder.d_model != r.model.encoder.d_model) {
      throw ConfigError("config mismatch: checkpoint encoder geometry differs from the configuration");
    }
    return m;
  }
  // Model+Task: random encoder, vocabularies from the available text
  RawCorpus corpus = corpus_path.empty() ? corpus_of(train) : read_raw_corpus(corpus_path);
  if (!corpus_path.empty()) {
    for (const auto& s : train) corpus.sentences.push_back(s.forms());
  }
  return Model::create(r.model, corpus, r.train.seed);
}

int cmd_finetune(const FinetuneArgs& a, std::ostream& out, std::ostream& err) {
  Config cfg = base_config(a.common);
  apply_strategy(cfg, a.layers, a.agg, a.frozen);
  if (!a.checkpoint.empty()) require_file(a.checkpoint, "checkpoint");
  if (!a.corpus.empty()) require_file(a.corpus, "corpus file");
  Resolved r = resolve(cfg);
  const auto spec = r.train.resolved_aggregation(r.model.encoder.n_layers);
  const auto train = read_treebank(a.train, a.allow_multi_root, err);
  std::vector<Sentence> dev;
  if (!a.dev.empty()) dev = read_treebank(a.dev, a.allow_multi_root, err);
  if (dev.empty() && r.train.early_stopping) {
    err << "note: no dev treebank, training for all " << r.train.epochs << " epochs\n";
    r.train.early_stopping = false;
  }
  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  r.cfg.save(dir / "run.cfg");

  Model model = initial_model(a.checkpoint, a.corpus, train, r);
  err << "fine-tuning " << spec.name() << " over layers " << layer_set_string(spec.layers, r.model.encoder.n_layers)
      << "\n";
  auto result = finetune_task(model, train, dev, r.train, &err);
  write_text(dir / "metrics.tsv", metrics_tsv(result.epochs));
  save_checkpoint(model, dir / "checkpoint", model_train_config(model.config(), r.train));
  std::string table = "system\tUPOS\tUAS\tLAS\n";
  if (!dev.empty()) {
    const auto pred = predict(model, dev, spec);
    write_text(dir / "dev_pred.conllu", write_conllu(dev, std::span<const ParseTree>(pred)));
    table += report_row("dev", score(dev, pred));
  }
  if (!a.test.empty()) {
    const auto test = read_treebank(a.test, a.allow_multi_root, err);
    const auto pred = predict(model, test, spec);
    write_text(dir / "test_pred.conllu", write_conllu(test, std::span<const ParseTree>(pred)));
    table += report_row("test", score(test, pred));
  }
  write_text(dir / "scores.tsv", table);
  out << table;
  return kExitOk;
}

// ablate ---------------------------------------------------------------------

int cmd_ablate(const FinetuneArgs& a, std::ostream& out, std::ostream& err) {
  Config cfg = base_config(a.common);
  if (!a.checkpoint.empty()) require_file(a.checkpoint, "checkpoint");
  if (!a.corpus.empty()) require_file(a.corpus, "corpus file");
  Resolved r = resolve(cfg);
  const auto train = read_treebank(a.train, a.allow_multi_root, err);
  const auto dev = read_treebank(a.dev, a.allow_multi_root, err);
  std::vector<Sentence> test;
  if (!a.test.empty()) test = read_treebank(a.test, a.allow_multi_root, err);
  const auto& eval_set = test.empty() ? dev : test;
  const fs::path dir(a.common.out_dir);
  fs::create_directories(dir);
  r.cfg.save(dir / "run.cfg");

  struct Cell {
    std::string name, agg, layers;
    bool frozen;
  };
  std::vector<Cell> strategy, layer_cells;
  for (const char* agg : {"last", "mean", "scalar-mix"}) {
    for (bool frozen : {false, true}) {
      const std::string name = std::string(agg == std::string("last") ? "last-layer" : agg) + (frozen ? "-fz" : "-ft");
      strategy.push_back({name, agg, "all", frozen});
    }
  }
  for (const auto& layers : ablation_layer_sets(r.model.encoder.n_layers)) {
    layer_cells.push_back({layers, "scalar-mix", layers, false});
  }

  std::size_t index = 0;
  auto run_grid = [&](const std::vector<Cell>& cells, const std::string& file, const std::string& title) {
    std::string tsv = (title == "strategy" ? "strategy" : std::string("layers")) + "\tUPOS\tUAS\tLAS\n";
    for (const auto& c : cells) {
      Config cell_cfg = r.cfg;
      apply_strategy(cell_cfg, c.layers, c.agg, c.frozen);
      cell_cfg.set("train.frozen", c.frozen ? "true" : "false");
      cell_cfg.set("train.seed", std::to_string(r.train.seed + index));
      Resolved cr = resolve(cell_cfg);
      const auto spec = cr.train.resolved_aggregation(cr.model.encoder.n_layers);
      const fs::path cell_dir = dir / ("cell" + std::to_string(index));
      fs::create_directories(cell_dir);
      cr.cfg.save(cell_dir / "run.cfg");
      err << "cell " << index << ": " << c.name << "\n";
      Model model = initial_model(a.checkpoint, a.corpus, train, cr);
      auto result = finetune_task(model, train, dev, cr.train, nullptr);
      write_text(cell_dir / "metrics.tsv", metrics_tsv(result.epochs));
      tsv += report_row(c.name, score(eval_set, predict(model, eval_set, spec)));
      ++index;
    }
    write_text(dir / file, tsv);
    out << aligned_table(title == "strategy" ? "Fine-tuning strategies" : "Layer sets (scalar-mix-ft)", tsv) << "\n";
  };
  run_grid(strategy, "strategies.tsv", "strategy");
  run_grid(layer_cells, "layers.tsv", "layers");
  return kExitOk;
}

// eval -------------------------------------------------------------------------

struct EvalArgs {
  std::string gold, pred, metric = "las";
  std::vector<std::string> significance;
  long long trials = 10000;
  long long seed = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const auto gold = read_treebank(a.gold, true, err);
  if (!a.significance.empty()) {
    if (a.significance.size() != 2) throw UsageError("--significance expects two prediction files");
    const auto pa = read_treebank(a.significance[0], true, err);
    const auto pb = read_treebank(a.significance[1], true, err);
    const auto ra = score(gold, pa), rb = score(gold, pb);
    const double p = significance(ra, rb, static_cast<std::size_t>(a.trials), static_cast<std::uint64_t>(a.seed),
                                  parse_metric(a.metric));
    char buf[64];
    std::snprintf(buf, sizeof(buf), "p=%.4f\n", p);
    out << "A " << format_triplet(ra) << "\nB " << format_triplet(rb) << "\n" << buf;
    return kExitOk;
  }
  const auto pred = read_treebank(a.pred, true, err);
  out << format_triplet(score(gold, pred)) << "\n";
  return kExitOk;
}

// parse ------------------------------------------------------------------------

struct ParseArgs {
  std::string checkpoint, input, output, layers, agg;
  bool frozen = false;
};

int cmd_parse(const ParseArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.checkpoint, "checkpoint");
  Config stored;
  Model model = load_checkpoint(a.checkpoint, std::nullopt, &stored);
  if (!model.has_task()) throw UsageError("checkpoint has no parser; run finetune first");
  apply_strategy(stored, a.layers, a.agg, a.frozen);
  const TrainConfig tc = TrainConfig::from_config(stored);
  const auto spec = tc.resolved_aggregation(model.config().encoder.n_layers);
  const auto sentences = read_treebank(a.input, true, err);
  const auto pred = predict(model, sentences, spec);
  const std::string text = write_conllu(sentences, std::span<const ParseTree>(pred));
  if (a.output.empty()) {
    out << text;
  } else {
    write_text(a.output, text);
  }
  return kExitOk;
}

// stats ------------------------------------------------------------------------

struct StatsArgs {
  std::string corpus, vocab;
  long long top_k = 20;
  long long subword_size = 0;
};

int cmd_stats(const StatsArgs& a, std::ostream& out, std::ostream&) {
  require_file(a.corpus, "corpus file");
  const RawCorpus corpus = read_raw_corpus(a.corpus);
  if (a.top_k < 1) throw UsageError("--top-k must be at least 1");
  out << "sentences\t" << corpus.sentence_count() << "\ntokens\t" << corpus.token_count() << "\n";
  out << "rank\tword\tcount\n";
  std::size_t rank = 1;
  for (const auto& [w, c] : top_k_words(corpus, static_cast<std::size_t>(a.top_k))) {
    out << rank++ << "\t" << w << "\t" << c << "\n";
  }
  if (!a.vocab.empty() || a.subword_size > 0) {
    SubwordVocab vocab;
    if (!a.vocab.empty()) {
      require_file(a.vocab, "vocabulary file");
      vocab = SubwordVocab::load(a.vocab);
    } else {
      vocab = SubwordVocab::train(corpus, static_cast<std::size_t>(a.subword_size));
    }
    std::unordered_set<std::string> pieces(vocab.pieces().begin(), vocab.pieces().end());
    const auto report = vocab_coverage(pieces, corpus, [&](const std::string& w) { return vocab.segment(w).size(); });
    char buf[128];
    std::snprintf(buf, sizeof(buf), "coverage\t%.4f\nmean_pieces\t%.4f\n", report.fraction, report.mean_segments);
    out << buf;
  }
  return kExitOk;
}

// noise ------------------------------------------------------------------------

struct NoiseArgs {
  std::string rules, input, output;
  long long seed = -1;
  double word_prob = -1.0;
};

int cmd_noise(const NoiseArgs& a, std::ostream& out, std::ostream& err) {
  NoiseRuleSet rules;
  if (a.rules.empty()) {
    rules = default_noise_rules();
  } else {
    require_file(a.rules, "rules file");
    Config cfg = Config::load(a.rules);
    rules = NoiseRuleSet::from_config(cfg);
  }
  if (a.seed >= 0) rules.seed = static_cast<std::uint64_t>(a.seed);
  if (a.word_prob >= 0.0) rules.word_probability = a.word_prob;
  rules.validate();
  const auto sentences = read_treebank(a.input, true, err);
  const std::string text = write_conllu(inject_noise(sentences, rules));
  if (a.output.empty()) {
    out << text;
  } else {
    const fs::path path(a.output);
    write_text(path, text);
    write_text(path.string() + ".rules", rules.to_config().to_string());
  }
  return kExitOk;
}

// synth ------------------------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  long long corpus = 2000, train = 16, dev = 100, test = 100, seed = 0;
};

int cmd_synth(const SynthArgs& a, std::ostream& out, std::ostream&) {
  SyntheticConfig sc;
  sc.seed = static_cast<std::uint64_t>(a.seed);
  ToyGrammar g(sc);
  const fs::path dir(a.out_dir);
  fs::create_directories(dir);
  std::string raw;
  for (const auto& s : g.raw_corpus(static_cast<std::size_t>(a.corpus), derive_seed(sc.seed, 1)).sentences) {
    for (std::size_t i = 0; i < s.size(); ++i) raw += (i ? " " : "") + s[i];
    raw += '\n';
  }
  write_text(dir / "raw.txt", raw);
  write_text(dir / "train.conllu", write_conllu(g.treebank(static_cast<std::size_t>(a.train), derive_seed(sc.seed, 2))));
  write_text(dir / "dev.conllu", write_conllu(g.treebank(static_cast<std::size_t>(a.dev), derive_seed(sc.seed, 3))));
  write_text(dir / "test.conllu", write_conllu(g.treebank(static_cast<std::size_t>(a.test), derive_seed(sc.seed, 4))));
  out << "wrote " << (dir / "raw.txt").string() << ", train/dev/test.conllu\n";
  return kExitOk;
}

// robustness -------------------------------------------------------------------

struct RobustArgs {
  std::string char_ckpt, subword_ckpt, treebank, rules, out_dir;
  double word_prob = 0.3;
  long long seed = 0;
};

int cmd_robustness(const RobustArgs& a, std::ostream& out, std::ostream& err) {
  require_file(a.char_ckpt, "checkpoint");
  require_file(a.subword_ckpt, "checkpoint");
  Config char_cfg, sub_cfg;
  Model cm = load_checkpoint(a.char_ckpt, EmbeddingSource::character, &char_cfg);
  Model sm = load_checkpoint(a.subword_ckpt, EmbeddingSource::subword, &sub_cfg);
  if (!cm.has_task() || !sm.has_task()) throw UsageError("both checkpoints must be fine-tuned");
  NoiseRuleSet rules = default_noise_rules(a.word_prob, static_cast<std::uint64_t>(a.seed));
  if (!a.rules.empty()) {
    require_file(a.rules, "rules file");
    Config cfg = Config::load(a.rules);
    rules = NoiseRuleSet::from_config(cfg);
  }
  const auto treebank = read_treebank(a.treebank, true, err);
  const auto spec = TrainConfig::from_config(char_cfg).resolved_aggregation(cm.config().encoder.n_layers);
  const auto report = robustness_report(cm, sm, treebank, rules, spec);
  if (!a.out_dir.empty()) {
    write_text(fs::path(a.out_dir) / "robustness.tsv", report.tsv());
    write_text(fs::path(a.out_dir) / "noise.cfg", rules.to_config().to_string());
  }
  out << report.table();
  return kExitOk;
}

}  // namespace

std::vector<std::string> ablation_layer_sets(std::size_t L) {
  auto range = [](std::size_t a, std::size_t b) {
    return a == b ? std::to_string(a) : std::to_string(a) + "-" + std::to_string(b);
  };
  const auto third = static_cast<std::size_t>(std::lround(static_cast<double>(L) / 3.0));
  const auto two_thirds = static_cast<std::size_t>(std::lround(2.0 * static_cast<double>(L) / 3.0));
  const std::size_t half = L / 2;
  std::vector<std::string> out{"0"};
  out.push_back(range(0, half > 0 ? half - 1 : 0));
  out.push_back(range(std::min(third, L - 1), std::max(third, two_thirds > 0 ? two_thirds - 1 : 0)));
  out.push_back(range(std::min(half, L - 1), L - 1));
  out.push_back(std::to_string(L - 1));
  out.push_back("all");
  return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Character-level encoder pipeline for tagging and dependency parsing"};
  app.require_subcommand(1);

  PretrainArgs pre;
  auto* pretrain = app.add_subcommand("pretrain", "MLM pretraining or adaptation");
  add_common(pretrain, pre.common);
  pretrain->add_option("--corpus", pre.corpus, "raw corpus, one tokenized sentence per line")->required();
  pretrain->add_option("--init", pre.init, "checkpoint to adapt instead of a random model");

  FinetuneArgs fine;
  auto* finetune = app.add_subcommand("finetune", "train tagger and parser");
  add_common(finetune, fine.common);
  finetune->add_option("--checkpoint", fine.checkpoint, "pretrained checkpoint (omit for a random encoder)");
  finetune->add_option("--train", fine.train, "training treebank")->required();
  finetune->add_option("--dev", fine.dev, "development treebank");
  finetune->add_option("--test", fine.test, "test treebank");
  finetune->add_option("--corpus", fine.corpus, "raw text for vocabularies of a random encoder");
  finetune->add_option("--layers", fine.layers, "j, a-b or all");
  finetune->add_option("--agg", fine.agg, "last, mean or scalar-mix");
  finetune->add_flag("--frozen", fine.frozen, "keep encoder weights fixed");
  finetune->add_flag("--allow-multi-root", fine.allow_multi_root, "downgrade multiple roots to a warning");

  FinetuneArgs abl;
  auto* ablate = app.add_subcommand("ablate", "strategy and layer-set grids");
  add_common(ablate, abl.common);
  ablate->add_option("--checkpoint", abl.checkpoint, "pretrained checkpoint (omit for a random encoder)");
  ablate->add_option("--train", abl.train, "training treebank")->required();
  ablate->add_option("--dev", abl.dev, "development treebank")->required();
  ablate->add_option("--test", abl.test, "test treebank (defaults to dev)");
  ablate->add_option("--corpus", abl.corpus, "raw text for vocabularies of a random encoder");
  ablate->add_flag("--allow-multi-root", abl.allow_multi_root, "downgrade multiple roots to a warning");

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "score predictions");
  eval->add_option("--gold", ev.gold, "gold treebank")->required();
  eval->add_option("--pred", ev.pred, "predicted treebank");
  eval->add_option("--significance", ev.significance, "two prediction files to compare")->expected(2);
  eval->add_option("--trials", ev.trials, "randomization trials");
  eval->add_option("--seed", ev.seed, "randomization seed");
  eval->add_option("--metric", ev.metric, "upos, uas or las");

  ParseArgs pa;
  auto* parse = app.add_subcommand("parse", "tag and parse a CoNLL-U file");
  parse->add_option("--checkpoint", pa.checkpoint, "fine-tuned checkpoint")->required();
  parse->add_option("--in", pa.input, "input CoNLL-U")->required();
  parse->add_option("--out", pa.output, "output CoNLL-U (stdout when omitted)");
  parse->add_option("--layers", pa.layers, "override the stored layer set");
  parse->add_option("--agg", pa.agg, "override the stored aggregation");

  StatsArgs st;
  auto* stats = app.add_subcommand("stats", "corpus statistics and subword coverage");
  stats->add_option("--corpus", st.corpus, "raw corpus")->required();
  stats->add_option("--top-k", st.top_k, "most frequent words to list");
  stats->add_option("--vocab", st.vocab, "subword vocabulary file for coverage");
  stats->add_option("--subword-size", st.subword_size, "train a subword vocabulary of this size for coverage");

  NoiseArgs no;
  auto* noise = app.add_subcommand("noise", "inject orthographic noise into a treebank");
  noise->add_option("--rules", no.rules, "noise rule file (defaults to the built-in set)");
  noise->add_option("--in", no.input, "input CoNLL-U")->required();
  noise->add_option("--out", no.output, "output CoNLL-U (stdout when omitted)");
  noise->add_option("--seed", no.seed, "noise seed");
  noise->add_option("--word-prob", no.word_prob, "per-word noising probability");

  SynthArgs sy;
  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus and toy treebanks");
  synth->add_option("--out", sy.out_dir, "output directory")->required();
  synth->add_option("--corpus", sy.corpus, "raw sentences");
  synth->add_option("--train", sy.train, "training sentences");
  synth->add_option("--dev", sy.dev, "dev sentences");
  synth->add_option("--test", sy.test, "test sentences");
  synth->add_option("--seed", sy.seed, "generator seed");

  RobustArgs ro;
  auto* robust = app.add_subcommand("robustness", "clean vs noisy comparison of both pipelines");
  robust->add_option("--char-checkpoint", ro.char_ckpt, "fine-tuned character model")->required();
  robust->add_option("--subword-checkpoint", ro.subword_ckpt, "fine-tuned subword model")->required();
  robust->add_option("--treebank", ro.treebank, "evaluation treebank")->required();
  robust->add_option("--rules", ro.rules, "noise rule file");
  robust->add_option("--word-prob", ro.word_prob, "per-word probability of the default rules");
  robust->add_option("--seed", ro.seed, "noise seed");
  robust->add_option("--out", ro.out_dir, "directory for robustness.tsv");

  std::vector<std::string> rev(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (pretrain->parsed()) return cmd_pretrain(pre, out, err);
    if (finetune->parsed()) return cmd_finetune(fine, out, err);
    if (ablate->parsed()) return cmd_ablate(abl, out, err);
    if (eval->parsed()) return cmd_eval(ev, out, err);
    if (parse->parsed()) return cmd_parse(pa, out, err);
    if (stats->parsed()) return cmd_stats(st, out, err);
    if (noise->parsed()) return cmd_noise(no, out, err);
    if (synth->parsed()) return cmd_synth(sy, out, err);
    if (robust->parsed()) return cmd_robustness(ro, out, err);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConlluError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace charparse
