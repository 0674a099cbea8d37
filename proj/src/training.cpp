#include "charparse/training.hpp"

#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "charparse/evaluation.hpp"
#include "charparse/mst.hpp"
#include "charparse/specials.hpp"

namespace charparse {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be at least 1");
  if (patience < 1) throw ConfigError("train: patience must be at least 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("train: val_fraction must lie in (0, 1)");
  if (lr < 0.0 || encoder_lr < 0.0 || mlm_lr < 0.0) throw ConfigError("train: learning rates must be non-negative");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ConfigError("train: warmup_fraction must lie in [0, 1]");
}

TrainConfig TrainConfig::from_config(Config& cfg, const std::string& prefix) {
  TrainConfig c;
  c.seed = static_cast<std::uint64_t>(cfg.resolve_int(prefix + "seed", 1));
  c.batch_size = static_cast<std::size_t>(cfg.resolve_int(prefix + "batch_size", 16));
  c.epochs = static_cast<std::size_t>(cfg.resolve_int(prefix + "epochs", 20));
  c.max_steps = static_cast<std::size_t>(cfg.resolve_int(prefix + "max_steps", 0));
  c.lr = cfg.resolve_double(prefix + "lr", 1e-3);
  c.encoder_lr = cfg.resolve_double(prefix + "encoder_lr", 5e-5);
  c.mlm_lr = cfg.resolve_double(prefix + "mlm_lr", 3e-4);
  c.beta1 = cfg.resolve_double(prefix + "beta1", 0.9);
  c.beta2 = cfg.resolve_double(prefix + "beta2", 0.999);
  c.adam_eps = cfg.resolve_double(prefix + "adam_eps", 1e-8);
  c.warmup_fraction = cfg.resolve_double(prefix + "warmup_fraction", 0.05);
  c.clip_norm = cfg.resolve_double(prefix + "clip_norm", 5.0);
  c.patience = static_cast<std::size_t>(cfg.resolve_int(prefix + "patience", 5));
  c.early_stopping = cfg.resolve_bool(prefix + "early_stopping", true);
  c.val_fraction = cfg.resolve_double(prefix + "val_fraction", 0.1);
  c.lambda_tag = cfg.resolve_double(prefix + "lambda_tag", 1.0);
  c.aggregation.mode = parse_aggregation_mode(cfg.resolve(prefix + "agg", "last"));
  c.aggregation.trainable = !cfg.resolve_bool(prefix + "frozen", false);
  c.layers = cfg.resolve(prefix + "layers", "all");
  c.validate();
  return c;
}

void TrainConfig::to_config(Config& cfg, const std::string& prefix) const {
  cfg.set(prefix + "seed", std::to_string(seed));
  cfg.set(prefix + "batch_size", std::to_string(batch_size));
  cfg.set(prefix + "epochs", std::to_string(epochs));
  cfg.set(prefix + "max_steps", std::to_string(max_steps));
  cfg.set(prefix + "lr", format_double(lr));
  cfg.set(prefix + "encoder_lr", format_double(encoder_lr));
  cfg.set(prefix + "mlm_lr", format_double(mlm_lr));
  cfg.set(prefix + "beta1", format_double(beta1));
  cfg.set(prefix + "beta2", format_double(beta2));
  cfg.set(prefix + "adam_eps", format_double(adam_eps));
  cfg.set(prefix + "warmup_fraction", format_double(warmup_fraction));
  cfg.set(prefix + "clip_norm", format_double(clip_norm));
  cfg.set(prefix + "patience", std::to_string(patience));
  cfg.set(prefix + "early_stopping", early_stopping ? "true" : "false");
  cfg.set(prefix + "val_fraction", format_double(val_fraction));
  cfg.set(prefix + "lambda_tag", format_double(lambda_tag));
  cfg.set(prefix + "agg", std::string(aggregation_mode_name(aggregation.mode)));
  cfg.set(prefix + "frozen", aggregation.trainable ? "false" : "true");
  cfg.set(prefix + "layers", layers);
}

AggregationSpec TrainConfig::resolved_aggregation(std::size_t n_layers) const {
  AggregationSpec spec = aggregation;
  spec.layers = parse_layer_set(layers, n_layers);
  spec.normalize(n_layers);
  return spec;
}

std::string metrics_tsv(std::span<const EpochMetrics> rows) {
  std::string out = "epoch\ttrain_loss\tdev_metric\n";
  char buf[128];
  for (const auto& r : rows) {
    if (r.has_train_loss) {
      std::snprintf(buf, sizeof(buf), "%zu\t%.6f\t%.6f\n", r.epoch, r.train_loss, r.dev_metric);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu\t-\t%.6f\n", r.epoch, r.dev_metric);
    }
    out += buf;
  }
  return out;
}

namespace {

AdamConfig adam_config(const TrainConfig& c, std::size_t total_steps) {
  AdamConfig a;
  a.lr = c.lr;
  a.beta1 = c.beta1;
  a.beta2 = c.beta2;
  a.eps = c.adam_eps;
  a.clip_norm = c.clip_norm;
  a.warmup_steps = static_cast<std::size_t>(std::llround(c.warmup_fraction * static_cast<double>(total_steps)));
  return a;
}

std::size_t planned_steps(const TrainConfig& c, std::size_t examples) {
  const std::size_t per_epoch = (examples + c.batch_size - 1) / c.batch_size;
  std::size_t total = per_epoch * c.epochs;
  if (c.max_steps > 0) total = std::min(total, c.max_steps);
  return total;
}

void log_row(std::ostream* log, const EpochMetrics& row) {
  if (!log) return;
  const EpochMetrics rows[] = {row};
  std::string line = metrics_tsv(rows);
  *log << line.substr(line.find('\n') + 1) << std::flush;
}

void check_finite(double loss, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw TrainingError("non-finite loss " + std::to_string(loss) + " at step " + std::to_string(step));
  }
}

// Mask one sentence with a seed that depends only on (seed, index).
MlmExample mask_sentence(const Model& model, const std::vector<std::string>& words, std::uint64_t seed, std::size_t index) {
  return mlm_mask(words, model.mlm_vocab(), model.config().mlm, derive_seed(seed, index));
}

struct MlmBatchLoss {
  Var<float> loss;
  std::size_t count = 0;
  double log_likelihood = 0.0;
};

MlmBatchLoss mlm_batch(Tape<float>& tape, const Model& model, std::span<const MlmExample> examples, bool trainable) {
  std::vector<std::vector<std::string>> inputs;
  std::vector<int> targets;
  for (const auto& ex : examples) {
    inputs.push_back(ex.corrupted);
    targets.push_back(-1);
    targets.insert(targets.end(), ex.targets.begin(), ex.targets.end());
    targets.push_back(-1);
  }
  auto encs = model.encode(tape, inputs, trainable);
  std::vector<Var<float>> last;
  for (const auto& e : encs) last.push_back(e.out.hidden.back());
  Var<float> hidden = last.size() == 1 ? last[0] : ad::concat<float>(last, 0);
  auto l = mlm_loss(tape, hidden, targets, model.mlm_head(), trainable);
  return {l.loss, l.count, l.log_likelihood};
}

}  // namespace

double mlm_log_likelihood(const Model& model, std::span<const std::vector<std::string>> sentences, std::uint64_t seed) {
  double ll = 0.0;
  std::size_t count = 0;
  const std::size_t batch = 16;
  for (std::size_t start = 0; start < sentences.size(); start += batch) {
    std::vector<MlmExample> examples;
    for (std::size_t i = start; i < std::min(sentences.size(), start + batch); ++i) {
      examples.push_back(mask_sentence(model, sentences[i], seed, i));
    }
    Tape<float> tape(false);
    auto r = mlm_batch(tape, model, examples, false);
    ll += r.log_likelihood;
    count += r.count;
  }
  return count == 0 ? 0.0 : ll / static_cast<double>(count);
}

TrainResult pretrain_mlm(Model& model, const RawCorpus& corpus, const TrainConfig& config, std::ostream* log,
                         const StepObserver& observer) {
  config.validate();
  if (corpus.sentence_count() == 0) throw TrainingError("pretraining corpus is empty");
  if (corpus.sentence_count() < 2) throw TrainingError("pretraining corpus needs at least 2 sentences for a validation split");

  std::vector<std::size_t> order(corpus.sentence_count());
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(derive_seed(config.seed, 11));
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(std::ceil(config.val_fraction * static_cast<double>(order.size())));
  n_val = std::clamp<std::size_t>(n_val, 1, order.size() - 1);

  std::vector<std::vector<std::string>> val, train;
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& s = corpus.sentences[order[i]];
    if (model.fit_words(s) < s.size()) {
      ++skipped;
      continue;
    }
    (i < n_val ? val : train).push_back(s);
  }
  if (log && skipped > 0) *log << "# skipped " << skipped << " sentences longer than max_seq_len\n";
  if (train.empty() || val.empty()) throw TrainingError("no trainable sentences after the validation split");

  auto lr_for = [&](const std::string& name) { return Model::is_encoder_param(name) ? config.mlm_lr : 0.0; };
  auto state = make_adam_state(model.params(), adam_config(config, planned_steps(config, train.size())), lr_for);
  const std::uint64_t eval_seed = derive_seed(config.seed, 12);

  TrainResult result;
  EpochMetrics initial{0, false, 0.0, mlm_log_likelihood(model, val, eval_seed)};
  result.epochs.push_back(initial);
  result.best_metric = initial.dev_metric;
  log_row(log, initial);
  auto best = model.params().snapshot();

  std::vector<std::size_t> idx(train.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.max_steps > 0 && result.steps >= config.max_steps) break;
    std::iota(idx.begin(), idx.end(), 0);
    Rng epoch_rng(derive_seed(config.seed, 100 + epoch));
    epoch_rng.shuffle(idx);
    const std::uint64_t mask_seed = derive_seed(config.seed, 200 + epoch);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < idx.size(); start += config.batch_size) {
      if (config.max_steps > 0 && result.steps >= config.max_steps) break;
      std::vector<MlmExample> examples;
      for (std::size_t i = start; i < std::min(idx.size(), start + config.batch_size); ++i) {
        examples.push_back(mask_sentence(model, train[idx[i]], mask_seed, idx[i]));
      }
      Tape<float> tape(true, derive_seed(config.seed, (1ull << 32) + result.steps));
      auto r = mlm_batch(tape, model, examples, true);
      if (r.count == 0) continue;
      const double loss = r.loss.value()[0];
      check_finite(loss, result.steps);
      tape.backward(r.loss);
      adam_step(model.params(), state);
      ++result.steps;
      loss_sum += loss;
      ++batches;
      if (observer) observer(result.steps, loss, model);
    }
    EpochMetrics row{epoch, true, batches ? loss_sum / static_cast<double>(batches) : 0.0,
                     mlm_log_likelihood(model, val, eval_seed)};
    result.epochs.push_back(row);
    log_row(log, row);
    if (row.dev_metric > result.best_metric) {
      result.best_metric = row.dev_metric;
      result.best_epoch = epoch;
      best = model.params().snapshot();
    }
  }
  model.params().restore(best);
  return result;
}

std::vector<ParseTree> predict(const Model& model, std::span<const Sentence> sentences, const AggregationSpec& spec,
                               std::size_t batch_size) {
  if (!model.has_task()) throw std::logic_error("predict: model has no parser");
  const auto& parser = model.parser();
  const auto& vocab = model.treebank_vocab();
  std::vector<ParseTree> out;
  out.reserve(sentences.size());
  for (std::size_t start = 0; start < sentences.size(); start += batch_size) {
    const std::size_t end = std::min(sentences.size(), start + batch_size);
    std::vector<std::vector<std::string>> words;
    for (std::size_t i = start; i < end; ++i) words.push_back(sentences[i].forms());
    Tape<float> tape(false);
    auto encs = model.encode(tape, words, false);
    for (std::size_t i = start; i < end; ++i) {
      const auto& s = sentences[i];
      const std::size_t n = s.size();
      std::vector<int> ids;
      for (const auto& t : s.tokens) ids.push_back(vocab.word_id(t.form));
      Var<float> we = parser.word_embeddings(tape, ids);
      Var<float> lm = model.lm_vectors(tape, encs[i - start], n, spec);
      std::vector<int> tags = argmax_rows(tensor_cast<double>(parser.tag_logits(we, lm).value()));
      auto heads = parser.project(parser.representation(we, lm, tags));
      ParseTree tree;
      tree.heads = decode_heads(tensor_cast<double>(parser.arc_scores(heads).value()));
      const auto labels = argmax_rows(tensor_cast<double>(parser.label_scores_at(heads, tree.heads).value()));
      for (std::size_t k = 0; k < n; ++k) {
        tree.labels.push_back(vocab.labels()[static_cast<std::size_t>(labels[k])]);
        tree.tags.push_back(vocab.tags()[static_cast<std::size_t>(tags[k])]);
      }
      out.push_back(std::move(tree));
    }
  }
  return out;
}

TrainResult finetune_task(Model& model, std::span<const Sentence> train, std::span<const Sentence> dev,
                          const TrainConfig& config, std::ostream* log, const StepObserver& observer) {
  config.validate();
  if (train.empty()) throw TrainingError("training treebank is empty");
  if (config.early_stopping && dev.empty()) throw TrainingError("early stopping needs a non-empty dev split");
  if (!model.has_task()) model.attach_task(TreebankVocab::build(train, model.config().parser), config.seed);
  const AggregationSpec spec = config.resolved_aggregation(model.config().encoder.n_layers);
  const auto& vocab = model.treebank_vocab();
  const auto& parser = model.parser();
  const auto& pcfg = model.config().parser;

  std::size_t truncated = 0;
  for (const auto& s : train) truncated += model.fit_words(s.forms()) < s.size();
  if (log && truncated > 0) *log << "# " << truncated << " training sentences exceed max_seq_len; encoder input truncated\n";

  auto lr_for = [&](const std::string& name) {
    if (name.starts_with("mlm.")) return 0.0;
    if (Model::is_encoder_param(name)) return spec.trainable ? config.encoder_lr : 0.0;
    return config.lr;
  };
  auto state = make_adam_state(model.params(), adam_config(config, planned_steps(config, train.size())), lr_for);

  std::vector<GoldIds> gold;
  for (const auto& s : train) gold.push_back(gold_ids(s, vocab));

  auto dev_las = [&]() { return dev.empty() ? 0.0 : score(dev, predict(model, dev, spec)).las; };

  TrainResult result;
  EpochMetrics initial{0, false, 0.0, dev_las()};
  result.epochs.push_back(initial);
  result.best_metric = initial.dev_metric;
  log_row(log, initial);
  auto best = model.params().snapshot();
  std::size_t since_best = 0;

  std::vector<std::size_t> idx(train.size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.max_steps > 0 && result.steps >= config.max_steps) break;
    std::iota(idx.begin(), idx.end(), 0);
    Rng epoch_rng(derive_seed(config.seed, 100 + epoch));
    epoch_rng.shuffle(idx);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < idx.size(); start += config.batch_size) {
      if (config.max_steps > 0 && result.steps >= config.max_steps) break;
      const std::size_t end = std::min(idx.size(), start + config.batch_size);
      Tape<float> tape(true, derive_seed(config.seed, (1ull << 32) + result.steps));
      Rng unk_rng(derive_seed(config.seed, (2ull << 32) + result.steps));
      std::vector<std::vector<std::string>> words;
      for (std::size_t i = start; i < end; ++i) words.push_back(train[idx[i]].forms());
      auto encs = model.encode(tape, words, spec.trainable);
      std::vector<Var<float>> parts;
      std::size_t tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        const Sentence& s = train[idx[i]];
        const GoldIds& g = gold[idx[i]];
        const std::size_t n = s.size();
        std::vector<int> ids;
        for (const auto& t : s.tokens) {
          int id = vocab.word_id(t.form);
          if (id > 0 && vocab.word_frequency(id) <= pcfg.min_word_freq && unk_rng.bernoulli(pcfg.unk_replace)) id = 0;
          ids.push_back(id);
        }
        std::vector<int> tags;
        for (int t : g.tags) tags.push_back(std::max(t, 0));
        Var<float> we = parser.word_embeddings(tape, ids);
        Var<float> lm = model.lm_vectors(tape, encs[i - start], n, spec);
        Var<float> tag_logits = parser.tag_logits(we, lm);
        auto heads = parser.project(parser.representation(we, lm, tags));
        Var<float> l = parse_loss(parser.arc_scores(heads), parser.label_scores_at(heads, g.heads), tag_logits, g,
                                  config.lambda_tag);
        parts.push_back(ad::scale(l, static_cast<double>(n)));
        tokens += n;
      }
      Var<float> total = parts[0];
      for (std::size_t k = 1; k < parts.size(); ++k) total = ad::add(total, parts[k]);
      Var<float> loss = ad::scale(total, 1.0 / static_cast<double>(tokens));
      const double lv = loss.value()[0];
      check_finite(lv, result.steps);
      tape.backward(loss);
      adam_step(model.params(), state);
      ++result.steps;
      loss_sum += lv;
      ++batches;
      if (observer) observer(result.steps, lv, model);
    }
    EpochMetrics row{epoch, true, batches ? loss_sum / static_cast<double>(batches) : 0.0, dev_las()};
    result.epochs.push_back(row);
    log_row(log, row);
    if (row.dev_metric > result.best_metric) {
      result.best_metric = row.dev_metric;
      result.best_epoch = epoch;
      best = model.params().snapshot();
      since_best = 0;
    } else if (config.early_stopping && ++since_best >= config.patience) {
      break;
    }
  }
  if (config.early_stopping) {
    model.params().restore(best);
  } else {
    result.best_epoch = result.epochs.back().epoch;
    result.best_metric = result.epochs.back().dev_metric;
  }
  return result;
}

}  // namespace charparse
