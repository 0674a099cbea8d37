#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "charparse/config.hpp"
#include "charparse/corpus.hpp"
#include "charparse/encoder.hpp"
#include "charparse/model.hpp"
#include "charparse/optim.hpp"

namespace charparse {

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  std::uint64_t seed = 1;
  std::size_t batch_size = 16;
  std::size_t epochs = 20;
  /// Stops after this many optimizer steps; 0 = no limit.
  std::size_t max_steps = 0;
  double lr = 1e-3;
  /// Learning rate of encoder-side parameters during fine-tuning.
  double encoder_lr = 5e-5;
  /// Learning rate of MLM pretraining.
  double mlm_lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double warmup_fraction = 0.05;
  double clip_norm = 5.0;
  std::size_t patience = 5;
  bool early_stopping = true;
  double val_fraction = 0.1;
  double lambda_tag = 1.0;
  /// Mode and freezing; the layer set is resolved from `layers` ("j",
  /// "a-b" or "all") once the encoder depth is known.
  AggregationSpec aggregation;
  std::string layers = "all";

  AggregationSpec resolved_aggregation(std::size_t n_layers) const;

  void validate() const;
  static TrainConfig from_config(Config& cfg, const std::string& prefix = "train.");
  void to_config(Config& cfg, const std::string& prefix = "train.") const;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 0 = before training
  bool has_train_loss = false;
  double train_loss = 0.0;
  double dev_metric = 0.0;
};

/// Tab-separated `epoch  train_loss  dev_metric` with a header row.
std::string metrics_tsv(std::span<const EpochMetrics> rows);

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  std::size_t steps = 0;
};

/// Called after every optimizer step with the step number and batch loss.
using StepObserver = std::function<void(std::size_t step, double loss, const Model& model)>;

/// Held-out MLM log-likelihood per scored token, with masks fixed by `seed`.
double mlm_log_likelihood(const Model& model, std::span<const std::vector<std::string>> sentences, std::uint64_t seed);

/// MLM pretraining or adaptation; dev_metric is the held-out mean
/// log-likelihood and the best epoch's parameters are kept.
TrainResult pretrain_mlm(Model& model, const RawCorpus& corpus, const TrainConfig& config,
                         std::ostream* log = nullptr, const StepObserver& observer = {});

/// Trains tagger and parser (and the encoder unless frozen). dev_metric is
/// dev LAS; with early stopping the best dev epoch is restored.
TrainResult finetune_task(Model& model, std::span<const Sentence> train, std::span<const Sentence> dev,
                          const TrainConfig& config, std::ostream* log = nullptr, const StepObserver& observer = {});

/// Tags and parses sentences with predicted tags feeding the tag embeddings.
std::vector<ParseTree> predict(const Model& model, std::span<const Sentence> sentences, const AggregationSpec& spec,
                               std::size_t batch_size = 16);

}  // namespace charparse
