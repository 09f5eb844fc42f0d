#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "causalrec/eval.h"
#include "causalrec/ingest.h"
#include "causalrec/model.h"

namespace causalrec::trainer {

using model::Array;

struct TrainConfig {
  double learning_rate = 0.001;
  double l2_penalty = 1e-6;
  std::size_t batch_size = 100;
  std::size_t epochs = 30;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 42;
  std::size_t early_stop_patience = 3;
  // Share of train sessions (latest by start time) held out for early stopping.
  double validation_fraction = 0.1;
  bool augment = true;
  std::size_t threads = 1;
  model::ModelConfig model;

  void validate() const;
};

using Setting = std::pair<std::string, std::string>;

// Flat key = value view of the config; keys mirror the field names, with the
// graph switches spelled keep_common_cause / unit_causal_weights /
// causal_second_order.
std::vector<Setting> to_settings(const TrainConfig& c);
std::vector<Setting> model_settings(const model::ModelConfig& c);
// Throws std::invalid_argument for an unknown key or unparsable value.
void apply_setting(TrainConfig& c, const std::string& key, const std::string& value);
void apply_model_setting(model::ModelConfig& c, const std::string& key, const std::string& value);
// `key = value` lines; '#' starts a comment.
std::vector<Setting> parse_settings(std::istream& in);
// diginetica | gowalla | amazon
void apply_preset(TrainConfig& c, const std::string& name);

struct AdamState {
  std::size_t step = 0;
  std::vector<Array> m;
  std::vector<Array> v;
};

// One Adam update with bias correction; the L2 penalty is added to the
// gradient (l2 * theta). Tensors with frozen[i] set are left untouched. All
// gradients are checked before any parameter changes.
void adam_step(std::span<Array* const> params, std::span<const Array> grads, AdamState& state,
               const TrainConfig& config, std::span<const bool> frozen = {});

struct BatchGradients {
  double loss = 0.0;
  std::vector<Array> grads;  // manifest order
  std::vector<bool> unused;  // tensors the forward pass never touched
};

// Mean loss over the batch and its gradient for every parameter tensor.
BatchGradients batch_gradients(const model::Model& model, const model::Parameters& params,
                               std::span<const ingest::Sample> batch);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  // NaN without a validation set.
  double val_hr = 0.0;
  double val_mrr = 0.0;
  double val_ndcg = 0.0;
};

struct TrainResult {
  model::Parameters params;  // best-validation (or last) parameters
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

inline constexpr std::size_t kValidationCutoff = 20;

// Called after every epoch with the parameters as they stand; returning false
// ends training early.
using EpochCallback = std::function<bool(const EpochRecord&, const model::Parameters&)>;

TrainResult train(const model::Model& model, model::Parameters initial, std::span<const ingest::Sample> samples,
                  std::span<const ingest::Sample> validation, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Everything needed to train from a time-ordered list of train sessions:
// graphs over all of them, the latest validation_fraction held out for early
// stopping, prefix samples for both parts.
struct TrainingSetup {
  model::Model model;
  std::vector<ingest::Sample> samples;
  std::vector<ingest::Sample> validation;
};

TrainingSetup prepare(std::span<const ingest::Session> train_sessions, std::size_t num_items,
                      const TrainConfig& config);

// Sessions turned into samples: all prefixes, or only the full-length one.
std::vector<ingest::Sample> make_samples(std::span<const ingest::Session> sessions, bool augment);

// epoch,train_loss,val_hr20,val_mrr20,val_ndcg20
void write_history_csv(std::ostream& out, std::span<const EpochRecord> history);

}  // namespace causalrec::trainer
