#include "causalrec/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>

#include "causalrec/graphs.h"

namespace causalrec::trainer {

namespace {

constexpr std::uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("setting " + key + ": expected a boolean, got '" + v + "'");
}

double parse_real(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("setting " + key + ": bad number '" + v + "'");
  return out;
}

std::uint64_t parse_count(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v.front() != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != v.size()) throw std::invalid_argument("setting " + key + ": bad count '" + v + "'");
  return out;
}

std::string real_str(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  if (l2_penalty < 0.0) throw std::invalid_argument("l2_penalty must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw std::invalid_argument("validation_fraction must be in [0, 1)");
  }
  model.validate();
}

std::vector<Setting> model_settings(const model::ModelConfig& c) {
  return {
      {"dim", std::to_string(c.dim)},
      {"heads", std::to_string(c.heads)},
      {"layers", std::to_string(c.layers)},
      {"self_loops", bool_str(c.self_loops)},
      {"normalize_session_attention", bool_str(c.normalize_session_attention)},
      {"loss", c.loss == model::LossKind::kCategorical ? "categorical" : "bce"},
      {"disable_causality", bool_str(c.disable_causality)},
      {"disable_correlation", bool_str(c.disable_correlation)},
      {"disable_preference", bool_str(c.disable_preference)},
      {"drop_chain", bool_str(c.drop_chain)},
      {"drop_fork", bool_str(c.drop_fork)},
      {"drop_collider", bool_str(c.drop_collider)},
      {"keep_common_cause", bool_str(c.effect.keep_common_cause)},
      {"unit_causal_weights", bool_str(c.effect.unit_weights)},
      {"causal_second_order", bool_str(c.effect.second_order)},
  };
}

std::vector<Setting> to_settings(const TrainConfig& c) {
  std::vector<Setting> out{
      {"learning_rate", real_str(c.learning_rate)},
      {"l2_penalty", real_str(c.l2_penalty)},
      {"batch_size", std::to_string(c.batch_size)},
      {"epochs", std::to_string(c.epochs)},
      {"adam_beta1", real_str(c.adam_beta1)},
      {"adam_beta2", real_str(c.adam_beta2)},
      {"adam_epsilon", real_str(c.adam_epsilon)},
      {"seed", std::to_string(c.seed)},
      {"early_stop_patience", std::to_string(c.early_stop_patience)},
      {"validation_fraction", real_str(c.validation_fraction)},
      {"augment", bool_str(c.augment)},
  };
  for (auto& s : model_settings(c.model)) out.push_back(std::move(s));
  return out;
}

void apply_model_setting(model::ModelConfig& c, const std::string& key, const std::string& v) {
  if (key == "dim") c.dim = parse_count(key, v);
  else if (key == "heads") c.heads = parse_count(key, v);
  else if (key == "layers") c.layers = parse_count(key, v);
  else if (key == "self_loops") c.self_loops = parse_bool(key, v);
  else if (key == "normalize_session_attention") c.normalize_session_attention = parse_bool(key, v);
  else if (key == "loss") {
    if (v == "bce") c.loss = model::LossKind::kBinaryCrossEntropy;
    else if (v == "categorical") c.loss = model::LossKind::kCategorical;
    else throw std::invalid_argument("setting loss: expected bce or categorical, got '" + v + "'");
  }
  else if (key == "disable_causality") c.disable_causality = parse_bool(key, v);
  else if (key == "disable_correlation") c.disable_correlation = parse_bool(key, v);
  else if (key == "disable_preference") c.disable_preference = parse_bool(key, v);
  else if (key == "drop_chain") c.drop_chain = parse_bool(key, v);
  else if (key == "drop_fork") c.drop_fork = parse_bool(key, v);
  else if (key == "drop_collider") c.drop_collider = parse_bool(key, v);
  else if (key == "keep_common_cause") c.effect.keep_common_cause = parse_bool(key, v);
  else if (key == "unit_causal_weights") c.effect.unit_weights = parse_bool(key, v);
  else if (key == "causal_second_order") c.effect.second_order = parse_bool(key, v);
  else throw std::invalid_argument("unknown setting: " + key);
}

void apply_setting(TrainConfig& c, const std::string& key, const std::string& v) {
  if (key == "learning_rate") c.learning_rate = parse_real(key, v);
  else if (key == "l2_penalty") c.l2_penalty = parse_real(key, v);
  else if (key == "batch_size") c.batch_size = parse_count(key, v);
  else if (key == "epochs") c.epochs = parse_count(key, v);
  else if (key == "adam_beta1") c.adam_beta1 = parse_real(key, v);
  else if (key == "adam_beta2") c.adam_beta2 = parse_real(key, v);
  else if (key == "adam_epsilon") c.adam_epsilon = parse_real(key, v);
  else if (key == "seed") c.seed = parse_count(key, v);
  else if (key == "early_stop_patience") c.early_stop_patience = parse_count(key, v);
  else if (key == "validation_fraction") c.validation_fraction = parse_real(key, v);
  else if (key == "augment") c.augment = parse_bool(key, v);
  else apply_model_setting(c.model, key, v);
}

std::vector<Setting> parse_settings(std::istream& in) {
  std::vector<Setting> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

void apply_preset(TrainConfig& c, const std::string& name) {
  if (name == "diginetica") {
    c.learning_rate = 0.001;
    c.l2_penalty = 1e-6;
    c.batch_size = 20;
    c.model.dim = 110;
  } else if (name == "gowalla") {
    c.learning_rate = 0.001;
    c.l2_penalty = 1e-6;
    c.batch_size = 40;
    c.model.dim = 60;
  } else if (name == "amazon") {
    c.learning_rate = 0.003;
    c.l2_penalty = 5e-6;
    c.batch_size = 100;
    c.model.dim = 170;
  } else {
    throw std::invalid_argument("unknown preset: " + name);
  }
}

void adam_step(std::span<Array* const> params, std::span<const Array> grads, AdamState& state,
               const TrainConfig& config, std::span<const bool> frozen) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(grads[i])) {
      throw num::ShapeError("adam_step: tensor " + std::to_string(i) + " is " + params[i]->shape_string() +
                            " but its gradient is " + grads[i].shape_string());
    }
    if (!grads[i].all_finite()) {
      throw num::NumericError("adam_step: non-finite gradient in tensor " + std::to_string(i) + " (" +
                              grads[i].shape_string() + "); step aborted");
    }
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  ++state.step;
  const double b1 = config.adam_beta1;
  const double b2 = config.adam_beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i < frozen.size() && frozen[i]) continue;
    Array& theta = *params[i];
    Array& m = state.m[i];
    Array& v = state.v[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      const double g = grads[i][k] + config.l2_penalty * theta[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      const double m_hat = m[k] / correction1;
      const double v_hat = v[k] / correction2;
      theta[k] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon);
    }
  }
}

BatchGradients batch_gradients(const model::Model& model, const model::Parameters& params,
                               std::span<const ingest::Sample> batch) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty batch");
  num::Tape tape;
  const auto bound = model::bind(tape, params);
  const auto items = model.encode_items(bound);
  std::vector<num::Value> losses;
  losses.reserve(batch.size());
  for (const auto& s : batch) {
    const auto enc = model.encode_session(bound, items, s.prefix);
    losses.push_back(model.loss(model.score(bound, items, enc), s.target));
  }
  const num::Value loss = num::mean_of(losses);
  tape.backward(loss);

  BatchGradients out;
  out.loss = loss.value()[0];
  for (const auto& leaf : model::bound_values(bound)) {
    out.grads.push_back(leaf.grad());
    out.unused.push_back(!tape.used(leaf));
  }
  return out;
}

TrainResult train(const model::Model& model, model::Parameters initial, std::span<const ingest::Sample> samples,
                  std::span<const ingest::Sample> validation, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (samples.empty()) throw std::invalid_argument("train: no training samples");

  TrainResult result;
  model::Parameters params = std::move(initial);
  result.params = params;
  const auto tensors = model::param_tensors(params);
  AdamState adam;
  std::mt19937_64 rng(config.seed ^ kShuffleStream);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);

  double best_mrr = -1.0;
  std::size_t stale = 0;
  const std::size_t cutoffs[] = {kValidationCutoff};
  std::vector<ingest::Sample> batch;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(samples[order[i]]);
      auto g = batch_gradients(model, params, batch);
      const auto frozen = std::make_unique<bool[]>(g.unused.size());
      std::copy(g.unused.begin(), g.unused.end(), frozen.get());
      adam_step(tensors, g.grads, adam, config, std::span<const bool>(frozen.get(), g.unused.size()));
      loss_sum += g.loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rec.val_hr = rec.val_mrr = rec.val_ndcg = nan;
    bool improved = true;
    if (!validation.empty()) {
      const auto r = eval::evaluate(model, params, validation, cutoffs, config.threads);
      const auto& m = r.at.at(kValidationCutoff);
      rec.val_hr = m.hr;
      rec.val_mrr = m.mrr;
      rec.val_ndcg = m.ndcg;
      improved = m.mrr > best_mrr;
      if (improved) best_mrr = m.mrr;
    }
    result.history.push_back(rec);
    if (improved) {
      result.params = params;
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= config.early_stop_patience) {
      break;
    }
    if (on_epoch && !on_epoch(rec, params)) break;
  }
  return result;
}

std::vector<ingest::Sample> make_samples(std::span<const ingest::Session> sessions, bool augment) {
  if (augment) return ingest::augment_prefixes(sessions);
  std::vector<ingest::Sample> out;
  for (const auto& s : sessions) {
    if (s.items.size() < 2) continue;
    out.push_back({std::vector<ItemIndex>(s.items.begin(), s.items.end() - 1), s.items.back()});
  }
  return out;
}

TrainingSetup prepare(std::span<const ingest::Session> train_sessions, std::size_t num_items,
                      const TrainConfig& config) {
  config.validate();
  const auto graph = graphs::SessionGraph::build(train_sessions, num_items);
  model::Model model(config.model, model::build_graph_inputs(graph, config.model));
  const auto n_val = static_cast<std::size_t>(
      std::floor(static_cast<double>(train_sessions.size()) * config.validation_fraction));
  const std::size_t n_fit = train_sessions.size() - n_val;
  auto samples = make_samples(train_sessions.first(n_fit), config.augment);
  auto validation = ingest::augment_prefixes(train_sessions.subspan(n_fit));
  return TrainingSetup{std::move(model), std::move(samples), std::move(validation)};
}

void write_history_csv(std::ostream& out, std::span<const EpochRecord> history) {
  auto f = [](double v) {
    if (std::isnan(v)) return std::string();
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return std::string(buf);
  };
  out << "epoch,train_loss,val_hr20,val_mrr20,val_ndcg20\n";
  for (const auto& r : history) {
    char loss[40];
    std::snprintf(loss, sizeof(loss), "%.9f", r.train_loss);
    out << r.epoch << ',' << loss << ',' << f(r.val_hr) << ',' << f(r.val_mrr) << ',' << f(r.val_ndcg) << '\n';
  }
}

}  // namespace causalrec::trainer
