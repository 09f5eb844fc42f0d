#include "causalrec/model.h"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace causalrec::model {

using num::IndexBuffer;
using num::make_indices;

void ModelConfig::validate() const {
  if (dim == 0) throw std::invalid_argument("model: dim must be >= 1");
  if (heads == 0) throw std::invalid_argument("model: heads must be >= 1");
  if (layers == 0) throw std::invalid_argument("model: layers must be >= 1");
  if (disable_causality && disable_correlation) {
    // Preference is built from the other channels' encodings.
    throw std::invalid_argument("model: causality and correlation cannot both be disabled");
  }
}

// ---- parameters ---------------------------------------------------------

namespace {

ChannelSet<Array> shaped_channel(const ModelConfig& c) {
  const std::size_t d = c.dim;
  ChannelSet<Array> ch;
  ch.layers.assign(c.layers, std::vector<HeadSet<Array>>(c.heads, HeadSet<Array>{
                                                                      Array(d, d),
                                                                      Array(2 * d + 1, 1),
                                                                      Array(d, d),
                                                                  }));
  ch.q = Array(d, 1);
  ch.w4 = Array(d, d);
  ch.w5 = Array(d, d);
  ch.b = Array(1, d);
  ch.w6 = Array(d, 2 * d);
  return ch;
}

bool is_mixing_scalar(const std::string& name) {
  return name.starts_with("gamma") || name.starts_with("lambda");
}

}  // namespace

Parameters shaped_params(std::size_t num_items, const ModelConfig& config) {
  config.validate();
  if (num_items == 0) throw std::invalid_argument("model: num_items must be >= 1");
  Parameters p;
  p.embedding = Array(num_items, config.dim);
  p.cause = shaped_channel(config);
  p.effect = shaped_channel(config);
  p.correlation = shaped_channel(config);
  p.w7 = Array(config.dim, config.dim);
  for (Array* s : {&p.gamma1, &p.gamma2, &p.gamma3, &p.lambda1, &p.lambda2, &p.lambda3}) {
    *s = Array::scalar(0.0);
  }
  return p;
}

Parameters init_params(std::size_t num_items, const ModelConfig& config, std::uint64_t seed) {
  Parameters p = shaped_params(num_items, config);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, kInitStddev);
  for_each_param(p, [&](const std::string& name, Array& a) {
    if (is_mixing_scalar(name)) {
      a.fill(1.0);
      return;
    }
    for (auto& v : a.values()) v = normal(rng);
  });
  return p;
}

std::vector<std::string> param_names(const Parameters& p) {
  std::vector<std::string> names;
  for_each_param(p, [&](const std::string& name, const Array&) { names.push_back(name); });
  return names;
}

std::vector<Array*> param_tensors(Parameters& p) {
  std::vector<Array*> out;
  for_each_param(p, [&](const std::string&, Array& a) { out.push_back(&a); });
  return out;
}

namespace {

template <typename F>
HeadSet<Value> bind_head(const HeadSet<Array>& h, F& make) {
  return {make(h.w1), make(h.w2), make(h.w3)};
}

template <typename F>
ChannelSet<Value> bind_channel(const ChannelSet<Array>& c, F& make) {
  ChannelSet<Value> out;
  for (const auto& layer : c.layers) {
    auto& dst = out.layers.emplace_back();
    for (const auto& h : layer) dst.push_back(bind_head(h, make));
  }
  out.q = make(c.q);
  out.w4 = make(c.w4);
  out.w5 = make(c.w5);
  out.b = make(c.b);
  out.w6 = make(c.w6);
  return out;
}

}  // namespace

BoundParams bind(num::Tape& tape, const Parameters& p, bool trainable) {
  auto make = [&](const Array& a) { return trainable ? tape.leaf(a) : tape.constant(a); };
  // Members are bound in manifest order so leaf ids follow for_each_param.
  BoundParams b;
  b.embedding = make(p.embedding);
  b.cause = bind_channel(p.cause, make);
  b.effect = bind_channel(p.effect, make);
  b.correlation = bind_channel(p.correlation, make);
  b.w7 = make(p.w7);
  b.gamma1 = make(p.gamma1);
  b.gamma2 = make(p.gamma2);
  b.gamma3 = make(p.gamma3);
  b.lambda1 = make(p.lambda1);
  b.lambda2 = make(p.lambda2);
  b.lambda3 = make(p.lambda3);
  return b;
}

BoundParams rebind(const Parameters& like, std::span<const Value> values) {
  BoundParams b;
  for (auto* c : {&b.cause, &b.effect, &b.correlation}) {
    c->layers.resize(like.cause.layers.size());
    for (std::size_t l = 0; l < c->layers.size(); ++l) c->layers[l].resize(like.cause.layers[l].size());
  }
  std::size_t i = 0;
  for_each_param(b, [&](const std::string& name, Value& v) {
    if (i >= values.size()) throw std::invalid_argument("rebind: no value for " + name);
    v = values[i++];
  });
  if (i != values.size()) throw std::invalid_argument("rebind: too many values");
  return b;
}

std::vector<Value> bound_values(const BoundParams& b) {
  std::vector<Value> out;
  for_each_param(b, [&](const std::string&, const Value& v) { out.push_back(v); });
  return out;
}

// ---- graph inputs ------------------------------------------------------

namespace {

struct RawEdge {
  ItemIndex src;
  ItemIndex dst;
  std::vector<double> features;
};

EdgeInput pack_edges(std::size_t num_items, std::vector<RawEdge> edges, std::size_t feature_cols) {
  std::sort(edges.begin(), edges.end(), [](const RawEdge& a, const RawEdge& b) {
    return std::pair{a.dst, a.src} < std::pair{b.dst, b.src};
  });
  std::vector<num::Index> src, dst;
  Array features(edges.size(), feature_cols);
  for (std::size_t e = 0; e < edges.size(); ++e) {
    src.push_back(edges[e].src);
    dst.push_back(edges[e].dst);
    for (std::size_t c = 0; c < feature_cols; ++c) features(e, c) = edges[e].features[c];
  }
  return EdgeInput{num_items, make_indices(std::move(src)), make_indices(std::move(dst)), std::move(features)};
}

}  // namespace

EdgeInput edges_from_digraph(const graphs::WeightedDigraph& g, bool self_loops) {
  std::vector<RawEdge> edges;
  for (const auto& e : g.edges) edges.push_back({e.src, e.dst, {e.weight}});
  if (self_loops) {
    for (ItemIndex i = 0; i < g.num_items; ++i) {
      if (g.weight(i, i) < 0.0) edges.push_back({i, i, {1.0}});
    }
  }
  return pack_edges(g.num_items, std::move(edges), 1);
}

EdgeInput edges_from_correlation(const graphs::CorrelationGraph& g, bool self_loops) {
  std::vector<RawEdge> edges;
  for (const auto& e : g.edges) {
    std::vector<double> f{e.first_order, e.chain, e.fork, e.collider};
    edges.push_back({e.a, e.b, f});
    edges.push_back({e.b, e.a, f});
  }
  if (self_loops) {
    for (ItemIndex i = 0; i < g.num_items; ++i) edges.push_back({i, i, {1.0, 0.0, 0.0, 0.0}});
  }
  return pack_edges(g.num_items, std::move(edges), 4);
}

GraphInputs build_graph_inputs(const graphs::SessionGraph& g, const ModelConfig& config) {
  const auto effect = graphs::effect_graph(g, config.effect);
  const auto cause = graphs::cause_graph(effect);
  const auto corr = graphs::correlation_graph(g);
  GraphInputs in;
  in.num_items = g.num_items();
  in.cause = edges_from_digraph(cause, config.self_loops);
  in.effect = edges_from_digraph(effect, config.self_loops);
  in.correlation = edges_from_correlation(corr, config.self_loops);
  return in;
}

// ---- forward pass ------------------------------------------------------

Value wgat_encode(const EdgeInput& edges, const Value& x0,
                  const std::vector<std::vector<HeadSet<Value>>>& layers, const Value& edge_mix) {
  num::Tape& tape = *x0.tape();
  const std::size_t n = x0.rows();
  if (edges.num_items != n) {
    throw num::ShapeError("wgat_encode: graph has " + std::to_string(edges.num_items) + " items, embedding " +
                          x0.value().shape_string());
  }
  const Value features = tape.constant(edges.features);
  const Value weight = edge_mix.valid() ? num::matmul(features, edge_mix) : features;
  if (weight.cols() != 1) throw num::ShapeError("wgat_encode: edge features need a mixing column");

  Value x = x0;
  for (const auto& heads : layers) {
    std::vector<Value> outs;
    outs.reserve(heads.size());
    for (const auto& h : heads) {
      const Value projected = num::matmul(x, num::transpose(h.w1));
      const Value at_dst = num::gather_rows(projected, edges.dst);
      const Value at_src = num::gather_rows(projected, edges.src);
      const Value logits = num::leaky_relu(num::matmul(num::concat_cols({at_dst, at_src, weight}), h.w2));
      const Value attention = num::segment_softmax(logits, edges.dst, n);
      const Value messages = num::gather_rows(num::matmul(x, num::transpose(h.w3)), edges.src);
      outs.push_back(num::leaky_relu(num::segment_weighted_sum(messages, attention, edges.dst, n)));
    }
    x = num::mean_of(outs);
  }
  return x;
}

SessionAttention encode_session(const Value& items, const ChannelSet<Value>& params,
                                std::span<const ItemIndex> session, bool normalize) {
  if (session.empty()) throw std::invalid_argument("encode_session: empty session");
  const std::size_t l = session.size();
  const auto positions = make_indices(std::vector<num::Index>(session.begin(), session.end()));
  const auto last_repeated = make_indices(std::vector<num::Index>(l, session.back()));
  const auto zeros = make_indices(std::vector<num::Index>(l, 0));

  const Value xs = num::gather_rows(items, positions);
  const Value xl_rows = num::gather_rows(items, last_repeated);
  const Value bias_rows = num::gather_rows(params.b, zeros);
  const Value hidden = num::sigmoid(num::add(
      num::add(num::matmul(xl_rows, num::transpose(params.w4)), num::matmul(xs, num::transpose(params.w5))),
      bias_rows));
  Value weights = num::matmul(hidden, params.q);
  if (normalize) weights = num::softmax(weights);
  const Value aggregate = num::segment_weighted_sum(xs, weights, zeros, 1);
  const Value last = num::gather_rows(items, make_indices({session.back()}));
  const Value rep = num::matmul(num::concat_cols({last, aggregate}), num::transpose(params.w6));
  return {rep, weights};
}

Model::Model(ModelConfig config, GraphInputs graphs) : config_(std::move(config)), graphs_(std::move(graphs)) {
  config_.validate();
  for (const EdgeInput* e : {&graphs_.cause, &graphs_.effect, &graphs_.correlation}) {
    if (e->num_items != graphs_.num_items) throw std::invalid_argument("Model: graph item counts differ");
  }
}

Value Model::correlation_mix(const BoundParams& p) const {
  num::Tape& tape = *p.embedding.tape();
  const Value one = tape.constant(Array::scalar(1.0));
  auto slot = [&](bool dropped, const Value& lambda) {
    return dropped ? tape.constant(Array::scalar(0.0)) : lambda;
  };
  return num::concat_rows({one, slot(config_.drop_chain, p.lambda1), slot(config_.drop_fork, p.lambda2),
                           slot(config_.drop_collider, p.lambda3)});
}

ItemEncodings Model::encode_items(const BoundParams& p) const {
  if (p.embedding.rows() != num_items()) {
    throw num::ShapeError("Model: embedding has " + p.embedding.value().shape_string() + " for " +
                          std::to_string(num_items()) + " items");
  }
  ItemEncodings out;
  std::vector<Value> active;
  if (causality_enabled()) {
    out.cause = wgat_encode(graphs_.cause, p.embedding, p.cause.layers, Value{});
    out.effect = wgat_encode(graphs_.effect, p.embedding, p.effect.layers, Value{});
    active.push_back(out.cause);
    active.push_back(out.effect);
  }
  if (correlation_enabled()) {
    out.correlation = wgat_encode(graphs_.correlation, p.embedding, p.correlation.layers, correlation_mix(p));
    active.push_back(out.correlation);
  }
  if (preference_enabled()) out.preference = num::mean_of(active);
  return out;
}

SessionEncoding Model::encode_session(const BoundParams& p, const ItemEncodings& items,
                                      std::span<const ItemIndex> session) const {
  for (const auto i : session) {
    if (i >= num_items()) throw std::out_of_range("encode_session: item index out of range");
  }
  const bool norm = config_.normalize_session_attention;
  SessionEncoding s;
  std::vector<Value> active;
  if (causality_enabled()) {
    s.cause = model::encode_session(items.cause, p.cause, session, norm);
    s.effect = model::encode_session(items.effect, p.effect, session, norm);
    active.push_back(s.cause.representation);
    active.push_back(s.effect.representation);
  }
  if (correlation_enabled()) {
    s.correlation = model::encode_session(items.correlation, p.correlation, session, norm);
    active.push_back(s.correlation.representation);
  }
  if (preference_enabled()) s.preference = num::matmul(num::mean_of(active), num::transpose(p.w7));
  return s;
}

ScoreParts Model::score(const BoundParams& p, const ItemEncodings& items, const SessionEncoding& s) const {
  ScoreParts out;
  if (causality_enabled()) {
    const Value forward = num::matmul(items.effect, num::transpose(s.cause.representation));
    const Value backward = num::matmul(items.cause, num::transpose(s.effect.representation));
    out.causality = num::sub(forward, num::scale(backward, p.gamma1));
  }
  if (correlation_enabled()) {
    out.correlation = num::matmul(items.correlation, num::transpose(s.correlation.representation));
  }
  if (preference_enabled()) {
    out.preference = num::matmul(items.preference, num::transpose(s.preference));
  }

  Value total;
  auto accumulate = [&](const Value& term) { total = total.valid() ? num::add(total, term) : term; };
  if (preference_enabled()) accumulate(out.preference);
  if (causality_enabled()) accumulate(num::scale(out.causality, p.gamma2));
  if (correlation_enabled()) accumulate(num::scale(out.correlation, p.gamma3));
  out.total = total;
  out.probabilities = num::softmax(total);
  return out;
}

Value Model::loss(const ScoreParts& scores, ItemIndex target) const {
  const Value& p = scores.probabilities;
  if (target >= p.rows()) throw std::out_of_range("loss: target " + std::to_string(target) + " out of range");
  num::Tape& tape = *p.tape();
  Array onehot(p.rows(), 1);
  onehot[target] = 1.0;
  const Value log_p = num::log_clamped(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  const Value hit = num::dot(tape.constant(onehot), log_p);
  if (config_.loss == LossKind::kCategorical) return num::scale(hit, -1.0);

  Array rest(p.rows(), 1, 1.0);
  rest[target] = 0.0;
  const Value log_not_p =
      num::log_clamped(num::affine(p, -1.0, 1.0), kProbabilityClamp, 1.0 - kProbabilityClamp);
  const Value miss = num::dot(tape.constant(rest), log_not_p);
  return num::scale(num::add(hit, miss), -1.0);
}

// ---- inference ---------------------------------------------------------

Scorer::Scorer(const Model& model, const Parameters& params)
    : model_(model), bound_(bind(tape_, params, /*trainable=*/false)), items_(model.encode_items(bound_)) {}

ScoreBreakdown Scorer::score(std::span<const ItemIndex> session) {
  const std::size_t mark = tape_.size();
  const SessionEncoding s = model_.encode_session(bound_, items_, session);
  const ScoreParts parts = model_.score(bound_, items_, s);
  const std::size_t n = model_.num_items();
  auto take = [&](const Value& v) { return v.valid() ? v.value() : Array(n, 1); };
  ScoreBreakdown out{take(parts.total), take(parts.causality), take(parts.correlation), take(parts.preference),
                     take(parts.probabilities)};
  tape_.rewind(mark);
  return out;
}

}  // namespace causalrec::model
