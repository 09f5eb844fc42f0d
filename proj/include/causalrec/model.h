#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "causalrec/graphs.h"
#include "causalrec/num/autodiff.h"

namespace causalrec::model {

using num::Array;
using num::Value;

enum class LossKind {
  kBinaryCrossEntropy,  // -sum_j [y log p + (1-y) log(1-p)] over all items
  kCategorical,         // -log p_target
};

struct ModelConfig {
  std::size_t dim = 100;
  std::size_t heads = 4;
  std::size_t layers = 1;
  bool self_loops = true;
  // Softmax-normalise the per-item session attention weights. Off by default:
  // the weights enter the aggregate unnormalised.
  bool normalize_session_attention = false;
  LossKind loss = LossKind::kBinaryCrossEntropy;

  bool disable_causality = false;
  bool disable_correlation = false;
  bool disable_preference = false;
  bool drop_chain = false;
  bool drop_fork = false;
  bool drop_collider = false;
  graphs::EffectOptions effect;

  // Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

inline constexpr double kInitStddev = 0.1;
inline constexpr double kProbabilityClamp = 1e-12;

// ---- parameters ---------------------------------------------------------

template <typename T>
struct HeadSet {
  T w1;  // dim x dim   input projection
  T w2;  // (2 dim + 1) x 1   attention vector; last slot weighs the edge weight
  T w3;  // dim x dim   message projection
};

template <typename T>
struct ChannelSet {
  std::vector<std::vector<HeadSet<T>>> layers;  // [layer][head]
  T q;   // dim x 1
  T w4;  // dim x dim   applied to the last item
  T w5;  // dim x dim   applied to each item
  T b;   // 1 x dim
  T w6;  // dim x 2 dim
};

template <typename T>
struct ParamSet {
  T embedding;  // num_items x dim
  ChannelSet<T> cause;
  ChannelSet<T> effect;
  ChannelSet<T> correlation;
  T w7;  // dim x dim
  T gamma1, gamma2, gamma3;
  T lambda1, lambda2, lambda3;
};

using Parameters = ParamSet<Array>;
using BoundParams = ParamSet<Value>;

namespace detail {

template <typename Set, typename F>
void visit_channel(Set& c, const std::string& prefix, F& f) {
  for (std::size_t l = 0; l < c.layers.size(); ++l) {
    for (std::size_t h = 0; h < c.layers[l].size(); ++h) {
      const std::string p = prefix + ".l" + std::to_string(l) + ".h" + std::to_string(h);
      f(p + ".W1", c.layers[l][h].w1);
      f(p + ".W2", c.layers[l][h].w2);
      f(p + ".W3", c.layers[l][h].w3);
    }
  }
  f(prefix + ".q", c.q);
  f(prefix + ".W4", c.w4);
  f(prefix + ".W5", c.w5);
  f(prefix + ".b", c.b);
  f(prefix + ".W6", c.w6);
}

}  // namespace detail

// Visits every tensor as f(name, tensor) in checkpoint manifest order.
template <typename P, typename F>
void for_each_param(P& p, F&& f) {
  f(std::string("embedding"), p.embedding);
  detail::visit_channel(p.cause, "cause", f);
  detail::visit_channel(p.effect, "effect", f);
  detail::visit_channel(p.correlation, "correlation", f);
  f(std::string("W7"), p.w7);
  f(std::string("gamma1"), p.gamma1);
  f(std::string("gamma2"), p.gamma2);
  f(std::string("gamma3"), p.gamma3);
  f(std::string("lambda1"), p.lambda1);
  f(std::string("lambda2"), p.lambda2);
  f(std::string("lambda3"), p.lambda3);
}

// Zero-filled parameters of the right shapes.
Parameters shaped_params(std::size_t num_items, const ModelConfig& config);
// Weights ~ Normal(0, 0.1) from a seeded generator; gammas and lambdas = 1.
Parameters init_params(std::size_t num_items, const ModelConfig& config, std::uint64_t seed);

std::vector<std::string> param_names(const Parameters& p);
std::vector<Array*> param_tensors(Parameters& p);

// Every tensor becomes a leaf (gradients tracked) or a constant on `tape`.
BoundParams bind(num::Tape& tape, const Parameters& p, bool trainable = true);
std::vector<Value> bound_values(const BoundParams& b);
// Inverse of bound_values: values in manifest order, structure taken from `like`.
BoundParams rebind(const Parameters& like, std::span<const Value> values);

// ---- graph inputs ------------------------------------------------------

// Directed message edges src -> dst, sorted by (dst, src). Each edge carries a
// feature row: one weight for causal graphs, (w1, chain, fork, collider) for
// the correlation graph.
struct EdgeInput {
  std::size_t num_items = 0;
  num::IndexBuffer src;
  num::IndexBuffer dst;
  Array features;

  std::size_t num_edges() const { return src ? src->size() : 0; }
};

EdgeInput edges_from_digraph(const graphs::WeightedDigraph& g, bool self_loops);
// Every undirected correlation edge becomes two directed edges.
EdgeInput edges_from_correlation(const graphs::CorrelationGraph& g, bool self_loops);

struct GraphInputs {
  std::size_t num_items = 0;
  EdgeInput cause;
  EdgeInput effect;
  EdgeInput correlation;
};

GraphInputs build_graph_inputs(const graphs::SessionGraph& g, const ModelConfig& config);

// ---- forward pass ------------------------------------------------------

// One weighted-graph-attention pass per layer; heads averaged. `edge_mix`
// (features.cols() x 1) turns feature rows into the scalar edge weight; pass
// an invalid Value when features already hold one column.
Value wgat_encode(const EdgeInput& edges, const Value& x0,
                  const std::vector<std::vector<HeadSet<Value>>>& layers, const Value& edge_mix);

struct SessionAttention {
  Value representation;  // 1 x dim
  Value weights;         // l x 1
};

SessionAttention encode_session(const Value& items, const ChannelSet<Value>& params,
                                std::span<const ItemIndex> session, bool normalize);

struct ItemEncodings {
  Value cause, effect, correlation, preference;  // num_items x dim; invalid when disabled
};

struct SessionEncoding {
  SessionAttention cause, effect, correlation;
  Value preference;  // 1 x dim
};

struct ScoreParts {
  Value causality;    // num_items x 1; invalid when disabled
  Value correlation;
  Value preference;
  Value total;
  Value probabilities;
};

class Model {
 public:
  Model(ModelConfig config, GraphInputs graphs);

  const ModelConfig& config() const { return config_; }
  const GraphInputs& graphs() const { return graphs_; }
  std::size_t num_items() const { return graphs_.num_items; }
  bool causality_enabled() const { return !config_.disable_causality; }
  bool correlation_enabled() const { return !config_.disable_correlation; }
  bool preference_enabled() const { return !config_.disable_preference; }

  // Column (1, lambda1, lambda2, lambda3) with dropped channels replaced by 0.
  Value correlation_mix(const BoundParams& p) const;
  ItemEncodings encode_items(const BoundParams& p) const;
  SessionEncoding encode_session(const BoundParams& p, const ItemEncodings& items,
                                 std::span<const ItemIndex> session) const;
  ScoreParts score(const BoundParams& p, const ItemEncodings& items, const SessionEncoding& s) const;
  Value loss(const ScoreParts& scores, ItemIndex target) const;

 private:
  ModelConfig config_;
  GraphInputs graphs_;
};

// Inference over fixed parameters: items are encoded once; each query is
// recorded on the same tape and rewound afterwards.
struct ScoreBreakdown {
  Array total, causality, correlation, preference, probabilities;  // num_items x 1
};

class Scorer {
 public:
  Scorer(const Model& model, const Parameters& params);
  Scorer(const Scorer&) = delete;
  Scorer& operator=(const Scorer&) = delete;

  ScoreBreakdown score(std::span<const ItemIndex> session);

  const Model& model() const { return model_; }
  num::Tape& tape() { return tape_; }
  const BoundParams& bound() const { return bound_; }
  const ItemEncodings& items() const { return items_; }

 private:
  const Model& model_;
  num::Tape tape_;
  BoundParams bound_;
  ItemEncodings items_;
};

}  // namespace causalrec::model
