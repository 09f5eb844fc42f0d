#pragma once

// Tape-based reverse-mode differentiation over dense Arrays.
//
// A Tape records every operation of one forward pass. Values are lightweight
// handles into the tape; ops are free functions that append a node holding the
// forward result and a closure that pushes the node's adjoint to its inputs.
// Nodes are appended in topological order, so backward() is a single reverse
// sweep. All reductions run in ascending index order, which keeps results
// bit-reproducible.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "causalrec/num/array.h"

namespace causalrec::num {

using Index = std::uint32_t;
using IndexBuffer = std::shared_ptr<const std::vector<Index>>;

inline IndexBuffer make_indices(std::vector<Index> indices) {
  return std::make_shared<const std::vector<Index>>(std::move(indices));
}

class Tape;

class Value {
 public:
  Value() = default;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Array& value() const;
  const Array& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Value(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Adjoint propagation for one node; receives the tape and the node's own id.
  using Backward = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Value leaf(Array value);
  Value constant(Array value);

  // Appends an op result. `inputs` are marked used; the node tracks gradients
  // iff any input does.
  Value record(Array value, std::initializer_list<Value> inputs, Backward backward,
               std::string_view op);
  Value record(Array value, std::span<const Value> inputs, Backward backward,
               std::string_view op);

  const Array& value(std::size_t id) const { return nodes_[id].value; }
  const Array& grad(std::size_t id) const { return nodes_[id].grad; }
  Array& grad_mut(std::size_t id) { return nodes_[id].grad; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // True once the value has been consumed by at least one recorded op.
  bool used(const Value& v) const { return nodes_[v.id()].first_use < nodes_.size(); }

  // Fills grad of every node reachable from `loss` with d loss / d node.
  // Gradients from a previous backward() are cleared first.
  void backward(const Value& loss);

  std::size_t size() const { return nodes_.size(); }
  // Drops every node recorded after `mark` (a value previously from size()).
  void rewind(std::size_t mark);

 private:
  struct Node {
    Array value;
    Array grad;
    Backward backward;
    bool requires_grad = false;
    std::size_t first_use = static_cast<std::size_t>(-1);  // id of the first consumer
  };

  Value push(Node node);

  std::vector<Node> nodes_;
};

// ---- ops ----------------------------------------------------------------

Value matmul(const Value& a, const Value& b);
Value transpose(const Value& a);
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value hadamard(const Value& a, const Value& b);
Value scale(const Value& a, double s);
// Multiplies every entry of `a` by the 1 x 1 value `s`.
Value scale(const Value& a, const Value& s);
// Elementwise mul * a + shift with constant coefficients.
Value affine(const Value& a, double mul, double shift);
Value concat_rows(std::span<const Value> parts);
Value concat_cols(std::span<const Value> parts);
Value concat_rows(std::initializer_list<Value> parts);
Value concat_cols(std::initializer_list<Value> parts);
Value gather_rows(const Value& a, IndexBuffer indices);

// Softmax of an E x 1 column within contiguous segments. `segment_ids` must be
// non-decreasing and < num_segments.
Value segment_softmax(const Value& scores, IndexBuffer segment_ids, std::size_t num_segments);
Value softmax(const Value& column);
// out[s] = sum over rows r with segment_ids[r] == s of weights[r] * values[r].
// Empty segments yield zero rows.
Value segment_weighted_sum(const Value& values, const Value& weights, IndexBuffer segment_ids,
                           std::size_t num_segments);

inline constexpr double kLeakySlope = 0.2;
Value leaky_relu(const Value& a, double slope = kLeakySlope);
Value sigmoid(const Value& a);
// log(clamp(a, lo, hi)); gradient is zero where the clamp is active.
Value log_clamped(const Value& a, double lo, double hi);
Value mean_of(std::span<const Value> parts);
Value mean_of(std::initializer_list<Value> parts);
Value dot(const Value& a, const Value& b);
Value sum(const Value& a);

double sigmoid_of(double x);

}  // namespace causalrec::num
