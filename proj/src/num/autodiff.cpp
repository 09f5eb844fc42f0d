#include "causalrec/num/autodiff.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace causalrec::num {

namespace {

Tape& tape_of(std::string_view op, std::initializer_list<const Value*> values) {
  Tape* tape = nullptr;
  for (const Value* v : values) {
    if (!v->valid()) throw std::invalid_argument(std::string(op) + ": unbound value");
    if (tape == nullptr) tape = v->tape();
    if (v->tape() != tape) throw std::invalid_argument(std::string(op) + ": values from different tapes");
  }
  return *tape;
}

Tape& tape_of(std::string_view op, std::span<const Value> values) {
  if (values.empty()) throw std::invalid_argument(std::string(op) + ": no inputs");
  Tape* tape = values.front().tape();
  for (const Value& v : values) {
    if (!v.valid()) throw std::invalid_argument(std::string(op) + ": unbound value");
    if (v.tape() != tape) throw std::invalid_argument(std::string(op) + ": values from different tapes");
  }
  return *tape;
}

[[noreturn]] void shape_mismatch(std::string_view op, const Array& a, const Array& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

void accumulate(Tape& t, std::size_t id, const Array& delta) {
  if (!t.requires_grad(id)) return;
  auto dst = t.grad_mut(id).values();
  auto src = delta.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

// out = a * b (or with transposes), accumulated into `out`.
void gemm_acc(const Array& a, bool ta, const Array& b, bool tb, Array& out) {
  const std::size_t m = ta ? a.cols() : a.rows();
  const std::size_t k = ta ? a.rows() : a.cols();
  const std::size_t n = tb ? b.rows() : b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a(p, i) : a(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        out(i, j) += av * (tb ? b(j, p) : b(p, j));
      }
    }
  }
}

void check_segments(std::string_view op, const std::vector<Index>& ids, std::size_t rows,
                    std::size_t num_segments) {
  if (ids.size() != rows) {
    throw ShapeError(std::string(op) + ": " + std::to_string(ids.size()) + " segment ids for " +
                     std::to_string(rows) + " rows");
  }
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= num_segments) throw ShapeError(std::string(op) + ": segment id out of range");
    if (i > 0 && ids[i] < ids[i - 1]) {
      throw std::invalid_argument(std::string(op) + ": segment ids must be sorted");
    }
  }
}

}  // namespace

const Array& Value::value() const { return tape_->value(id_); }
const Array& Value::grad() const { return tape_->grad(id_); }

Value Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Value(this, nodes_.size() - 1);
}

Value Tape::leaf(Array value) {
  if (!value.all_finite()) throw NumericError("leaf: non-finite value of shape " + value.shape_string());
  Node n;
  n.grad = Array(value.rows(), value.cols());
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Value Tape::constant(Array value) {
  if (!value.all_finite()) throw NumericError("constant: non-finite value of shape " + value.shape_string());
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Value Tape::record(Array value, std::initializer_list<Value> inputs, Backward backward,
                   std::string_view op) {
  return record(std::move(value), std::span<const Value>(inputs.begin(), inputs.size()),
                std::move(backward), op);
}

Value Tape::record(Array value, std::span<const Value> inputs, Backward backward,
                   std::string_view op) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite output of shape " + value.shape_string());
  }
  Node n;
  for (const Value& in : inputs) {
    // A first use that was rewound away no longer counts.
    auto& first = nodes_[in.id()].first_use;
    if (first >= nodes_.size()) first = nodes_.size();
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) {
    n.grad = Array(value.rows(), value.cols());
    n.backward = std::move(backward);
  }
  n.value = std::move(value);
  return push(std::move(n));
}

void Tape::backward(const Value& loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: value from another tape");
  const Array& lv = value(loss.id());
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ShapeError("backward: loss must be scalar, got " + lv.shape_string());
  }
  for (auto& n : nodes_) {
    if (n.requires_grad) n.grad.fill(0.0);
  }
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
}

void Tape::rewind(std::size_t mark) {
  if (mark < nodes_.size()) nodes_.resize(mark);
}

// ---- ops ----------------------------------------------------------------

Value matmul(const Value& a, const Value& b) {
  Tape& t = tape_of("matmul", {&a, &b});
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.cols() != bv.rows()) shape_mismatch("matmul", av, bv);
  Array out(av.rows(), bv.cols());
  gemm_acc(av, false, bv, false, out);
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    if (tp.requires_grad(ia)) gemm_acc(g, false, tp.value(ib), true, tp.grad_mut(ia));
    if (tp.requires_grad(ib)) gemm_acc(tp.value(ia), true, g, false, tp.grad_mut(ib));
  }, "matmul");
}

Value transpose(const Value& a) {
  Tape& t = tape_of("transpose", {&a});
  const Array& av = a.value();
  Array out(av.cols(), av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out(j, i) = av(i, j);
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    Array& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < ga.rows(); ++i)
      for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) += g(j, i);
  }, "transpose");
}

namespace {

Value add_scaled(const Value& a, const Value& b, double sign, std::string_view op) {
  Tape& t = tape_of(op, {&a, &b});
  const Array& av = a.value();
  const Array& bv = b.value();
  if (!av.same_shape(bv)) shape_mismatch(op, av, bv);
  Array out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + sign * bv[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib, sign](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    accumulate(tp, ia, g);
    if (tp.requires_grad(ib)) {
      Array& gb = tp.grad_mut(ib);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += sign * g[i];
    }
  }, op);
}

}  // namespace

Value add(const Value& a, const Value& b) { return add_scaled(a, b, 1.0, "add"); }
Value sub(const Value& a, const Value& b) { return add_scaled(a, b, -1.0, "sub"); }

Value hadamard(const Value& a, const Value& b) {
  Tape& t = tape_of("hadamard", {&a, &b});
  const Array& av = a.value();
  const Array& bv = b.value();
  if (!av.same_shape(bv)) shape_mismatch("hadamard", av, bv);
  Array out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(std::move(out), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    if (tp.requires_grad(ia)) {
      Array& ga = tp.grad_mut(ia);
      const Array& bv = tp.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Array& gb = tp.grad_mut(ib);
      const Array& av = tp.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  }, "hadamard");
}

Value scale(const Value& a, double s) { return affine(a, s, 0.0); }

Value scale(const Value& a, const Value& s) {
  Tape& t = tape_of("scale", {&a, &s});
  const Array& av = a.value();
  const Array& sv = s.value();
  if (sv.size() != 1) shape_mismatch("scale", av, sv);
  const double k = sv[0];
  Array out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * k;
  const auto ia = a.id(), is = s.id();
  return t.record(std::move(out), {a, s}, [ia, is](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    const Array& av = tp.value(ia);
    if (tp.requires_grad(ia)) {
      const double k = tp.value(is)[0];
      Array& ga = tp.grad_mut(ia);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * k;
    }
    if (tp.requires_grad(is)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      tp.grad_mut(is)[0] += acc;
    }
  }, "scale");
}

Value affine(const Value& a, double mul, double shift) {
  Tape& t = tape_of("affine", {&a});
  const Array& av = a.value();
  Array out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mul * av[i] + shift;
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia, mul](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    Array& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += mul * g[i];
  }, "affine");
}

Value concat_rows(std::span<const Value> parts) {
  Tape& t = tape_of("concat_rows", parts);
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const Value& p : parts) {
    if (p.cols() != cols) shape_mismatch("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
  }
  Array out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const Value& p : parts) {
    const auto src = p.value().values();
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
    ids.push_back(p.id());
  }
  return t.record(std::move(out), parts, [ids = std::move(ids)](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    std::size_t offset = 0;
    for (const auto id : ids) {
      const std::size_t n = tp.value(id).size();
      if (tp.requires_grad(id)) {
        Array& gi = tp.grad_mut(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[offset + i];
      }
      offset += n;
    }
  }, "concat_rows");
}

Value concat_cols(std::span<const Value> parts) {
  Tape& t = tape_of("concat_cols", parts);
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Value& p : parts) {
    if (p.rows() != rows) shape_mismatch("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
  }
  Array out(rows, cols);
  std::vector<std::size_t> ids;
  std::size_t offset = 0;
  for (const Value& p : parts) {
    const Array& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out(r, offset + c) = pv(r, c);
    offset += pv.cols();
    ids.push_back(p.id());
  }
  return t.record(std::move(out), parts, [ids = std::move(ids)](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    std::size_t offset = 0;
    for (const auto id : ids) {
      const std::size_t c = tp.value(id).cols();
      if (tp.requires_grad(id)) {
        Array& gi = tp.grad_mut(id);
        for (std::size_t r = 0; r < gi.rows(); ++r)
          for (std::size_t k = 0; k < c; ++k) gi(r, k) += g(r, offset + k);
      }
      offset += c;
    }
  }, "concat_cols");
}

Value concat_rows(std::initializer_list<Value> parts) {
  return concat_rows(std::span<const Value>(parts.begin(), parts.size()));
}

Value concat_cols(std::initializer_list<Value> parts) {
  return concat_cols(std::span<const Value>(parts.begin(), parts.size()));
}

Value gather_rows(const Value& a, IndexBuffer indices) {
  Tape& t = tape_of("gather_rows", {&a});
  const Array& av = a.value();
  const auto& idx = *indices;
  Array out(idx.size(), av.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= av.rows()) {
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " out of range for " +
                       av.shape_string());
    }
    const auto src = av.row(idx[r]);
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(r * av.cols()));
  }
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia, indices](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    Array& ga = tp.grad_mut(ia);
    const auto& idx = *indices;
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(idx[r], c) += g(r, c);
  }, "gather_rows");
}

Value segment_softmax(const Value& scores, IndexBuffer segment_ids, std::size_t num_segments) {
  Tape& t = tape_of("segment_softmax", {&scores});
  const Array& sv = scores.value();
  if (sv.cols() != 1) throw ShapeError("segment_softmax: scores must be a column, got " + sv.shape_string());
  const auto& ids = *segment_ids;
  check_segments("segment_softmax", ids, sv.rows(), num_segments);
  Array out(sv.rows(), 1);
  std::size_t begin = 0;
  while (begin < ids.size()) {
    std::size_t end = begin;
    double mx = sv[begin];
    while (end < ids.size() && ids[end] == ids[begin]) mx = std::max(mx, sv[end++]);
    double total = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = std::exp(sv[i] - mx);
      total += out[i];
    }
    for (std::size_t i = begin; i < end; ++i) out[i] /= total;
    begin = end;
  }
  const auto is = scores.id();
  return t.record(std::move(out), {scores}, [is, segment_ids](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    const Array& y = tp.value(self);
    Array& gs = tp.grad_mut(is);
    const auto& ids = *segment_ids;
    std::size_t begin = 0;
    while (begin < ids.size()) {
      std::size_t end = begin;
      double inner = 0.0;
      while (end < ids.size() && ids[end] == ids[begin]) {
        inner += g[end] * y[end];
        ++end;
      }
      for (std::size_t i = begin; i < end; ++i) gs[i] += y[i] * (g[i] - inner);
      begin = end;
    }
  }, "segment_softmax");
}

Value softmax(const Value& column) {
  return segment_softmax(column, make_indices(std::vector<Index>(column.rows(), 0)), 1);
}

Value segment_weighted_sum(const Value& values, const Value& weights, IndexBuffer segment_ids,
                           std::size_t num_segments) {
  Tape& t = tape_of("segment_weighted_sum", {&values, &weights});
  const Array& vv = values.value();
  const Array& wv = weights.value();
  if (wv.cols() != 1 || wv.rows() != vv.rows()) shape_mismatch("segment_weighted_sum", vv, wv);
  const auto& ids = *segment_ids;
  check_segments("segment_weighted_sum", ids, vv.rows(), num_segments);
  Array out(num_segments, vv.cols());
  for (std::size_t r = 0; r < vv.rows(); ++r) {
    const double w = wv[r];
    for (std::size_t c = 0; c < vv.cols(); ++c) out(ids[r], c) += w * vv(r, c);
  }
  const auto iv = values.id(), iw = weights.id();
  return t.record(std::move(out), {values, weights}, [iv, iw, segment_ids](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    const auto& ids = *segment_ids;
    const Array& vv = tp.value(iv);
    const Array& wv = tp.value(iw);
    if (tp.requires_grad(iv)) {
      Array& gv = tp.grad_mut(iv);
      for (std::size_t r = 0; r < vv.rows(); ++r)
        for (std::size_t c = 0; c < vv.cols(); ++c) gv(r, c) += wv[r] * g(ids[r], c);
    }
    if (tp.requires_grad(iw)) {
      Array& gw = tp.grad_mut(iw);
      for (std::size_t r = 0; r < vv.rows(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < vv.cols(); ++c) acc += vv(r, c) * g(ids[r], c);
        gw[r] += acc;
      }
    }
  }, "segment_weighted_sum");
}

Value leaky_relu(const Value& a, double slope) {
  Tape& t = tape_of("leaky_relu", {&a});
  const Array& av = a.value();
  Array out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] >= 0.0 ? av[i] : slope * av[i];
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia, slope](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    const Array& av = tp.value(ia);
    Array& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += av[i] >= 0.0 ? g[i] : slope * g[i];
  }, "leaky_relu");
}

double sigmoid_of(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Value sigmoid(const Value& a) {
  Tape& t = tape_of("sigmoid", {&a});
  const Array& av = a.value();
  Array out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid_of(av[i]);
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    const Array& y = tp.value(self);
    Array& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  }, "sigmoid");
}

Value log_clamped(const Value& a, double lo, double hi) {
  Tape& t = tape_of("log_clamped", {&a});
  const Array& av = a.value();
  Array out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::clamp(av[i], lo, hi));
  const auto ia = a.id();
  return t.record(std::move(out), {a}, [ia, lo, hi](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    const Array& av = tp.value(ia);
    Array& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) {
      if (av[i] > lo && av[i] < hi) ga[i] += g[i] / av[i];
    }
  }, "log_clamped");
}

Value mean_of(std::span<const Value> parts) {
  Tape& t = tape_of("mean_of", parts);
  const Array& first = parts.front().value();
  Array out(first.rows(), first.cols());
  std::vector<std::size_t> ids;
  for (const Value& p : parts) {
    if (!p.value().same_shape(first)) shape_mismatch("mean_of", first, p.value());
    const Array& pv = p.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += pv[i];
    ids.push_back(p.id());
  }
  const double n = static_cast<double>(parts.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= n;
  return t.record(std::move(out), parts, [ids = std::move(ids)](Tape& tp, std::size_t self) {
    const Array& g = tp.grad(self);
    const double n = static_cast<double>(ids.size());
    for (const auto id : ids) {
      if (!tp.requires_grad(id)) continue;
      Array& gi = tp.grad_mut(id);
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[i] / n;
    }
  }, "mean_of");
}

Value mean_of(std::initializer_list<Value> parts) {
  return mean_of(std::span<const Value>(parts.begin(), parts.size()));
}

Value dot(const Value& a, const Value& b) {
  Tape& t = tape_of("dot", {&a, &b});
  const Array& av = a.value();
  const Array& bv = b.value();
  if (av.size() != bv.size()) shape_mismatch("dot", av, bv);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  const auto ia = a.id(), ib = b.id();
  return t.record(Array::scalar(acc), {a, b}, [ia, ib](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    if (tp.requires_grad(ia)) {
      Array& ga = tp.grad_mut(ia);
      const Array& bv = tp.value(ib);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
    }
    if (tp.requires_grad(ib)) {
      Array& gb = tp.grad_mut(ib);
      const Array& av = tp.value(ia);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
    }
  }, "dot");
}

Value sum(const Value& a) {
  Tape& t = tape_of("sum", {&a});
  const Array& av = a.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  const auto ia = a.id();
  return t.record(Array::scalar(acc), {a}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)[0];
    Array& ga = tp.grad_mut(ia);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  }, "sum");
}

}  // namespace causalrec::num
