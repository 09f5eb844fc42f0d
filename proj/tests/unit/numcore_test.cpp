#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "causalrec/num/autodiff.h"
#include "causalrec/num/grad_check.h"

using namespace causalrec::num;

namespace {

Array random_array(std::size_t r, std::size_t c, std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Array a(r, c);
  for (auto& v : a.values()) v = u(rng);
  return a;
}

// Reduces any op output to a scalar with fixed random weights so every entry
// of the output gets a distinct adjoint.
Value project(Tape& t, const Value& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return dot(t.constant(random_array(v.rows(), v.cols(), rng)), v);
}

void expect_grads_match(const ScalarFunction& f, std::vector<Array> params) {
  const auto report = grad_check(f, params);
  for (const auto& p : report.params) {
    EXPECT_TRUE(p.passed) << p.name << " max rel err " << p.max_relative_error;
  }
  EXPECT_LT(report.max_relative_error(), 1e-4);
}

}  // namespace

TEST(Array, ShapeAndFiniteness) {
  Array a(2, 3, 1.5);
  EXPECT_EQ(a.size(), 6u);
  EXPECT_EQ(a.shape_string(), "2x3");
  EXPECT_TRUE(a.all_finite());
  a(1, 2) = std::nan("");
  EXPECT_FALSE(a.all_finite());
  EXPECT_THROW(Array(2, 2, std::vector<double>{1.0, 2.0}), ShapeError);
}

TEST(Ops, TextbookValues) {
  Tape t;
  EXPECT_DOUBLE_EQ(segment_softmax(t.constant(Array::scalar(3.7)), make_indices({0}), 1).value()[0], 1.0);
  EXPECT_DOUBLE_EQ(leaky_relu(t.constant(Array::scalar(-1.0)), 0.2).value()[0], -0.2);
  const Value u = t.constant(Array::column({3.0, 4.0}));
  EXPECT_DOUBLE_EQ(dot(u, u).value()[0], 25.0);
  EXPECT_DOUBLE_EQ(sigmoid(t.constant(Array::scalar(0.0))).value()[0], 0.5);
  const Value m = matmul(t.constant(Array(2, 2, {1, 2, 3, 4})), t.constant(Array(2, 1, {5, 6})));
  EXPECT_EQ(m.value(), Array(2, 1, {17, 39}));
}

TEST(Ops, LinearAndSigmoidGradients) {
  Tape t;
  const Value w = t.leaf(Array::column({0.3, -0.7}));
  const Value loss = dot(w, t.constant(Array::column({1.0, 2.0})));
  t.backward(loss);
  EXPECT_EQ(w.grad(), Array::column({1.0, 2.0}));

  Tape t2;
  const Value x = t2.leaf(Array::scalar(0.0));
  t2.backward(sigmoid(x));
  EXPECT_DOUBLE_EQ(x.grad()[0], 0.25);
}

TEST(Ops, ShapeMismatchNamesTheOp) {
  Tape t;
  const Value a = t.constant(Array(2, 3));
  const Value b = t.constant(Array(2, 3));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("matmul"), std::string::npos);
    EXPECT_NE(msg.find("2x3"), std::string::npos);
  }
  EXPECT_THROW(add(a, t.constant(Array(3, 2))), ShapeError);
}

TEST(Ops, NonFiniteResultIsAnError) {
  Tape t;
  const Value big = t.constant(Array::scalar(1e308));
  EXPECT_THROW(scale(big, 10.0), NumericError);
  EXPECT_THROW(t.leaf(Array::scalar(std::numeric_limits<double>::infinity())), NumericError);
}

TEST(Ops, BackwardNeedsScalar) {
  Tape t;
  const Value v = t.leaf(Array::column({1.0, 2.0}));
  EXPECT_THROW(t.backward(v), ShapeError);
}

TEST(Ops, SegmentSoftmaxSumsToOne) {
  std::mt19937_64 rng(1);
  Tape t;
  const auto ids = make_indices({0, 0, 0, 2, 2, 3, 4, 4, 4, 4});
  const Value s = t.constant(random_array(10, 1, rng, -30.0, 30.0));
  const Value y = segment_softmax(s, ids, 5);
  double sums[5] = {};
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_GE(y.value()[i], 0.0);
    sums[(*ids)[i]] += y.value()[i];
  }
  for (const std::size_t seg : {0, 2, 3, 4}) EXPECT_NEAR(sums[seg], 1.0, 1e-12);
}

TEST(Ops, SegmentIdsMustBeSorted) {
  Tape t;
  EXPECT_THROW(segment_softmax(t.constant(Array(3, 1)), make_indices({1, 0, 1}), 2), std::invalid_argument);
  EXPECT_THROW(segment_softmax(t.constant(Array(2, 1)), make_indices({0, 5}), 2), ShapeError);
}

TEST(Ops, EveryPrimitiveMatchesFiniteDifferences) {
  std::mt19937_64 rng(42);
  const Array a = random_array(3, 4, rng), b = random_array(4, 2, rng), c = random_array(3, 4, rng);
  const Array col = random_array(6, 1, rng), s = Array::scalar(0.8);

  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, matmul(p[0], p[1]), 1); }, {a, b});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, transpose(p[0]), 2); }, {a});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, add(p[0], p[1]), 3); }, {a, c});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, sub(p[0], p[1]), 4); }, {a, c});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, hadamard(p[0], p[1]), 5); }, {a, c});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, scale(p[0], 1.7), 6); }, {a});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, scale(p[0], p[1]), 7); }, {a, s});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, affine(p[0], -1.0, 1.0), 8); }, {a});
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) { return project(t, concat_rows({p[0], p[1]}), 9); }, {a, c});
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) { return project(t, concat_cols({p[0], p[1]}), 10); }, {a, c});
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) {
        return project(t, gather_rows(p[0], make_indices({2, 0, 2, 1})), 11);
      },
      {a});
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) {
        return project(t, segment_softmax(p[0], make_indices({0, 0, 1, 1, 1, 3}), 4), 12);
      },
      {col});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, softmax(p[0]), 13); }, {col});
  const Array vals = random_array(6, 3, rng);
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) {
        return project(t, segment_weighted_sum(p[0], p[1], make_indices({0, 0, 2, 2, 2, 3}), 4), 14);
      },
      {vals, col});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, sigmoid(p[0]), 15); }, {a});
  const Array pos = random_array(3, 4, rng, 0.1, 0.9);
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) { return project(t, log_clamped(p[0], 1e-12, 1.0), 16); }, {pos});
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) { return project(t, mean_of({p[0], p[1], p[0]}), 17); }, {a, c});
  expect_grads_match([](Tape&, std::span<const Value> p) { return dot(p[0], p[1]); }, {a, c});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, sum(p[0]), 18); }, {a});
}

TEST(Ops, LeakyReluAwayFromKink) {
  // Entries bounded away from 0 so both sides of the kink are exercised.
  Array a(2, 3, {-1.5, -0.4, 0.3, 1.1, -0.9, 1.9});
  expect_grads_match([](Tape& t, std::span<const Value> p) { return project(t, leaky_relu(p[0]), 19); }, {a});
}

TEST(Ops, RandomCompositeMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  const Array w = random_array(3, 3, rng), x = random_array(3, 1, rng);
  expect_grads_match(
      [](Tape& t, std::span<const Value> p) {
        return project(t, sigmoid(add(matmul(p[0], p[1]), scale(p[1], 0.5))), 20);
      },
      {w, x});
}

TEST(Backward, FanOutAccumulatesLikeDuplicatedGraph) {
  const Array xv = Array::column({0.4, -1.2, 0.9});
  // Shared: one leaf used three times.
  Tape t1;
  const Value x = t1.leaf(xv);
  const Value y = add(hadamard(x, x), sigmoid(x));
  t1.backward(sum(y));
  // Duplicated: three independent leaves holding the same value.
  Tape t2;
  const Value a = t2.leaf(xv), b = t2.leaf(xv), c = t2.leaf(xv);
  t2.backward(sum(add(hadamard(a, b), sigmoid(c))));
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_DOUBLE_EQ(x.grad()[i], a.grad()[i] + b.grad()[i] + c.grad()[i]);
  }
}

TEST(Backward, RepeatedBackwardDoesNotAccumulateAcrossCalls) {
  Tape t;
  const Value w = t.leaf(Array::column({1.0, 2.0}));
  const Value loss = dot(w, w);
  t.backward(loss);
  const Array first = w.grad();
  t.backward(loss);
  EXPECT_EQ(w.grad(), first);
}

TEST(Tape, RewindDropsLaterNodes) {
  Tape t;
  const Value w = t.leaf(Array::scalar(2.0));
  const std::size_t mark = t.size();
  scale(w, 3.0);
  EXPECT_GT(t.size(), mark);
  t.rewind(mark);
  EXPECT_EQ(t.size(), mark);
  EXPECT_FALSE(t.used(w));
}

TEST(GradCheck, QuadraticIsExact) {
  const Array w = Array::column({0.5, -1.0, 2.0});
  const auto report = grad_check([](Tape&, std::span<const Value> p) { return dot(p[0], p[0]); }, {&w, 1});
  EXPECT_TRUE(report.passed());
  EXPECT_LT(report.max_relative_error(), 1e-8);
}

TEST(GradCheck, WrongGradientIsReported) {
  // x * stop_gradient(x) hides one path from the reverse sweep.
  const Array w = Array::column({0.5, -1.0, 2.0});
  const auto report = grad_check(
      [](Tape& t, std::span<const Value> p) { return dot(p[0], t.constant(p[0].value())); }, {&w, 1});
  EXPECT_FALSE(report.passed());
}

TEST(GradCheck, KinkIsFlaggedNotFailed) {
  const Array w = Array::column({0.0, 1.0});
  const auto report =
      grad_check([](Tape& t, std::span<const Value> p) { return sum(leaky_relu(p[0])); }, {&w, 1});
  ASSERT_EQ(report.params.size(), 1u);
  EXPECT_EQ(report.params[0].near_kink, std::vector<std::size_t>{0});
  EXPECT_TRUE(report.passed());
}
