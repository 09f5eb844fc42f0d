#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "causalrec/num/autodiff.h"

namespace causalrec::num {

// Builds a scalar from leaves bound to the given parameter values.
using ScalarFunction = std::function<Value(Tape&, std::span<const Value>)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor for the relative error, absorbing finite-difference
  // roundoff on near-zero gradients.
  double scale_floor = 1e-5;
};

struct ParamCheck {
  std::string name;
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  // Entries whose one-sided differences disagree (non-differentiable point
  // within one step); excluded from max_relative_error.
  std::vector<std::size_t> near_kink;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  bool passed() const;
  double max_relative_error() const;
};

double relative_error(double analytic, double numeric, double floor);

// Compares reverse-mode gradients of `f` with central differences for every
// entry of every parameter.
GradCheckReport grad_check(const ScalarFunction& f, std::span<const Array> params,
                           std::span<const std::string> names = {},
                           const GradCheckOptions& options = {});

}  // namespace causalrec::num
