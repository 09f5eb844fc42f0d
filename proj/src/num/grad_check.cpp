#include "causalrec/num/grad_check.h"

#include <algorithm>
#include <cmath>

namespace causalrec::num {

namespace {

constexpr double kKinkJump = 0.1;

double evaluate(const ScalarFunction& f, const std::vector<Array>& params) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const auto& p : params) leaves.push_back(tape.constant(p));
  const Value out = f(tape, leaves);
  if (out.value().size() != 1) throw ShapeError("grad_check: function must return a scalar");
  return out.value()[0];
}

}  // namespace

bool GradCheckReport::passed() const {
  return std::all_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.passed; });
}

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& p : params) worst = std::max(worst, p.max_relative_error);
  return worst;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(const ScalarFunction& f, std::span<const Array> params,
                           std::span<const std::string> names, const GradCheckOptions& options) {
  std::vector<Array> analytic;
  {
    Tape tape;
    std::vector<Value> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p));
    const Value out = f(tape, leaves);
    tape.backward(out);
    for (const auto& l : leaves) analytic.push_back(l.grad());
  }

  std::vector<Array> work(params.begin(), params.end());
  const double h = options.step;
  GradCheckReport report;
  for (std::size_t p = 0; p < work.size(); ++p) {
    ParamCheck check;
    check.name = p < names.size() ? names[p] : "param" + std::to_string(p);
    for (std::size_t i = 0; i < work[p].size(); ++i) {
      const double original = work[p][i];
      work[p][i] = original + h;
      const double up = evaluate(f, work);
      work[p][i] = original - h;
      const double down = evaluate(f, work);
      work[p][i] = original;
      const double centre = evaluate(f, work);

      const double numeric = (up - down) / (2.0 * h);
      const double forward = (up - centre) / h;
      const double backward = (centre - down) / h;
      ++check.checked;
      // A kink inside [x-h, x+h] shows up as a jump between one-sided slopes
      // far larger than their O(h) curvature difference.
      if (relative_error(forward, backward, options.scale_floor) > kKinkJump) {
        check.near_kink.push_back(i);
        continue;
      }
      const double err = relative_error(analytic[p][i], numeric, options.scale_floor);
      if (err > check.max_relative_error) {
        check.max_relative_error = err;
        check.worst_index = i;
      }
    }
    check.passed = check.max_relative_error < options.tolerance;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace causalrec::num
