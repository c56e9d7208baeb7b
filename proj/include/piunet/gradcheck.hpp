#pragma once

// Reverse-mode vs central finite-difference gradient verification.

#include <functional>

#include "piunet/tensor.hpp"

namespace piunet {

struct GradCheckReport {
  std::vector<double> max_rel_error;  // one entry per input
  double tolerance = 0.0;
  bool passed = false;

  double worst() const {
    double w = 0.0;
    for (double e : max_rel_error) w = std::max(w, e);
    return w;
  }
};

struct GradCheckOptions {
  /// Finite-difference step is step_scale * max(1, |x_i|). 0 picks 1e-2 (float) / 1e-4 (double).
  double step_scale = 0.0;
  /// Pass threshold. 0 picks 1e-3 (float) / 1e-6 (double).
  double tolerance = 0.0;
  /// Normwise: max_i |a_i - n_i| / max(max_i |a_i|, floor) per input.
  /// Elementwise: max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
  bool normwise = true;
  double floor = 1e-4;
  /// 4-point central stencil (h^4 truncation) instead of the 2-point one.
  bool four_point = true;
  /// Times the step may shrink by 10x when the h and h/2 estimates disagree; 0 disables the test.
  int refinements = 3;
  std::int64_t max_elements = 10000;
};

/// `f` maps the inputs to a scalar. Inputs must be leaves; they are perturbed
/// in place and restored.
template <typename T>
GradCheckReport check_gradients(const std::function<Tensor<T>(const std::vector<Tensor<T>>&)>& f,
                                std::vector<Tensor<T>> inputs, GradCheckOptions opt = {}) {
  constexpr bool is_double = sizeof(T) >= 8;
  const double h_scale = opt.step_scale > 0 ? opt.step_scale : (is_double ? 1e-4 : 1e-2);
  GradCheckReport report;
  report.tolerance = opt.tolerance > 0 ? opt.tolerance : (is_double ? 1e-6 : 1e-3);

  std::int64_t total = 0;
  for (auto& in : inputs) {
    total += in.numel();
    in.set_requires_grad(true);
    in.zero_grad();
  }
  if (total > opt.max_elements) throw Error("check_gradients: inputs too large for finite differences");

  Tensor<T> out = f(inputs);
  if (out.numel() != 1 || out.rank() != 0) {
    throw ShapeError("check_gradients: function must return a scalar, got " + shape_str(out.shape()));
  }
  out.backward();

  for (auto& in : inputs) {
    const std::vector<T> analytic = in.grad();
    auto vals = in.mutable_values();
    double scale = 0.0;
    for (T g : analytic) scale = std::max(scale, std::abs(static_cast<double>(g)));
    // estimates at h and h/2 must agree this well, otherwise a kink lies
    // inside the stencil and the step shrinks
    const double consistency = 0.5 * report.tolerance * std::max(scale, opt.floor);
    double worst = 0.0, diff = 0.0;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      const auto eval = [&](T at) {
        NoGradGuard ng;
        vals[i] = at;
        return static_cast<double>(f(inputs).item());
      };
      const auto central = [&](double step) {
        const T h = static_cast<T>(step * std::max<double>(1.0, std::abs(static_cast<double>(orig))));
        // divide by the step actually realized in T arithmetic
        const double realized = static_cast<double>((orig + h) - (orig - h)) / 2;
        const double d1 = eval(orig + h) - eval(orig - h);
        if (!opt.four_point) return d1 / (2 * realized);
        const double d2 = eval(orig + h + h) - eval(orig - h - h);
        return (8 * d1 - d2) / (12 * realized);
      };
      double step = h_scale;
      double numeric = central(step);
      for (int k = 0; k < opt.refinements; ++k) {
        if (std::abs(numeric - central(step / 2)) <= consistency) break;
        step /= 10;
        numeric = central(step);
      }
      vals[i] = orig;
      const double a = static_cast<double>(analytic[i]);
      const double err = std::abs(a - numeric);
      diff = std::max(diff, err);
      worst = std::max(worst, err / std::max({std::abs(a), std::abs(numeric), opt.floor}));
    }
    if (opt.normwise) worst = diff / std::max(scale, opt.floor);
    report.max_rel_error.push_back(worst);
  }
  report.passed = report.worst() <= report.tolerance;
  return report;
}

}  // namespace piunet
