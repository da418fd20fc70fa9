// Central-difference gradient oracle: (f(x+h*e) - f(x-h*e)) / (2h) per
// coordinate. Evaluates the function 2*numel times, so keep inputs small.
// Deliberately knows nothing about the tape; it only calls the function.

#pragma once

#include "recomp/tensor.hpp"

namespace recomp {

template <typename F>
Tensor<double> finite_diff_grad(F&& f, const Tensor<double>& x, double h = 1e-5) {
  Tensor<double> grad(x.shape);
  Tensor<double> probe = x;
  for (size_t i = 0; i < x.data.size(); ++i) {
    const double orig = probe.data[i];
    probe.data[i] = orig + h;
    const double fp = f(probe);
    probe.data[i] = orig - h;
    const double fm = f(probe);
    probe.data[i] = orig;
    grad.data[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Max over coordinates of |a-b| / max(1, |a|, |b|).
inline double max_rel_err(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    double denom = std::max({1.0, std::abs(a.data[i]), std::abs(b.data[i])});
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / denom);
  }
  return worst;
}

}  // namespace recomp
