// Bias-corrected Adam. Defaults are the training settings used throughout:
// alpha=0.0002, beta1=0.9, beta2=0.999, eps=1e-8.

#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "recomp/error.hpp"

namespace recomp {

struct AdamConfig {
  double alpha = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<T> m, v;
  int64_t t = 0;

  static AdamState make(size_t n) {
    AdamState s;
    s.m.assign(n, T(0));
    s.v.assign(n, T(0));
    return s;
  }
};

template <typename T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState<T>& state,
               const AdamConfig& cfg) {
  if (param.size() != grad.size() || param.size() != state.m.size() ||
      param.size() != state.v.size())
    throw Error(ErrorKind::Dimension, "adam_step: parameter/gradient/state sizes disagree");
  for (T g : grad)
    if (!std::isfinite(double(g)))
      throw Error(ErrorKind::NonFinite, "adam_step: non-finite gradient");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.t));
  for (size_t i = 0; i < param.size(); ++i) {
    double g = double(grad[i]);
    double m = cfg.beta1 * double(state.m[i]) + (1.0 - cfg.beta1) * g;
    double v = cfg.beta2 * double(state.v[i]) + (1.0 - cfg.beta2) * g * g;
    state.m[i] = T(m);
    state.v[i] = T(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    param[i] = T(double(param[i]) - cfg.alpha * mhat / (std::sqrt(vhat) + cfg.eps));
  }
}

}  // namespace recomp
