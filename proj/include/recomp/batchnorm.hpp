// Per-channel batch normalization over (N,H,W) in NHWC layout.
// Train mode normalizes with batch statistics and folds them into the
// running averages; eval mode is a fixed affine map from the running stats.

#pragma once

#include <cmath>
#include <vector>

#include "recomp/tape.hpp"

namespace recomp {

enum class BnMode { Train, Eval };

template <typename T>
struct BatchNormState {
  int64_t channels = 0;
  T momentum = T(0.9);
  T eps = T(1e-5);
  bool initialized = false;  // running stats valid for eval
  std::vector<T> running_mean, running_var;

  static BatchNormState make(int64_t c, T momentum = T(0.9), T eps = T(1e-5)) {
    BatchNormState s;
    s.channels = c;
    s.momentum = momentum;
    s.eps = eps;
    s.running_mean.assign(size_t(c), T(0));
    s.running_var.assign(size_t(c), T(0));
    return s;
  }

  // Identity stats (mean 0, var 1), marked initialized. Models call this at
  // construction so an untrained checkpoint can still run eval passes.
  void init_identity() {
    running_mean.assign(size_t(channels), T(0));
    running_var.assign(size_t(channels), T(1));
    initialized = true;
  }
};

template <typename T>
Var batch_norm(Tape<T>& t, Var x, Var gamma, Var beta, BatchNormState<T>& state, BnMode mode) {
  const Shape& xs = t.shape(x);
  if (xs.size() != 4)
    throw Error(ErrorKind::Dimension, "batch_norm: input must be rank 4, got " + shape_str(xs));
  const int64_t c = xs[3];
  if (c != state.channels || t.shape(gamma) != Shape{c} || t.shape(beta) != Shape{c})
    throw Error(ErrorKind::Dimension, "batch_norm: channel mismatch for input " + shape_str(xs));
  const int64_t m = xs[0] * xs[1] * xs[2];

  const auto xv = t.value(x);
  const auto gv = t.value(gamma);
  const auto bv = t.value(beta);

  std::vector<T> mean(size_t(c), T(0));
  std::vector<T> inv_std(size_t(c), T(0));
  if (mode == BnMode::Train) {
    if (m < 2)
      throw Error(ErrorKind::Contract,
                  "batch_norm: train mode needs N*H*W >= 2, got " + std::to_string(m));
    std::vector<double> acc(size_t(c), 0.0);
    for (int64_t r = 0; r < m; ++r)
      for (int64_t ch = 0; ch < c; ++ch) acc[size_t(ch)] += double(xv[size_t(r * c + ch)]);
    for (int64_t ch = 0; ch < c; ++ch) mean[size_t(ch)] = T(acc[size_t(ch)] / double(m));
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int64_t r = 0; r < m; ++r)
      for (int64_t ch = 0; ch < c; ++ch) {
        double d = double(xv[size_t(r * c + ch)]) - double(mean[size_t(ch)]);
        acc[size_t(ch)] += d * d;
      }
    for (int64_t ch = 0; ch < c; ++ch) {
      T var = T(acc[size_t(ch)] / double(m));
      inv_std[size_t(ch)] = T(1) / std::sqrt(var + state.eps);
      state.running_mean[size_t(ch)] =
          state.momentum * state.running_mean[size_t(ch)] + (T(1) - state.momentum) * mean[size_t(ch)];
      state.running_var[size_t(ch)] =
          state.momentum * state.running_var[size_t(ch)] + (T(1) - state.momentum) * var;
    }
    state.initialized = true;
  } else {
    if (!state.initialized)
      throw Error(ErrorKind::Contract,
                  "batch_norm: eval mode before any train step (running stats uninitialized)");
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[size_t(ch)] = state.running_mean[size_t(ch)];
      inv_std[size_t(ch)] = T(1) / std::sqrt(state.running_var[size_t(ch)] + state.eps);
    }
  }

  std::vector<T> out(xv.size());
  for (int64_t r = 0; r < m; ++r)
    for (int64_t ch = 0; ch < c; ++ch) {
      size_t i = size_t(r * c + ch);
      out[i] = gv[size_t(ch)] * (xv[i] - mean[size_t(ch)]) * inv_std[size_t(ch)] + bv[size_t(ch)];
    }

  bool rg = t.node(x).requires_grad || t.node(gamma).requires_grad || t.node(beta).requires_grad;
  Shape shape = xs;
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, gamma, beta, y, mean, inv_std, m, c, mode](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      const auto xv2 = tp.value(x);
      const auto gv2 = tp.value(gamma);
      // Per-channel sums of dy and dy*xhat, shared by all three gradients.
      std::vector<double> sum_dy(size_t(c), 0.0), sum_dy_xhat(size_t(c), 0.0);
      for (int64_t r = 0; r < m; ++r)
        for (int64_t ch = 0; ch < c; ++ch) {
          size_t i = size_t(r * c + ch);
          double xhat = (double(xv2[i]) - double(mean[size_t(ch)])) * double(inv_std[size_t(ch)]);
          sum_dy[size_t(ch)] += double(g[i]);
          sum_dy_xhat[size_t(ch)] += double(g[i]) * xhat;
        }
      if (tp.node(gamma).requires_grad) {
        auto& gg = tp.grad_buffer(gamma);
        for (int64_t ch = 0; ch < c; ++ch) gg[size_t(ch)] += T(sum_dy_xhat[size_t(ch)]);
      }
      if (tp.node(beta).requires_grad) {
        auto& gb = tp.grad_buffer(beta);
        for (int64_t ch = 0; ch < c; ++ch) gb[size_t(ch)] += T(sum_dy[size_t(ch)]);
      }
      if (tp.node(x).requires_grad) {
        auto& gx = tp.grad_buffer(x);
        if (mode == BnMode::Train) {
          for (int64_t r = 0; r < m; ++r)
            for (int64_t ch = 0; ch < c; ++ch) {
              size_t i = size_t(r * c + ch);
              double xhat =
                  (double(xv2[i]) - double(mean[size_t(ch)])) * double(inv_std[size_t(ch)]);
              double dy = double(g[i]);
              double dx = double(gv2[size_t(ch)]) * double(inv_std[size_t(ch)]) *
                          (dy - sum_dy[size_t(ch)] / double(m) -
                           xhat * sum_dy_xhat[size_t(ch)] / double(m));
              gx[i] += T(dx);
            }
        } else {
          for (int64_t r = 0; r < m; ++r)
            for (int64_t ch = 0; ch < c; ++ch) {
              size_t i = size_t(r * c + ch);
              gx[i] += T(double(g[i]) * double(gv2[size_t(ch)]) * double(inv_std[size_t(ch)]));
            }
        }
      }
    };
  }
  return y;
}

}  // namespace recomp
