// Differentiable ops on the tape: elementwise kernels, broadcasts, matmul,
// embedding gather/scatter, reductions, and the two losses. Reductions
// accumulate in double regardless of the element type; iteration order is
// fixed so results are deterministic.

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "recomp/tape.hpp"

namespace recomp {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;

namespace detail {

template <typename T>
void require_same_shape(const Tape<T>& t, Var a, Var b, const char* op) {
  if (t.shape(a) != t.shape(b))
    throw Error(ErrorKind::Dimension, std::string(op) + ": shapes " + shape_str(t.shape(a)) +
                                          " and " + shape_str(t.shape(b)) + " differ");
}

template <typename T>
inline T stable_sigmoid(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace detail

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  detail::require_same_shape(t, a, b, "add");
  const auto av = t.value(a);
  const auto bv = t.value(b);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  bool rg = t.node(a).requires_grad || t.node(b).requires_grad;
  Shape shape = t.shape(a);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [a, b, y](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      for (Var in : {a, b}) {
        if (!tp.node(in).requires_grad) continue;
        auto& gi = tp.grad_buffer(in);
        for (size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    };
  }
  return y;
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  detail::require_same_shape(t, a, b, "sub");
  const auto av = t.value(a);
  const auto bv = t.value(b);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  bool rg = t.node(a).requires_grad || t.node(b).requires_grad;
  Shape shape = t.shape(a);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [a, b, y](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      if (tp.node(a).requires_grad) {
        auto& ga = tp.grad_buffer(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (tp.node(b).requires_grad) {
        auto& gb = tp.grad_buffer(b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return y;
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  detail::require_same_shape(t, a, b, "mul");
  const auto av = t.value(a);
  const auto bv = t.value(b);
  std::vector<T> out(av.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  bool rg = t.node(a).requires_grad || t.node(b).requires_grad;
  Shape shape = t.shape(a);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [a, b, y](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      const auto av2 = tp.value(a);
      const auto bv2 = tp.value(b);
      if (tp.node(a).requires_grad) {
        auto& ga = tp.grad_buffer(a);
        for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
      }
      if (tp.node(b).requires_grad) {
        auto& gb = tp.grad_buffer(b);
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
      }
    };
  }
  return y;
}

template <typename T>
Var scale(Tape<T>& t, Var x, double c) {
  const auto xv = t.value(x);
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = T(double(xv[i]) * c);
  bool rg = t.node(x).requires_grad;
  Shape shape = t.shape(x);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, y, c](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      auto& gx = tp.grad_buffer(x);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += T(double(g[i]) * c);
    };
  }
  return y;
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  const auto xv = t.value(x);
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  bool rg = t.node(x).requires_grad;
  Shape shape = t.shape(x);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, y](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      const auto xv2 = tp.value(x);
      auto& gx = tp.grad_buffer(x);
      for (size_t i = 0; i < g.size(); ++i)
        if (xv2[i] > T(0)) gx[i] += g[i];
    };
  }
  return y;
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
  const auto xv = t.value(x);
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = detail::stable_sigmoid(xv[i]);
  bool rg = t.node(x).requires_grad;
  Shape shape = t.shape(x);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, y](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      const auto yv = tp.value(y);
      auto& gx = tp.grad_buffer(x);
      for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * yv[i] * (T(1) - yv[i]);
    };
  }
  return y;
}

// Gradient passes only strictly inside [lo,hi].
template <typename T>
Var clamp(Tape<T>& t, Var x, double lo, double hi) {
  const auto xv = t.value(x);
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(T(hi), std::max(T(lo), xv[i]));
  bool rg = t.node(x).requires_grad;
  Shape shape = t.shape(x);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, y, lo, hi](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      const auto xv2 = tp.value(x);
      auto& gx = tp.grad_buffer(x);
      for (size_t i = 0; i < g.size(); ++i)
        if (double(xv2[i]) > lo && double(xv2[i]) < hi) gx[i] += g[i];
    };
  }
  return y;
}

// tanh(pre_f) * sigmoid(pre_g), elementwise.
template <typename T>
Var gated_unit(Tape<T>& t, Var pre_f, Var pre_g) {
  detail::require_same_shape(t, pre_f, pre_g, "gated_unit");
  const auto fv = t.value(pre_f);
  const auto gv = t.value(pre_g);
  std::vector<T> out(fv.size());
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = std::tanh(fv[i]) * detail::stable_sigmoid(gv[i]);
  bool rg = t.node(pre_f).requires_grad || t.node(pre_g).requires_grad;
  Shape shape = t.shape(pre_f);
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [pre_f, pre_g, y](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      const auto fv2 = tp.value(pre_f);
      const auto gv2 = tp.value(pre_g);
      const bool need_f = tp.node(pre_f).requires_grad;
      const bool need_g = tp.node(pre_g).requires_grad;
      for (size_t i = 0; i < g.size(); ++i) {
        T th = std::tanh(fv2[i]);
        T sg = detail::stable_sigmoid(gv2[i]);
        if (need_f) tp.grad_buffer(pre_f)[i] += g[i] * sg * (T(1) - th * th);
        if (need_g) tp.grad_buffer(pre_g)[i] += g[i] * th * sg * (T(1) - sg);
      }
    };
  }
  return y;
}

// x (..., C) + bias (C), broadcast over leading dims.
template <typename T>
Var add_bias(Tape<T>& t, Var x, Var bias) {
  const Shape& xs = t.shape(x);
  const Shape& bs = t.shape(bias);
  if (bs.size() != 1 || bs[0] != xs.back())
    throw Error(ErrorKind::Dimension, "add_bias: bias " + shape_str(bs) +
                                          " does not match last dim of " + shape_str(xs));
  const auto xv = t.value(x);
  const auto bv = t.value(bias);
  const int64_t c = bs[0];
  std::vector<T> out(xv.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + bv[i % size_t(c)];
  bool rg = t.node(x).requires_grad || t.node(bias).requires_grad;
  Shape shape = xs;
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, bias, y, c](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      if (tp.node(x).requires_grad) {
        auto& gx = tp.grad_buffer(x);
        for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (tp.node(bias).requires_grad) {
        auto& gb = tp.grad_buffer(bias);
        for (size_t i = 0; i < g.size(); ++i) gb[i % size_t(c)] += g[i];
      }
    };
  }
  return y;
}

// x (N, ..., C) + v (N, C), v broadcast over the middle dims.
template <typename T>
Var add_broadcast_vec(Tape<T>& t, Var x, Var v) {
  const Shape& xs = t.shape(x);
  const Shape& vs = t.shape(v);
  if (xs.size() < 2 || vs.size() != 2 || vs[0] != xs.front() || vs[1] != xs.back())
    throw Error(ErrorKind::Dimension, "add_broadcast_vec: incompatible shapes " + shape_str(xs) +
                                          " and " + shape_str(vs));
  const int64_t n = xs.front(), c = xs.back();
  const int64_t mid = numel(xs) / (n * c);
  const auto xv = t.value(x);
  const auto vv = t.value(v);
  std::vector<T> out(xv.size());
  size_t i = 0;
  for (int64_t b = 0; b < n; ++b)
    for (int64_t m = 0; m < mid; ++m)
      for (int64_t ch = 0; ch < c; ++ch, ++i) out[i] = xv[i] + vv[size_t(b * c + ch)];
  bool rg = t.node(x).requires_grad || t.node(v).requires_grad;
  Shape shape = xs;
  Var y = t.emplace(std::move(shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, v, y, n, mid, c](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      if (tp.node(x).requires_grad) {
        auto& gx = tp.grad_buffer(x);
        for (size_t k = 0; k < g.size(); ++k) gx[k] += g[k];
      }
      if (tp.node(v).requires_grad) {
        auto& gv = tp.grad_buffer(v);
        size_t k = 0;
        for (int64_t b = 0; b < n; ++b)
          for (int64_t m = 0; m < mid; ++m)
            for (int64_t ch = 0; ch < c; ++ch, ++k) gv[size_t(b * c + ch)] += g[k];
      }
    };
  }
  return y;
}

// (n,k) x (k,m) -> (n,m)
template <typename T>
Var matmul(Tape<T>& t, Var a, Var b) {
  const Shape& as = t.shape(a);
  const Shape& bs = t.shape(b);
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0])
    throw Error(ErrorKind::Dimension,
                "matmul: shapes " + shape_str(as) + " and " + shape_str(bs) + " incompatible");
  const int64_t n = as[0], k = as[1], m = bs[1];
  std::vector<T> out(size_t(n * m));
  {
    ConstMatMap<T> A(t.value(a).data(), n, k);
    ConstMatMap<T> B(t.value(b).data(), k, m);
    MatMap<T> C(out.data(), n, m);
    C.noalias() = A * B;
  }
  bool rg = t.node(a).requires_grad || t.node(b).requires_grad;
  Var y = t.emplace({n, m}, std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [a, b, y, n, k, m](Tape<T>& tp) {
      ConstMatMap<T> G(tp.node(y).grad.data(), n, m);
      if (tp.node(a).requires_grad) {
        ConstMatMap<T> B(tp.value(b).data(), k, m);
        MatMap<T> GA(tp.grad_buffer(a).data(), n, k);
        GA.noalias() += G * B.transpose();
      }
      if (tp.node(b).requires_grad) {
        ConstMatMap<T> A(tp.value(a).data(), n, k);
        MatMap<T> GB(tp.grad_buffer(b).data(), k, m);
        GB.noalias() += A.transpose() * G;
      }
    };
  }
  return y;
}

// Gather rows of table (K,D) by id; output shape = leading + {D}. An id of -1
// yields a zero row and routes no gradient (used for "no spatial map").
template <typename T>
Var embedding(Tape<T>& t, Var table, const std::vector<int64_t>& ids, Shape leading) {
  const Shape& ts = t.shape(table);
  if (ts.size() != 2)
    throw Error(ErrorKind::Dimension, "embedding: table must be rank 2, got " + shape_str(ts));
  const int64_t k = ts[0], d = ts[1];
  if (numel(leading) != int64_t(ids.size()))
    throw Error(ErrorKind::Dimension, "embedding: leading shape " + shape_str(leading) +
                                          " does not match " + std::to_string(ids.size()) +
                                          " ids");
  for (int64_t id : ids)
    if (id < -1 || id >= k)
      throw Error(ErrorKind::Index, "embedding: id " + std::to_string(id) +
                                        " out of range [0," + std::to_string(k) + ")");
  const auto tv = t.value(table);
  std::vector<T> out(ids.size() * size_t(d), T(0));
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0) continue;
    const T* src = tv.data() + size_t(ids[i]) * size_t(d);
    std::copy(src, src + d, out.data() + i * size_t(d));
  }
  Shape out_shape = leading;
  out_shape.push_back(d);
  bool rg = t.node(table).requires_grad;
  Var y = t.emplace(std::move(out_shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [table, y, ids, d](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      auto& gt = tp.grad_buffer(table);
      for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0) continue;
        T* dst = gt.data() + size_t(ids[i]) * size_t(d);
        const T* src = g.data() + i * size_t(d);
        for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    };
  }
  return y;
}

// Slice [from,to) of the last axis.
template <typename T>
Var slice_last(Tape<T>& t, Var x, int64_t from, int64_t to) {
  const Shape& xs = t.shape(x);
  const int64_t c = xs.back();
  if (from < 0 || to > c || from >= to)
    throw Error(ErrorKind::Dimension, "slice_last: range [" + std::to_string(from) + "," +
                                          std::to_string(to) + ") invalid for last dim " +
                                          std::to_string(c));
  const int64_t rows = numel(xs) / c, w = to - from;
  const auto xv = t.value(x);
  std::vector<T> out(size_t(rows * w));
  for (int64_t r = 0; r < rows; ++r)
    std::copy(xv.data() + r * c + from, xv.data() + r * c + to, out.data() + r * w);
  Shape out_shape = xs;
  out_shape.back() = w;
  bool rg = t.node(x).requires_grad;
  Var y = t.emplace(std::move(out_shape), std::move(out), rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, y, rows, c, from, w](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      auto& gx = tp.grad_buffer(x);
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t j = 0; j < w; ++j) gx[size_t(r * c + from + j)] += g[size_t(r * w + j)];
    };
  }
  return y;
}

// Concatenate along the last axis; all leading dims must agree.
template <typename T>
Var concat_last(Tape<T>& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorKind::Contract, "concat_last: no inputs");
  Shape lead = t.shape(parts[0]);
  lead.pop_back();
  int64_t total = 0;
  bool rg = false;
  for (Var p : parts) {
    Shape l = t.shape(p);
    int64_t c = l.back();
    l.pop_back();
    if (l != lead)
      throw Error(ErrorKind::Dimension, "concat_last: leading dims differ: " +
                                            shape_str(t.shape(parts[0])) + " vs " +
                                            shape_str(t.shape(p)));
    total += c;
    rg = rg || t.node(p).requires_grad;
  }
  const int64_t rows = numel(lead);
  std::vector<T> out(size_t(rows * total));
  std::vector<int64_t> widths, offsets;
  {
    int64_t off = 0;
    for (Var p : parts) {
      const int64_t c = t.shape(p).back();
      const auto pv = t.value(p);
      for (int64_t r = 0; r < rows; ++r)
        std::copy(pv.data() + r * c, pv.data() + (r + 1) * c, out.data() + r * total + off);
      widths.push_back(c);
      offsets.push_back(off);
      off += c;
    }
  }
  Shape out_shape = lead;
  out_shape.push_back(total);
  Var y = t.emplace(std::move(out_shape), std::move(out), rg);
  if (t.recording() && rg) {
    std::vector<Var> ps = parts;
    t.node(y).backward = [ps, y, rows, total, widths, offsets](Tape<T>& tp) {
      const auto& g = tp.node(y).grad;
      for (size_t pi = 0; pi < ps.size(); ++pi) {
        if (!tp.node(ps[pi]).requires_grad) continue;
        auto& gp = tp.grad_buffer(ps[pi]);
        const int64_t c = widths[pi], off = offsets[pi];
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t j = 0; j < c; ++j) gp[size_t(r * c + j)] += g[size_t(r * total + off + j)];
      }
    };
  }
  return y;
}

template <typename T>
Var sum_all(Tape<T>& t, Var x) {
  const auto xv = t.value(x);
  double acc = 0;
  for (T v : xv) acc += double(v);
  bool rg = t.node(x).requires_grad;
  Var y = t.emplace({1}, {T(acc)}, rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, y](Tape<T>& tp) {
      const T g = tp.node(y).grad[0];
      auto& gx = tp.grad_buffer(x);
      for (auto& v : gx) v += g;
    };
  }
  return y;
}

template <typename T>
Var mean_all(Tape<T>& t, Var x) {
  const auto xv = t.value(x);
  double acc = 0;
  for (T v : xv) acc += double(v);
  const double n = double(xv.size());
  bool rg = t.node(x).requires_grad;
  Var y = t.emplace({1}, {T(acc / n)}, rg);
  if (t.recording() && rg) {
    t.node(y).backward = [x, y, n](Tape<T>& tp) {
      const double g = double(tp.node(y).grad[0]) / n;
      auto& gx = tp.grad_buffer(x);
      for (auto& v : gx) v += T(g);
    };
  }
  return y;
}

// mean((a-b)^2) over all elements.
template <typename T>
Var mean_squared_error(Tape<T>& t, Var a, Var b) {
  detail::require_same_shape(t, a, b, "mean_squared_error");
  const auto av = t.value(a);
  const auto bv = t.value(b);
  double acc = 0;
  for (size_t i = 0; i < av.size(); ++i) {
    double d = double(av[i]) - double(bv[i]);
    acc += d * d;
  }
  const double n = double(av.size());
  bool rg = t.node(a).requires_grad || t.node(b).requires_grad;
  Var y = t.emplace({1}, {T(acc / n)}, rg);
  if (t.recording() && rg) {
    t.node(y).backward = [a, b, y, n](Tape<T>& tp) {
      const double g = double(tp.node(y).grad[0]);
      const auto av2 = tp.value(a);
      const auto bv2 = tp.value(b);
      const bool need_a = tp.node(a).requires_grad;
      const bool need_b = tp.node(b).requires_grad;
      for (size_t i = 0; i < av2.size(); ++i) {
        T d = T(2.0 * g / n * (double(av2[i]) - double(bv2[i])));
        if (need_a) tp.grad_buffer(a)[i] += d;
        if (need_b) tp.grad_buffer(b)[i] -= d;
      }
    };
  }
  return y;
}

// Mean over all positions of -log softmax(logits)[target]; max-subtraction
// for numerical stability. logits (..., K), one target id per row.
template <typename T>
Var cross_entropy_categorical(Tape<T>& t, Var logits, const std::vector<int64_t>& targets) {
  const Shape& ls = t.shape(logits);
  const int64_t k = ls.back();
  const int64_t rows = numel(ls) / k;
  if (int64_t(targets.size()) != rows)
    throw Error(ErrorKind::Dimension,
                "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                    std::to_string(rows) + " rows");
  for (int64_t tg : targets)
    if (tg < 0 || tg >= k)
      throw Error(ErrorKind::Index, "cross_entropy: target " + std::to_string(tg) +
                                        " out of range [0," + std::to_string(k) + ")");
  const auto lv = t.value(logits);
  double acc = 0;
  for (int64_t r = 0; r < rows; ++r) {
    const T* row = lv.data() + r * k;
    double mx = double(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, double(row[j]));
    double se = 0;
    for (int64_t j = 0; j < k; ++j) se += std::exp(double(row[j]) - mx);
    acc += mx + std::log(se) - double(row[targets[size_t(r)]]);
  }
  bool rg = t.node(logits).requires_grad;
  Var y = t.emplace({1}, {T(acc / double(rows))}, rg);
  if (t.recording() && rg) {
    t.node(y).backward = [logits, y, targets, rows, k](Tape<T>& tp) {
      const double g = double(tp.node(y).grad[0]) / double(rows);
      const auto lv2 = tp.value(logits);
      auto& gl = tp.grad_buffer(logits);
      for (int64_t r = 0; r < rows; ++r) {
        const T* row = lv2.data() + r * k;
        double mx = double(row[0]);
        for (int64_t j = 1; j < k; ++j) mx = std::max(mx, double(row[j]));
        double se = 0;
        for (int64_t j = 0; j < k; ++j) se += std::exp(double(row[j]) - mx);
        for (int64_t j = 0; j < k; ++j) {
          double p = std::exp(double(row[j]) - mx) / se;
          double ind = (j == targets[size_t(r)]) ? 1.0 : 0.0;
          gl[size_t(r * k + j)] += T(g * (p - ind));
        }
      }
    };
  }
  return y;
}

// Mean over every element of -[t ln p + (1-t) ln(1-p)]. Probabilities must
// already sit strictly inside (0,1); targets must be exactly 0 or 1.
template <typename T>
Var bce(Tape<T>& t, Var probs, const Tensor<T>& targets) {
  const Shape& ps = t.shape(probs);
  if (ps != targets.shape)
    throw Error(ErrorKind::Dimension, "bce: probabilities " + shape_str(ps) + " vs targets " +
                                          shape_str(targets.shape));
  const auto pv = t.value(probs);
  for (size_t i = 0; i < targets.data.size(); ++i) {
    T tv = targets.data[i];
    if (tv != T(0) && tv != T(1))
      throw Error(ErrorKind::Domain, "bce: target value " + std::to_string(double(tv)) +
                                         " is not 0 or 1");
    if (!(pv[i] > T(0) && pv[i] < T(1)))
      throw Error(ErrorKind::Domain, "bce: probability " + std::to_string(double(pv[i])) +
                                         " outside (0,1)");
  }
  double acc = 0;
  for (size_t i = 0; i < pv.size(); ++i) {
    double p = double(pv[i]);
    double tv = double(targets.data[i]);
    acc -= tv * std::log(p) + (1.0 - tv) * std::log(1.0 - p);
  }
  const double n = double(pv.size());
  bool rg = t.node(probs).requires_grad;
  Var y = t.emplace({1}, {T(acc / n)}, rg);
  if (t.recording() && rg) {
    std::vector<T> tgt = targets.data;
    t.node(y).backward = [probs, y, tgt, n](Tape<T>& tp) {
      const double g = double(tp.node(y).grad[0]) / n;
      const auto pv2 = tp.value(probs);
      auto& gp = tp.grad_buffer(probs);
      for (size_t i = 0; i < pv2.size(); ++i) {
        double p = double(pv2[i]);
        double tv = double(tgt[i]);
        gp[i] += T(g * (-tv / p + (1.0 - tv) / (1.0 - p)));
      }
    };
  }
  return y;
}

}  // namespace recomp
