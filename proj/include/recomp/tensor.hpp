// Dense n-dimensional array with row-major layout (last axis fastest).
// The element type is a template parameter: float for training, double for
// the finite-difference oracle suites.

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "recomp/error.hpp"
#include "recomp/rng.hpp"

namespace recomp {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ')';
  return os.str();
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;

  explicit Tensor(Shape s) : shape(std::move(s)), data(size_t(recomp::numel(shape)), T(0)) {
    check();
  }

  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) { check(); }

  int64_t numel() const { return int64_t(data.size()); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  static Tensor full(Shape s, T v) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor uniform(Shape s, T lo, T hi, Rng& rng) {
    Tensor t(std::move(s));
    for (auto& x : t.data) x = T(rng.uniform(double(lo), double(hi)));
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = U(data[i]);
    return out;
  }

  bool operator==(const Tensor& o) const { return shape == o.shape && data == o.data; }

 private:
  void check() const {
    for (int64_t d : shape) {
      if (d <= 0)
        throw Error(ErrorKind::Dimension, "non-positive dim in shape " + shape_str(shape));
    }
    if (recomp::numel(shape) != int64_t(data.size()))
      throw Error(ErrorKind::Dimension,
                  "shape " + shape_str(shape) + " does not match buffer of " +
                      std::to_string(data.size()) + " elements");
  }
};

template <typename T>
bool all_finite(const std::vector<T>& v) {
  for (T x : v)
    if (!std::isfinite(double(x))) return false;
  return true;
}

}  // namespace recomp
