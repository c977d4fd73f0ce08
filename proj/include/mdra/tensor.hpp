#pragma once

#include <cassert>
#include <cmath>
#include <initializer_list>
#include <vector>

#include "mdra/errors.hpp"

namespace mdra {

/// Dense row-major 64-bit real tensor of rank <= 2. Scalars are 1x1,
/// vectors are n x 1 columns.
struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}
  Tensor(int r, int c, std::vector<double> data)
      : rows(r), cols(c), v(std::move(data)) {
    if (static_cast<size_t>(rows) * cols != v.size())
      throw ShapeError("tensor data length does not match shape");
  }

  static Tensor scalar(double x) {
    Tensor t(1, 1);
    t.v[0] = x;
    return t;
  }
  static Tensor column(std::initializer_list<double> xs) {
    Tensor t(static_cast<int>(xs.size()), 1);
    int i = 0;
    for (double x : xs) t.v[i++] = x;
    return t;
  }
  static Tensor column(const std::vector<double>& xs) {
    return Tensor(static_cast<int>(xs.size()), 1, xs);
  }
  static Tensor zeros(int r, int c) { return Tensor(r, c); }
  static Tensor ones(int r, int c) {
    Tensor t(r, c);
    for (auto& x : t.v) x = 1.0;
    return t;
  }
  static Tensor filled(int r, int c, double x) {
    Tensor t(r, c);
    for (auto& y : t.v) y = x;
    return t;
  }

  size_t size() const { return v.size(); }
  double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
  double item() const {
    assert(rows == 1 && cols == 1);
    return v[0];
  }
  bool same_shape(const Tensor& o) const {
    return rows == o.rows && cols == o.cols;
  }
  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
  double norm() const {
    double s = 0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
  }
};

}  // namespace mdra
