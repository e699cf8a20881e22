#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

#include "feddae/errors.hpp"

namespace feddae {

using Vector = std::vector<double>;

// Dense row-major matrix. Network weights are stored input-major (in x out):
// every per-row loop then runs unit-stride over the output dimension, and
// rows of zero input can be skipped outright, which is what makes per-user
// sparse interaction vectors cheap.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vector v;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), v(size_t(r) * size_t(c), 0.0) {}

  double* row(int r) { return v.data() + size_t(r) * cols; }
  const double* row(int r) const { return v.data() + size_t(r) * cols; }
  double& at(int r, int c) { return v[size_t(r) * cols + c]; }
  double at(int r, int c) const { return v[size_t(r) * cols + c]; }
  size_t size() const { return v.size(); }

  void zero() { std::fill(v.begin(), v.end(), 0.0); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline double dot(const double* a, const double* b, int n) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline void axpy(double alpha, const double* x, double* y, int n) {
  for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(p[i])) return false;
  return true;
}

}  // namespace feddae
