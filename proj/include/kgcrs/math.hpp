#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "kgcrs/types.hpp"

namespace kgcrs {

using Vec = std::vector<double>;

// Dense row-major matrix.
struct Mat {
  int rows = 0;
  int cols = 0;
  Vec a;

  Mat() = default;
  Mat(int r, int c, double v = 0.0) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, v) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline double dot(const Vec& x, const Vec& y) {
  require(x.size() == y.size(), Err::DimensionMismatch, "dot: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

// y += a*x
inline void axpy(double a, const Vec& x, Vec& y) {
  require(x.size() == y.size(), Err::DimensionMismatch, "axpy: size mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

inline Vec add(const Vec& x, const Vec& y) {
  Vec r = x;
  axpy(1.0, y, r);
  return r;
}

inline Vec sub(const Vec& x, const Vec& y) {
  Vec r = x;
  axpy(-1.0, y, r);
  return r;
}

inline double sq_norm(const Vec& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return s;
}

// r = M x
inline void matvec(const Mat& m, const Vec& x, Vec& r) {
  require(static_cast<std::size_t>(m.cols) == x.size(), Err::DimensionMismatch, "matvec");
  r.assign(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = &m.a[static_cast<std::size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) s += row[j] * x[j];
    r[i] = s;
  }
}

// r = M^T x
inline void matvec_t(const Mat& m, const Vec& x, Vec& r) {
  require(static_cast<std::size_t>(m.rows) == x.size(), Err::DimensionMismatch, "matvec_t");
  r.assign(m.cols, 0.0);
  for (int i = 0; i < m.rows; ++i) {
    const double* row = &m.a[static_cast<std::size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) r[j] += row[j] * x[i];
  }
}

// M += a * x y^T
inline void outer_acc(double a, const Vec& x, const Vec& y, Mat& m) {
  require(static_cast<std::size_t>(m.rows) == x.size() &&
              static_cast<std::size_t>(m.cols) == y.size(),
          Err::DimensionMismatch, "outer_acc");
  for (int i = 0; i < m.rows; ++i) {
    double* row = &m.a[static_cast<std::size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) row[j] += a * x[i] * y[j];
  }
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  // log(1 + e^x), stable for large |x|.
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double log_sigmoid(double x) { return -softplus(-x); }

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Mat& m) { return all_finite(m.a); }

}  // namespace kgcrs
