#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <string>
#include <vector>

#include "xlij/errors.hpp"

namespace xlij {

// Dense row-major matrix. The only storage type in the project; scalar type
// is float for training speed or double for verification.
template <class T>
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, T(0)) {}

  static Mat zeros(int r, int c) { return Mat(r, c); }
  static Mat filled(int r, int c, T v) {
    Mat m(r, c);
    std::fill(m.data.begin(), m.data.end(), v);
    return m;
  }

  size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  T* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const T* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

  T& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  T at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  void set_zero() { std::fill(data.begin(), data.end(), T(0)); }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

template <class T>
void require_shape(const Mat<T>& m, int r, int c, const char* what) {
  if (m.rows != r || m.cols != c)
    fail(errc::config, std::string(what) + ": expected " + std::to_string(r) + "x" +
                           std::to_string(c) + ", got " + std::to_string(m.rows) + "x" +
                           std::to_string(m.cols));
}

// c += a * b
template <class T>
void gemm_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  const int m = a.rows, k = a.cols, n = b.cols;
  for (int i = 0; i < m; ++i) {
    const T* ai = a.row(i);
    T* ci = c.row(i);
    for (int p = 0; p < k; ++p) {
      const T s = ai[p];
      if (s == T(0)) continue;
      const T* bp = b.row(p);
      for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

// c += a * b^T
template <class T>
void gemm_nt_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  const int m = a.rows, k = a.cols, n = b.rows;
  for (int i = 0; i < m; ++i) {
    const T* ai = a.row(i);
    T* ci = c.row(i);
    for (int j = 0; j < n; ++j) {
      const T* bj = b.row(j);
      T acc = T(0);
      for (int p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// c += a^T * b
template <class T>
void gemm_tn_acc(const Mat<T>& a, const Mat<T>& b, Mat<T>& c) {
  const int m = a.cols, k = a.rows, n = b.cols;
  for (int p = 0; p < k; ++p) {
    const T* ap = a.row(p);
    const T* bp = b.row(p);
    for (int i = 0; i < m; ++i) {
      const T s = ap[i];
      if (s == T(0)) continue;
      T* ci = c.row(i);
      for (int j = 0; j < n; ++j) ci[j] += s * bp[j];
    }
  }
}

template <class T>
void add_acc(const Mat<T>& src, Mat<T>& dst) {
  for (size_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
}

template <class T>
void add_scaled_acc(const Mat<T>& src, T s, Mat<T>& dst) {
  for (size_t i = 0; i < src.size(); ++i) dst.data[i] += s * src.data[i];
}

template <class T>
double max_abs_diff(const Mat<T>& a, const Mat<T>& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    double d = std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]));
    if (d > worst) worst = d;
  }
  return worst;
}

template <class T>
bool bitwise_equal(const Mat<T>& a, const Mat<T>& b) {
  if (!a.same_shape(b)) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.data.data(), b.data.data(), a.size() * sizeof(T)) == 0;
}

}  // namespace xlij
