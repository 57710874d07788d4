// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense double-precision kernels used by every other module. Everything is
// plain row-major storage and straightforward loops; the whole pipeline runs
// at sizes where verifiability matters and throughput does not.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "unipatch/common.hpp"

namespace unipatch {

using Vec = std::vector<double>;

struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
  std::span<const double> row(int r) const {
    return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
  }

  std::string shape_str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows)
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " vs " + b.shape_str());
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += aik * b.at(k, j);
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(j, i) = m.at(i, j);
  return out;
}

// Row-wise softmax stabilized by subtracting the row maximum.
inline Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (int i = 0; i < m.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m.cols; ++j) mx = std::max(mx, m.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) {
      double e = std::exp(m.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m.cols; ++j) out.at(i, j) /= sum;
  }
  return out;
}

// Exact Gaussian-CDF GELU, x * Phi(x). Not the tanh approximation.
inline double gelu(double x) { return x * 0.5 * (1.0 + std::erf(x * 0.70710678118654752440)); }

inline double gelu_grad(double x) {
  const double phi_cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
  const double phi_pdf = 0.39894228040143267794 * std::exp(-0.5 * x * x);
  return phi_cdf + x * phi_pdf;
}

inline Vec layer_norm(std::span<const double> v, std::span<const double> gain,
                      std::span<const double> bias, double eps) {
  if (v.size() != gain.size() || v.size() != bias.size())
    throw ShapeError("layer_norm: lengths differ, v=" + std::to_string(v.size()) +
                     " gain=" + std::to_string(gain.size()) + " bias=" + std::to_string(bias.size()));
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be > 0");
  const std::size_t n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n);
  const double rstd = 1.0 / std::sqrt(var + eps);
  Vec out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = gain[i] * ((v[i] - mean) * rstd) + bias[i];
  return out;
}

// Central-difference gradient oracle: (f(p + h e_i) - f(p - h e_i)) / (2h).
// This is the independent reference every analytic gradient is checked against.
inline Vec central_diff_grad(const std::function<double(const Vec&)>& f, const Vec& p, double h) {
  if (!(h > 0.0)) throw ConfigError("central_diff_grad: h must be > 0");
  Vec grad(p.size());
  Vec probe = p;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double fp = f(probe);
    probe[i] = saved - h;
    const double fm = f(probe);
    probe[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericError("central_diff_grad: non-finite f at coordinate " + std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// --- helpers shared by the transformer code ---

// y = x W^T + b with W stored out_features x in_features; applied per row.
inline Matrix affine(const Matrix& x, const Matrix& w, const Vec& b) {
  if (x.cols != w.cols)
    throw ShapeError("affine: input width " + x.shape_str() + " vs weight " + w.shape_str());
  if (static_cast<int>(b.size()) != w.rows) throw ShapeError("affine: bias length mismatch");
  Matrix out(x.rows, w.rows);
  for (int i = 0; i < x.rows; ++i) {
    for (int o = 0; o < w.rows; ++o) {
      double acc = b[o];
      for (int j = 0; j < x.cols; ++j) acc += x.at(i, j) * w.at(o, j);
      out.at(i, o) = acc;
    }
  }
  return out;
}

// Backward of affine: accumulates dW += dY^T X (shaped out x in), db += colsum(dY),
// and returns dX = dY W.
inline Matrix affine_backward(const Matrix& d_out, const Matrix& x, const Matrix& w, Matrix& d_w,
                              Vec& d_b) {
  for (int o = 0; o < w.rows; ++o) {
    for (int i = 0; i < x.rows; ++i) {
      const double g = d_out.at(i, o);
      d_b[o] += g;
      for (int j = 0; j < x.cols; ++j) d_w.at(o, j) += g * x.at(i, j);
    }
  }
  Matrix d_x(x.rows, x.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int o = 0; o < w.rows; ++o) {
      const double g = d_out.at(i, o);
      for (int j = 0; j < x.cols; ++j) d_x.at(i, j) += g * w.at(o, j);
    }
  return d_x;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff: " + a.shape_str() + " vs " + b.shape_str());
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
  return m;
}

inline bool all_finite(const Matrix& m) {
  for (double x : m.data)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace unipatch
