// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two-dimensional rotary position embedding. A width-d feature vector is
// split into a height half and a width half; within each half, consecutive
// feature pairs (2i-1, 2i) are rotated by p * theta_i where p is the grid row
// for the first half and the grid column for the second, and
// theta_i = 10000^(-2i/d) for i = 1..d/4. Applied to queries and keys, the
// attention dot product then depends only on relative grid offsets.

#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "unipatch/matrix.hpp"

namespace unipatch {

inline Vec rope_frequencies(int d) {
  if (d < 4 || d % 4 != 0)
    throw ShapeError("rope_frequencies: width must be a positive multiple of 4, got " +
                     std::to_string(d));
  Vec freqs(static_cast<std::size_t>(d / 4));
  for (int i = 1; i <= d / 4; ++i)
    freqs[static_cast<std::size_t>(i - 1)] = std::pow(10000.0, -2.0 * i / d);
  return freqs;
}

// Cos/sin cache over grid positions. Positions beyond max_pos (or negative)
// fall back to direct evaluation, so the cache is purely an optimization.
struct RopeTable {
  int d = 0;
  int max_pos = 0;
  Vec freqs;
  Matrix cos_tab;  // (max_pos + 1) x d/4
  Matrix sin_tab;

  static RopeTable build(int d, int max_pos = 1024) {
    RopeTable t;
    t.d = d;
    t.max_pos = max_pos;
    t.freqs = rope_frequencies(d);
    const int n_freq = d / 4;
    t.cos_tab = Matrix(max_pos + 1, n_freq);
    t.sin_tab = Matrix(max_pos + 1, n_freq);
    for (int p = 0; p <= max_pos; ++p)
      for (int i = 0; i < n_freq; ++i) {
        const double a = p * t.freqs[static_cast<std::size_t>(i)];
        t.cos_tab.at(p, i) = std::cos(a);
        t.sin_tab.at(p, i) = std::sin(a);
      }
    return t;
  }

  std::pair<double, double> cos_sin(long p, int i) const {
    if (p >= 0 && p <= max_pos) return {cos_tab.at(static_cast<int>(p), i), sin_tab.at(static_cast<int>(p), i)};
    const double a = static_cast<double>(p) * freqs[static_cast<std::size_t>(i)];
    return {std::cos(a), std::sin(a)};
  }
};

struct PositionedVector {
  Vec values;
  int m = 0;  // grid row
  int n = 0;  // grid column
};

namespace detail {

// Rotates one half of the vector in place; `invert` applies the transpose
// rotation (angle negated), used when backpropagating through RoPE.
inline void rope_rotate_half(std::span<double> half, long p, const RopeTable& table, bool invert) {
  const int n_freq = table.d / 4;
  for (int i = 0; i < n_freq; ++i) {
    auto [c, s] = table.cos_sin(p, i);
    if (invert) s = -s;
    const double a = half[static_cast<std::size_t>(2 * i)];
    const double b = half[static_cast<std::size_t>(2 * i + 1)];
    half[static_cast<std::size_t>(2 * i)] = c * a - s * b;
    half[static_cast<std::size_t>(2 * i + 1)] = s * a + c * b;
  }
}

}  // namespace detail

// In-place rotation of a width-d vector at grid position (m, n).
inline void rope_rotate_inplace(std::span<double> v, int m, int n, const RopeTable& table,
                                bool invert = false) {
  if (static_cast<int>(v.size()) != table.d)
    throw ShapeError("rope: vector width " + std::to_string(v.size()) + " vs table width " +
                     std::to_string(table.d));
  detail::rope_rotate_half(v.subspan(0, static_cast<std::size_t>(table.d / 2)), m, table, invert);
  detail::rope_rotate_half(v.subspan(static_cast<std::size_t>(table.d / 2)), n, table, invert);
}

inline Vec apply_rope2d(const PositionedVector& v, const RopeTable& table) {
  Vec out = v.values;
  rope_rotate_inplace(out, v.m, v.n, table);
  return out;
}

inline double rope_dot(const PositionedVector& q, const PositionedVector& k,
                       const RopeTable& table) {
  if (q.values.size() != k.values.size())
    throw ShapeError("rope_dot: widths differ, " + std::to_string(q.values.size()) + " vs " +
                     std::to_string(k.values.size()));
  const Vec qr = apply_rope2d(q, table);
  const Vec kr = apply_rope2d(k, table);
  double acc = 0.0;
  for (std::size_t i = 0; i < qr.size(); ++i) acc += qr[i] * kr[i];
  return acc;
}

}  // namespace unipatch
