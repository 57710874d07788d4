// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pre-norm transformer block shared by the vision encoder and the toy
// decoder: x + attn(ln1(x)), then x + mlp(ln2(x)). The encoder runs it
// bidirectionally with 2D RoPE on queries and keys; the decoder runs it
// causally with no RoPE. Every forward can record caches, and the backward
// pass reproduces the exact gradients (checked against central differences).

#include <utility>
#include <vector>

#include "unipatch/matrix.hpp"
#include "unipatch/rope2d.hpp"

namespace unipatch {

inline constexpr double kLnEps = 1e-6;

struct BlockParams {
  Matrix wq, wk, wv, wo;  // d x d, out-features by in-features
  Vec bq, bk, bv, bo;
  Vec ln1_gain, ln1_bias;
  Vec ln2_gain, ln2_bias;
  Matrix w_up;    // d_mlp x d
  Vec b_up;
  Matrix w_down;  // d x d_mlp
  Vec b_down;
};

struct LnCache {
  Vec rstd;     // per row
  Matrix xhat;  // normalized input, pre-affine
};

// Row-wise layer norm with optional cache for the backward pass.
inline Matrix ln_rows(const Matrix& x, const Vec& gain, const Vec& bias, LnCache* cache = nullptr) {
  Matrix out(x.rows, x.cols);
  if (cache) {
    cache->rstd.assign(static_cast<std::size_t>(x.rows), 0.0);
    cache->xhat = Matrix(x.rows, x.cols);
  }
  const int d = x.cols;
  for (int i = 0; i < x.rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (x.at(i, j) - mean) * (x.at(i, j) - mean);
    var /= d;
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    for (int j = 0; j < d; ++j) {
      const double xh = (x.at(i, j) - mean) * rstd;
      if (cache) cache->xhat.at(i, j) = xh;
      out.at(i, j) = gain[static_cast<std::size_t>(j)] * xh + bias[static_cast<std::size_t>(j)];
    }
    if (cache) cache->rstd[static_cast<std::size_t>(i)] = rstd;
  }
  return out;
}

inline Matrix ln_rows_backward(const Matrix& d_out, const LnCache& cache, const Vec& gain,
                               Vec& d_gain, Vec& d_bias) {
  const int d = d_out.cols;
  Matrix d_x(d_out.rows, d_out.cols);
  Vec dxhat(static_cast<std::size_t>(d));
  for (int i = 0; i < d_out.rows; ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (int j = 0; j < d; ++j) {
      const double g = d_out.at(i, j);
      dxhat[static_cast<std::size_t>(j)] = g * gain[static_cast<std::size_t>(j)];
      d_gain[static_cast<std::size_t>(j)] += g * cache.xhat.at(i, j);
      d_bias[static_cast<std::size_t>(j)] += g;
      m1 += dxhat[static_cast<std::size_t>(j)];
      m2 += dxhat[static_cast<std::size_t>(j)] * cache.xhat.at(i, j);
    }
    m1 /= d;
    m2 /= d;
    const double rstd = cache.rstd[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j)
      d_x.at(i, j) = rstd * (dxhat[static_cast<std::size_t>(j)] - m1 - cache.xhat.at(i, j) * m2);
  }
  return d_x;
}

// How the attention inside a block behaves. `coords` must be non-null exactly
// when `rope` is; the rope table width is the per-head dimension.
struct AttnMode {
  bool causal = false;
  const RopeTable* rope = nullptr;
  const std::vector<std::pair<int, int>>* coords = nullptr;
};

struct BlockCache {
  Matrix x_in;
  LnCache ln1;
  Matrix n1;
  Matrix q_rot, k_rot, v;     // projections with RoPE already applied to q/k
  std::vector<Matrix> probs;  // per head, rows are softmax over the visible range
  Matrix ctx;                 // heads re-concatenated
  Matrix x_mid;
  LnCache ln2;
  Matrix n2;
  Matrix z_up;   // pre-GELU
  Matrix h_up;   // post-GELU
};

namespace detail {

inline void rope_rows_per_head(Matrix& m, int heads, const AttnMode& mode, bool invert) {
  if (!mode.rope) return;
  const int hd = m.cols / heads;
  for (int t = 0; t < m.rows; ++t) {
    const auto [gm, gn] = (*mode.coords)[static_cast<std::size_t>(t)];
    auto row = m.row(t);
    for (int h = 0; h < heads; ++h)
      rope_rotate_inplace(row.subspan(static_cast<std::size_t>(h) * hd, static_cast<std::size_t>(hd)),
                          gm, gn, *mode.rope, invert);
  }
}

}  // namespace detail

// Attention sublayer with residual: x + Wo * softmax(q k^T / sqrt(hd)) v + bo.
// Causal mode computes each row strictly over its prefix, so row t can never
// observe later positions, bit for bit.
inline Matrix attention_block(const Matrix& x, const BlockParams& p, int heads, const AttnMode& mode,
                              BlockCache* cache = nullptr) {
  const int n = x.rows;
  const int d = x.cols;
  if (d % heads != 0) throw ShapeError("attention_block: width not divisible by head count");
  const int hd = d / heads;
  if (mode.rope && mode.rope->d != hd)
    throw ShapeError("attention_block: rope table width " + std::to_string(mode.rope->d) +
                     " vs head dim " + std::to_string(hd));
  if (mode.rope && (!mode.coords || static_cast<int>(mode.coords->size()) != n))
    throw ShapeError("attention_block: coords must cover every token");

  LnCache ln1_local;
  Matrix n1 = ln_rows(x, p.ln1_gain, p.ln1_bias, cache ? &cache->ln1 : &ln1_local);
  Matrix q = affine(n1, p.wq, p.bq);
  Matrix k = affine(n1, p.wk, p.bk);
  Matrix v = affine(n1, p.wv, p.bv);
  detail::rope_rows_per_head(q, heads, mode, false);
  detail::rope_rows_per_head(k, heads, mode, false);

  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Matrix ctx(n, d);
  std::vector<Matrix> probs(static_cast<std::size_t>(heads));
  Vec scores(static_cast<std::size_t>(n));
  for (int h = 0; h < heads; ++h) {
    Matrix& prob = probs[static_cast<std::size_t>(h)];
    prob = Matrix(n, n);
    const int off = h * hd;
    for (int i = 0; i < n; ++i) {
      const int limit = mode.causal ? i + 1 : n;
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < limit; ++j) {
        double s = 0.0;
        for (int c = 0; c < hd; ++c) s += q.at(i, off + c) * k.at(j, off + c);
        s *= scale;
        scores[static_cast<std::size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      double sum = 0.0;
      for (int j = 0; j < limit; ++j) {
        const double e = std::exp(scores[static_cast<std::size_t>(j)] - mx);
        prob.at(i, j) = e;
        sum += e;
      }
      for (int j = 0; j < limit; ++j) {
        prob.at(i, j) /= sum;
        for (int c = 0; c < hd; ++c) ctx.at(i, off + c) += prob.at(i, j) * v.at(j, off + c);
      }
    }
  }

  Matrix attn_out = affine(ctx, p.wo, p.bo);
  Matrix out(n, d);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.data[i] + attn_out.data[i];

  if (cache) {
    cache->x_in = x;
    cache->n1 = std::move(n1);
    cache->q_rot = std::move(q);
    cache->k_rot = std::move(k);
    cache->v = std::move(v);
    cache->probs = std::move(probs);
    cache->ctx = std::move(ctx);
  }
  return out;
}

// MLP sublayer with residual: x + W_down * gelu(W_up * ln2(x) + b_up) + b_down.
inline Matrix mlp_block(const Matrix& x, const BlockParams& p, BlockCache* cache = nullptr) {
  LnCache ln2_local;
  Matrix n2 = ln_rows(x, p.ln2_gain, p.ln2_bias, cache ? &cache->ln2 : &ln2_local);
  Matrix z = affine(n2, p.w_up, p.b_up);
  Matrix h(z.rows, z.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i) h.data[i] = gelu(z.data[i]);
  Matrix mlp_out = affine(h, p.w_down, p.b_down);
  Matrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.data[i] + mlp_out.data[i];
  if (cache) {
    cache->x_mid = x;
    cache->n2 = std::move(n2);
    cache->z_up = std::move(z);
    cache->h_up = std::move(h);
  }
  return out;
}

inline Matrix block_forward(const Matrix& x, const BlockParams& p, int heads, const AttnMode& mode,
                            BlockCache* cache = nullptr) {
  return mlp_block(attention_block(x, p, heads, mode, cache), p, cache);
}

// Backward through one block. Accumulates parameter gradients into `g` and
// returns the gradient with respect to the block input.
inline Matrix block_backward(const Matrix& d_y, const BlockParams& p, int heads, const AttnMode& mode,
                             const BlockCache& cache, BlockParams& g) {
  const int n = d_y.rows;
  const int d = d_y.cols;
  const int hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // MLP sublayer.
  Matrix d_h = affine_backward(d_y, cache.h_up, p.w_down, g.w_down, g.b_down);
  Matrix d_z(n, d_h.cols);
  for (std::size_t i = 0; i < d_z.data.size(); ++i)
    d_z.data[i] = d_h.data[i] * gelu_grad(cache.z_up.data[i]);
  Matrix d_n2 = affine_backward(d_z, cache.n2, p.w_up, g.w_up, g.b_up);
  Matrix d_x_mid = ln_rows_backward(d_n2, cache.ln2, p.ln2_gain, g.ln2_gain, g.ln2_bias);
  for (std::size_t i = 0; i < d_x_mid.data.size(); ++i) d_x_mid.data[i] += d_y.data[i];

  // Attention sublayer.
  Matrix d_ctx = affine_backward(d_x_mid, cache.ctx, p.wo, g.wo, g.bo);
  Matrix d_q(n, d), d_k(n, d), d_v(n, d);
  Vec d_prob(static_cast<std::size_t>(n));
  for (int h = 0; h < heads; ++h) {
    const Matrix& prob = cache.probs[static_cast<std::size_t>(h)];
    const int off = h * hd;
    for (int i = 0; i < n; ++i) {
      const int limit = mode.causal ? i + 1 : n;
      double dot = 0.0;
      for (int j = 0; j < limit; ++j) {
        double dp = 0.0;
        for (int c = 0; c < hd; ++c) dp += d_ctx.at(i, off + c) * cache.v.at(j, off + c);
        d_prob[static_cast<std::size_t>(j)] = dp;
        dot += dp * prob.at(i, j);
        for (int c = 0; c < hd; ++c) d_v.at(j, off + c) += prob.at(i, j) * d_ctx.at(i, off + c);
      }
      for (int j = 0; j < limit; ++j) {
        const double ds = (d_prob[static_cast<std::size_t>(j)] - dot) * prob.at(i, j) * scale;
        for (int c = 0; c < hd; ++c) {
          d_q.at(i, off + c) += ds * cache.k_rot.at(j, off + c);
          d_k.at(j, off + c) += ds * cache.q_rot.at(i, off + c);
        }
      }
    }
  }
  // RoPE is orthogonal, so its backward is the inverse rotation.
  detail::rope_rows_per_head(d_q, heads, mode, true);
  detail::rope_rows_per_head(d_k, heads, mode, true);

  Matrix d_n1 = affine_backward(d_q, cache.n1, p.wq, g.wq, g.bq);
  Matrix d_n1_k = affine_backward(d_k, cache.n1, p.wk, g.wk, g.bk);
  Matrix d_n1_v = affine_backward(d_v, cache.n1, p.wv, g.wv, g.bv);
  for (std::size_t i = 0; i < d_n1.data.size(); ++i) d_n1.data[i] += d_n1_k.data[i] + d_n1_v.data[i];
  Matrix d_x = ln_rows_backward(d_n1, cache.ln1, p.ln1_gain, g.ln1_gain, g.ln1_bias);
  for (std::size_t i = 0; i < d_x.data.size(); ++i) d_x.data[i] += d_x_mid.data[i];
  return d_x;
}

inline BlockParams make_block_params(int d, int d_mlp) {
  BlockParams p;
  p.wq = Matrix(d, d);
  p.wk = Matrix(d, d);
  p.wv = Matrix(d, d);
  p.wo = Matrix(d, d);
  p.bq.assign(static_cast<std::size_t>(d), 0.0);
  p.bk.assign(static_cast<std::size_t>(d), 0.0);
  p.bv.assign(static_cast<std::size_t>(d), 0.0);
  p.bo.assign(static_cast<std::size_t>(d), 0.0);
  p.ln1_gain.assign(static_cast<std::size_t>(d), 1.0);
  p.ln1_bias.assign(static_cast<std::size_t>(d), 0.0);
  p.ln2_gain.assign(static_cast<std::size_t>(d), 1.0);
  p.ln2_bias.assign(static_cast<std::size_t>(d), 0.0);
  p.w_up = Matrix(d_mlp, d);
  p.b_up.assign(static_cast<std::size_t>(d_mlp), 0.0);
  p.w_down = Matrix(d, d_mlp);
  p.b_down.assign(static_cast<std::size_t>(d), 0.0);
  return p;
}

// Zero-filled gradient accumulator with the same shapes (gains included).
inline BlockParams zeros_like(const BlockParams& p) {
  BlockParams z = make_block_params(p.wq.rows, p.w_up.rows);
  std::fill(z.ln1_gain.begin(), z.ln1_gain.end(), 0.0);
  std::fill(z.ln2_gain.begin(), z.ln2_gain.end(), 0.0);
  return z;
}

}  // namespace unipatch
