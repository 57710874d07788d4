// SPDX-License-Identifier: Apache-2.0
#pragma once

// Multimodal projector: a two-layer MLP with GELU mapping encoder outputs
// row-wise into the decoder embedding space,
//   h_proj = W2 * gelu(W1 * h + b1) + b2.

#include <vector>

#include "unipatch/tensors.hpp"

namespace unipatch {

struct ProjectorParams {
  Matrix w1;  // d_hidden x d_model
  Vec b1;
  Matrix w2;  // d_llm x d_hidden
  Vec b2;

  int d_model() const { return w1.cols; }
  int d_hidden() const { return w1.rows; }
  int d_llm() const { return w2.rows; }
};

inline ProjectorParams init_projector(int d_model, int d_hidden, int d_llm, std::uint64_t seed) {
  if (d_model < 1 || d_hidden < 1 || d_llm < 1) throw ConfigError("projector: sizes must be >= 1");
  Rng rng(seed);
  ProjectorParams p;
  p.w1 = Matrix(d_hidden, d_model);
  for (double& x : p.w1.data) x = rng.normal(0.0, 0.02);
  p.b1.assign(static_cast<std::size_t>(d_hidden), 0.0);
  p.w2 = Matrix(d_llm, d_hidden);
  for (double& x : p.w2.data) x = rng.normal(0.0, 0.02);
  p.b2.assign(static_cast<std::size_t>(d_llm), 0.0);
  return p;
}

inline ProjectorParams zeros_like(const ProjectorParams& p) {
  ProjectorParams z;
  z.w1 = Matrix(p.w1.rows, p.w1.cols);
  z.b1.assign(p.b1.size(), 0.0);
  z.w2 = Matrix(p.w2.rows, p.w2.cols);
  z.b2.assign(p.b2.size(), 0.0);
  return z;
}

inline std::vector<TensorRef> named_tensors(ProjectorParams& p) {
  return {{"proj.w1", &p.w1, nullptr},
          {"proj.b1", nullptr, &p.b1},
          {"proj.w2", &p.w2, nullptr},
          {"proj.b2", nullptr, &p.b2}};
}

struct ProjectorCache {
  Matrix h_in;   // N x d_model
  Matrix z;      // pre-GELU, N x d_hidden
  Matrix g;      // post-GELU
};

inline Matrix project(const Matrix& h_v, const ProjectorParams& params,
                      ProjectorCache* cache = nullptr) {
  if (h_v.cols != params.d_model())
    throw ShapeError("project: input width " + std::to_string(h_v.cols) + " vs W1 " +
                     params.w1.shape_str());
  Matrix z = affine(h_v, params.w1, params.b1);
  Matrix g(z.rows, z.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i) g.data[i] = gelu(z.data[i]);
  Matrix out = affine(g, params.w2, params.b2);
  if (cache) {
    cache->h_in = h_v;
    cache->z = std::move(z);
    cache->g = std::move(g);
  }
  return out;
}

inline Matrix project_backward(const Matrix& d_out, const ProjectorParams& params,
                               const ProjectorCache& cache, ProjectorParams& grads) {
  Matrix d_g = affine_backward(d_out, cache.g, params.w2, grads.w2, grads.b2);
  Matrix d_z(d_g.rows, d_g.cols);
  for (std::size_t i = 0; i < d_z.data.size(); ++i)
    d_z.data[i] = d_g.data[i] * gelu_grad(cache.z.data[i]);
  return affine_backward(d_z, cache.h_in, params.w1, grads.w1, grads.b1);
}

}  // namespace unipatch
