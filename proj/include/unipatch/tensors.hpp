// SPDX-License-Identifier: Apache-2.0
#pragma once

// Named views over parameter tensors. One registry serves both the checkpoint
// writer and the flatten/unflatten path the gradient checks drive.

#include <string>
#include <vector>

#include "unipatch/matrix.hpp"
#include "unipatch/transformer.hpp"

namespace unipatch {

struct TensorRef {
  std::string name;
  Matrix* mat = nullptr;
  Vec* vec = nullptr;

  std::size_t size() const { return mat ? mat->data.size() : vec->size(); }
  double* ptr() { return mat ? mat->data.data() : vec->data(); }
  const double* ptr() const { return mat ? mat->data.data() : vec->data(); }
};

inline std::size_t total_size(const std::vector<TensorRef>& refs) {
  std::size_t n = 0;
  for (const auto& r : refs) n += r.size();
  return n;
}

inline Vec flatten(const std::vector<TensorRef>& refs) {
  Vec out;
  out.reserve(total_size(refs));
  for (const auto& r : refs) out.insert(out.end(), r.ptr(), r.ptr() + r.size());
  return out;
}

inline void unflatten(const Vec& flat, std::vector<TensorRef>& refs) {
  if (flat.size() != total_size(refs))
    throw ShapeError("unflatten: " + std::to_string(flat.size()) + " values for " +
                     std::to_string(total_size(refs)) + " slots");
  std::size_t off = 0;
  for (auto& r : refs) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + r.size()), r.ptr());
    off += r.size();
  }
}

inline void append_block_tensors(std::vector<TensorRef>& refs, BlockParams& b,
                                 const std::string& prefix) {
  refs.push_back({prefix + ".attn.wq", &b.wq, nullptr});
  refs.push_back({prefix + ".attn.bq", nullptr, &b.bq});
  refs.push_back({prefix + ".attn.wk", &b.wk, nullptr});
  refs.push_back({prefix + ".attn.bk", nullptr, &b.bk});
  refs.push_back({prefix + ".attn.wv", &b.wv, nullptr});
  refs.push_back({prefix + ".attn.bv", nullptr, &b.bv});
  refs.push_back({prefix + ".attn.wo", &b.wo, nullptr});
  refs.push_back({prefix + ".attn.bo", nullptr, &b.bo});
  refs.push_back({prefix + ".ln1.gain", nullptr, &b.ln1_gain});
  refs.push_back({prefix + ".ln1.bias", nullptr, &b.ln1_bias});
  refs.push_back({prefix + ".ln2.gain", nullptr, &b.ln2_gain});
  refs.push_back({prefix + ".ln2.bias", nullptr, &b.ln2_bias});
  refs.push_back({prefix + ".mlp.w_up", &b.w_up, nullptr});
  refs.push_back({prefix + ".mlp.b_up", nullptr, &b.b_up});
  refs.push_back({prefix + ".mlp.w_down", &b.w_down, nullptr});
  refs.push_back({prefix + ".mlp.b_down", nullptr, &b.b_down});
}

}  // namespace unipatch
