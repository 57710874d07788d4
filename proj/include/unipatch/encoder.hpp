// SPDX-License-Identifier: Apache-2.0
#pragma once

// Vision transformer encoder. Self-attention applies 2D RoPE to queries and
// keys using each token's within-plane (m, n) coordinates; attention is full
// and bidirectional across all planes' tokens. One encoder, no modality
// branches: image, volume and video inputs differ only in token count.

#include <utility>
#include <vector>

#include "unipatch/tensors.hpp"
#include "unipatch/tokred.hpp"
#include "unipatch/transformer.hpp"

namespace unipatch {

struct EncoderConfig {
  int layers = 2;
  int d_model = 8;
  int d_mlp = 16;
  int heads = 2;

  int head_dim() const { return d_model / heads; }

  void validate() const {
    if (layers < 0) throw ConfigError("encoder: layer count must be >= 0");
    if (d_model < 1 || d_mlp < 1 || heads < 1) throw ConfigError("encoder: sizes must be >= 1");
    if (d_model % heads != 0)
      throw ConfigError("encoder: d_model " + std::to_string(d_model) + " not divisible by " +
                        std::to_string(heads) + " heads");
    if (head_dim() % 4 != 0)
      throw ConfigError("encoder: head dim " + std::to_string(head_dim()) +
                        " must be a multiple of 4 for 2D RoPE pairing");
  }

  // Sizes reported for the full-scale model; far beyond desk verification.
  static EncoderConfig reference_scale() { return {27, 1152, 4304, 16}; }
};

struct EncoderParams {
  EncoderConfig config;
  int patch = 16;
  Matrix w_embed;  // d_model x patch^2, shared with the patch embedding stage
  Vec b_embed;
  std::vector<BlockParams> blocks;
  Vec lnf_gain, lnf_bias;
};

// Deterministic per seed: weight matrices ~ N(0, 0.02) drawn in a fixed
// order, biases zero, norm gains one.
inline EncoderParams init_params(const EncoderConfig& config, std::uint64_t seed, int patch = 16) {
  config.validate();
  if (patch < 1) throw ConfigError("encoder: patch size must be >= 1");
  Rng rng(seed);
  auto fill = [&rng](Matrix& m) {
    for (double& x : m.data) x = rng.normal(0.0, 0.02);
  };
  EncoderParams p;
  p.config = config;
  p.patch = patch;
  p.w_embed = Matrix(config.d_model, patch * patch);
  fill(p.w_embed);
  p.b_embed.assign(static_cast<std::size_t>(config.d_model), 0.0);
  for (int l = 0; l < config.layers; ++l) {
    BlockParams b = make_block_params(config.d_model, config.d_mlp);
    fill(b.wq);
    fill(b.wk);
    fill(b.wv);
    fill(b.wo);
    fill(b.w_up);
    fill(b.w_down);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_gain.assign(static_cast<std::size_t>(config.d_model), 1.0);
  p.lnf_bias.assign(static_cast<std::size_t>(config.d_model), 0.0);
  return p;
}

inline EncoderParams zeros_like(const EncoderParams& p) {
  EncoderParams z;
  z.config = p.config;
  z.patch = p.patch;
  z.w_embed = Matrix(p.w_embed.rows, p.w_embed.cols);
  z.b_embed.assign(p.b_embed.size(), 0.0);
  for (const auto& b : p.blocks) z.blocks.push_back(zeros_like(b));
  z.lnf_gain.assign(p.lnf_gain.size(), 0.0);
  z.lnf_bias.assign(p.lnf_bias.size(), 0.0);
  return z;
}

inline std::vector<TensorRef> named_tensors(EncoderParams& p) {
  std::vector<TensorRef> refs;
  refs.push_back({"embed.w", &p.w_embed, nullptr});
  refs.push_back({"embed.b", nullptr, &p.b_embed});
  for (std::size_t l = 0; l < p.blocks.size(); ++l)
    append_block_tensors(refs, p.blocks[l], "enc.block" + std::to_string(l));
  refs.push_back({"enc.lnf.gain", nullptr, &p.lnf_gain});
  refs.push_back({"enc.lnf.bias", nullptr, &p.lnf_bias});
  return refs;
}

inline RopeTable make_rope(const EncoderConfig& config, int max_pos = 1024) {
  return RopeTable::build(config.head_dim(), max_pos);
}

struct EncoderCache {
  std::vector<BlockCache> blocks;
  Matrix x_pre_lnf;
  LnCache lnf;
};

// Runs the block stack plus final layer norm over an already-stacked token
// matrix. Zero layers degenerate to the final norm alone.
inline Matrix encoder_run(const Matrix& tokens, const std::vector<std::pair<int, int>>& coords,
                          const EncoderParams& params, const RopeTable& rope,
                          EncoderCache* cache = nullptr) {
  if (tokens.cols != params.config.d_model)
    throw ShapeError("encoder: token width " + std::to_string(tokens.cols) + " vs d_model " +
                     std::to_string(params.config.d_model));
  AttnMode mode{false, &rope, &coords};
  Matrix x = tokens;
  if (cache) cache->blocks.resize(params.blocks.size());
  for (std::size_t l = 0; l < params.blocks.size(); ++l)
    x = block_forward(x, params.blocks[l], params.config.heads, mode,
                      cache ? &cache->blocks[l] : nullptr);
  if (cache) cache->x_pre_lnf = x;
  return ln_rows(x, params.lnf_gain, params.lnf_bias, cache ? &cache->lnf : nullptr);
}

// Stacks the kept tokens of a pruned sequence (plane-major, row-major within
// each plane) and encodes them into H_v.
inline Matrix encoder_forward(const PrunedSequence& seq, const EncoderParams& params,
                              const RopeTable& rope, EncoderCache* cache = nullptr) {
  const Matrix tokens = seq.stack_kept();
  const auto coords = seq.kept_coords();
  return encoder_run(tokens, coords, params, rope, cache);
}

// Accumulates parameter gradients into `grads` and returns the gradient with
// respect to the stacked input tokens.
inline Matrix encoder_backward(const Matrix& d_out, const std::vector<std::pair<int, int>>& coords,
                               const EncoderParams& params, const RopeTable& rope,
                               const EncoderCache& cache, EncoderParams& grads) {
  AttnMode mode{false, &rope, &coords};
  Matrix d_x = ln_rows_backward(d_out, cache.lnf, params.lnf_gain, grads.lnf_gain, grads.lnf_bias);
  for (std::size_t l = params.blocks.size(); l-- > 0;)
    d_x = block_backward(d_x, params.blocks[l], params.config.heads, mode, cache.blocks[l],
                         grads.blocks[l]);
  return d_x;
}

}  // namespace unipatch
