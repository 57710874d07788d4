// SPDX-License-Identifier: Apache-2.0
#pragma once

// Sequence fusion and the toy causal decoder. Projected visual tokens are
// spliced into the text stream at a single image placeholder, and a small
// decoder-only transformer predicts the next token from all preceding visual
// and textual positions. The tokenizer is a byte-level stub: 256 byte values
// plus four specials.

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "unipatch/tensors.hpp"
#include "unipatch/transformer.hpp"

namespace unipatch {
namespace tok {

inline constexpr int kPad = 256;
inline constexpr int kBos = 257;
inline constexpr int kEos = 258;
inline constexpr int kImage = 259;
inline constexpr int kVocab = 260;

inline std::vector<int> encode(std::string_view text) {
  std::vector<int> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(static_cast<int>(c));
  return ids;
}

// Byte ids map back to bytes; specials are dropped.
inline std::string decode(const std::vector<int>& ids) {
  std::string out;
  out.reserve(ids.size());
  for (int id : ids)
    if (id >= 0 && id < 256) out.push_back(static_cast<char>(id));
  return out;
}

}  // namespace tok

struct DecoderConfig {
  int layers = 2;
  int d_model = 12;
  int d_mlp = 24;
  int heads = 2;
  int vocab = tok::kVocab;
  int max_pos = 64;

  void validate() const {
    if (layers < 0 || d_model < 1 || d_mlp < 1 || heads < 1 || vocab < 1 || max_pos < 1)
      throw ConfigError("decoder: sizes must be positive");
    if (d_model % heads != 0) throw ConfigError("decoder: d_model not divisible by heads");
  }
};

// Toy decoder weights: token embedding table (tied with the output head),
// learned absolute positions, and the causal block stack.
struct DecoderParams {
  DecoderConfig config;
  Matrix embed;  // vocab x d_model
  Matrix pos;    // max_pos x d_model
  std::vector<BlockParams> blocks;
  Vec lnf_gain, lnf_bias;
};

inline DecoderParams init_decoder(const DecoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  auto fill = [&rng](Matrix& m) {
    for (double& x : m.data) x = rng.normal(0.0, 0.02);
  };
  DecoderParams p;
  p.config = config;
  p.embed = Matrix(config.vocab, config.d_model);
  fill(p.embed);
  p.pos = Matrix(config.max_pos, config.d_model);
  fill(p.pos);
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

inline DecoderParams zeros_like(const DecoderParams& p) {
  DecoderParams z;
  z.config = p.config;
  z.embed = Matrix(p.embed.rows, p.embed.cols);
  z.pos = Matrix(p.pos.rows, p.pos.cols);
  for (const auto& b : p.blocks) z.blocks.push_back(zeros_like(b));
  z.lnf_gain.assign(p.lnf_gain.size(), 0.0);
  z.lnf_bias.assign(p.lnf_bias.size(), 0.0);
  return z;
}

inline std::vector<TensorRef> named_tensors(DecoderParams& p) {
  std::vector<TensorRef> refs;
  refs.push_back({"dec.embed", &p.embed, nullptr});
  refs.push_back({"dec.pos", &p.pos, nullptr});
  for (std::size_t l = 0; l < p.blocks.size(); ++l)
    append_block_tensors(refs, p.blocks[l], "dec.block" + std::to_string(l));
  refs.push_back({"dec.lnf.gain", nullptr, &p.lnf_gain});
  refs.push_back({"dec.lnf.bias", nullptr, &p.lnf_bias});
  return refs;
}

struct Segment {
  enum class Kind { Text, Visual };
  Kind kind = Kind::Text;
  // Visual provenance (plane, m, n) or text byte offset.
  int plane = -1;
  int m = -1;
  int n = -1;
  int byte_offset = -1;
};

struct VisualProvenance {
  int plane = 0;
  int m = 0;
  int n = 0;
};

// One fused decoder input: embeddings in layout order plus a segment map and
// the per-position token id (-1 at visual positions).
struct MixedSequence {
  Matrix embeddings;  // T x d_llm
  std::vector<Segment> segments;
  std::vector<int> token_ids;

  int length() const { return embeddings.rows; }
};

// Splices the visual rows into the text at the single image placeholder.
// Text positions take rows of the decoder embedding table.
inline MixedSequence assemble(const std::vector<int>& text_ids, const Matrix& visual,
                              const std::vector<VisualProvenance>& provenance,
                              const DecoderParams& params) {
  int placeholder = -1;
  for (std::size_t i = 0; i < text_ids.size(); ++i) {
    if (text_ids[i] == tok::kImage) {
      if (placeholder >= 0) throw ConfigError("assemble: multiple image placeholders");
      placeholder = static_cast<int>(i);
    }
  }
  if (placeholder < 0) throw ConfigError("assemble: layout has no image placeholder");
  if (visual.rows > 0 && visual.cols != params.config.d_model)
    throw ShapeError("assemble: visual width " + std::to_string(visual.cols) + " vs decoder width " +
                     std::to_string(params.config.d_model));
  if (!provenance.empty() && static_cast<int>(provenance.size()) != visual.rows)
    throw ShapeError("assemble: provenance count vs visual rows");

  const int t_total = static_cast<int>(text_ids.size()) - 1 + visual.rows;
  MixedSequence seq;
  seq.embeddings = Matrix(t_total, params.config.d_model);
  seq.segments.resize(static_cast<std::size_t>(t_total));
  seq.token_ids.assign(static_cast<std::size_t>(t_total), -1);

  int t = 0;
  for (std::size_t i = 0; i < text_ids.size(); ++i) {
    if (static_cast<int>(i) == placeholder) {
      for (int v = 0; v < visual.rows; ++v, ++t) {
        auto dst = seq.embeddings.row(t);
        auto src = visual.row(v);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j];
        Segment& s = seq.segments[static_cast<std::size_t>(t)];
        s.kind = Segment::Kind::Visual;
        if (!provenance.empty()) {
          s.plane = provenance[static_cast<std::size_t>(v)].plane;
          s.m = provenance[static_cast<std::size_t>(v)].m;
          s.n = provenance[static_cast<std::size_t>(v)].n;
        }
      }
      continue;
    }
    const int id = text_ids[i];
    if (id < 0 || id >= params.config.vocab) throw ConfigError("assemble: token id out of vocabulary");
    auto dst = seq.embeddings.row(t);
    auto src = params.embed.row(id);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j];
    Segment& s = seq.segments[static_cast<std::size_t>(t)];
    s.kind = Segment::Kind::Text;
    s.byte_offset = static_cast<int>(i);
    seq.token_ids[static_cast<std::size_t>(t)] = id;
    ++t;
  }
  return seq;
}

struct DecoderCache {
  Matrix x0;  // embeddings + positions
  std::vector<BlockCache> blocks;
  Matrix x_pre_lnf;
  LnCache lnf;
  Matrix x_final;
};

// Causal forward: logits row t is a function of positions <= t only, bitwise.
inline Matrix decoder_forward(const MixedSequence& seq, const DecoderParams& params,
                              DecoderCache* cache = nullptr) {
  const int t_total = seq.length();
  if (t_total < 1) throw ShapeError("decoder: empty sequence");
  if (seq.embeddings.cols != params.config.d_model)
    throw ShapeError("decoder: embedding width mismatch");
  if (t_total > params.config.max_pos)
    throw ShapeError("decoder: sequence length " + std::to_string(t_total) +
                     " exceeds position table " + std::to_string(params.config.max_pos));

  Matrix x = seq.embeddings;
  for (int t = 0; t < t_total; ++t) {
    auto row = x.row(t);
    auto pos = params.pos.row(t);
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += pos[j];
  }
  if (cache) cache->x0 = x;

  AttnMode mode{true, nullptr, nullptr};
  if (cache) cache->blocks.resize(params.blocks.size());
  for (std::size_t l = 0; l < params.blocks.size(); ++l)
    x = block_forward(x, params.blocks[l], params.config.heads, mode,
                      cache ? &cache->blocks[l] : nullptr);
  if (cache) cache->x_pre_lnf = x;
  Matrix x_final = ln_rows(x, params.lnf_gain, params.lnf_bias, cache ? &cache->lnf : nullptr);
  if (cache) cache->x_final = x_final;

  // Output head tied to the embedding table.
  Matrix logits(t_total, params.config.vocab);
  for (int t = 0; t < t_total; ++t)
    for (int v = 0; v < params.config.vocab; ++v) {
      double acc = 0.0;
      for (int j = 0; j < params.config.d_model; ++j) acc += x_final.at(t, j) * params.embed.at(v, j);
      logits.at(t, v) = acc;
    }
  return logits;
}

// Backward from d_logits to parameter grads plus the gradient with respect to
// the assembled input embeddings. Text rows additionally scatter into the
// embedding table (input side of the tied weights).
inline Matrix decoder_backward(const Matrix& d_logits, const MixedSequence& seq,
                               const DecoderParams& params, const DecoderCache& cache,
                               DecoderParams& grads) {
  const int t_total = seq.length();
  Matrix d_x_final(t_total, params.config.d_model);
  for (int t = 0; t < t_total; ++t)
    for (int v = 0; v < params.config.vocab; ++v) {
      const double g = d_logits.at(t, v);
      if (g == 0.0) continue;
      for (int j = 0; j < params.config.d_model; ++j) {
        d_x_final.at(t, j) += g * params.embed.at(v, j);
        grads.embed.at(v, j) += g * cache.x_final.at(t, j);
      }
    }

  Matrix d_x = ln_rows_backward(d_x_final, cache.lnf, params.lnf_gain, grads.lnf_gain, grads.lnf_bias);
  AttnMode mode{true, nullptr, nullptr};
  for (std::size_t l = params.blocks.size(); l-- > 0;)
    d_x = block_backward(d_x, params.blocks[l], params.config.heads, mode, cache.blocks[l],
                         grads.blocks[l]);

  // Position table and input-side embedding grads.
  for (int t = 0; t < t_total; ++t) {
    for (int j = 0; j < params.config.d_model; ++j) grads.pos.at(t, j) += d_x.at(t, j);
    const int id = seq.token_ids[static_cast<std::size_t>(t)];
    if (id >= 0)
      for (int j = 0; j < params.config.d_model; ++j) grads.embed.at(id, j) += d_x.at(t, j);
  }
  return d_x;
}

struct CrossEntropy {
  double loss = 0.0;
  Matrix d_logits;
};

// Mean cross-entropy over the scored positions (targets[t] >= 0). d_logits is
// already scaled by 1/scored so the returned pair is loss and its gradient.
inline CrossEntropy cross_entropy_rows(const Matrix& logits, const std::vector<int>& targets) {
  if (static_cast<int>(targets.size()) != logits.rows)
    throw ShapeError("cross_entropy: targets length vs logits rows");
  int scored = 0;
  for (int t : targets)
    if (t >= 0) ++scored;
  if (scored == 0) throw ConfigError("cross_entropy: no scored positions");

  CrossEntropy ce;
  ce.d_logits = Matrix(logits.rows, logits.cols);
  const double inv = 1.0 / scored;
  for (int i = 0; i < logits.rows; ++i) {
    const int target = targets[static_cast<std::size_t>(i)];
    if (target < 0) continue;
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < logits.cols; ++j) mx = std::max(mx, logits.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < logits.cols; ++j) sum += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(sum);
    ce.loss += (lse - logits.at(i, target)) * inv;
    for (int j = 0; j < logits.cols; ++j)
      ce.d_logits.at(i, j) = std::exp(logits.at(i, j) - lse) * inv;
    ce.d_logits.at(i, target) -= inv;
  }
  return ce;
}

struct CopyTaskConfig {
  DecoderConfig decoder;
  int batch = 32;
  int pattern_len = 3;
  int steps = 200;
  double lr = 0.1;
};

// Trains the toy decoder with plain full-batch gradient descent on a
// synthetic task: a run of visual tokens encodes a digit pattern and the
// model must emit the pattern's byte rendering followed by EOS. Returns the
// loss curve (entry 0 is the untrained loss, entry `steps` the final one).
inline std::vector<double> train_copy_task(const CopyTaskConfig& config, std::uint64_t seed) {
  config.decoder.validate();
  if (config.decoder.d_model < 10)
    throw ConfigError("copy task: decoder width must fit the 10 digit codes");
  DecoderParams params = init_decoder(config.decoder, seed);

  Rng data_rng(substream_seed(seed, 0xC0F1));
  struct Sample {
    std::vector<int> text_ids;
    Matrix visual;
    std::vector<int> targets;
  };
  std::vector<Sample> samples;
  const int k = config.pattern_len;
  for (int s = 0; s < config.batch; ++s) {
    Sample sample;
    sample.visual = Matrix(k, config.decoder.d_model);
    sample.text_ids = {tok::kBos, tok::kImage};
    for (int i = 0; i < k; ++i) {
      const int digit = data_rng.uniform_int(0, 9);
      sample.visual.at(i, digit) = 2.0;  // visual code for the digit
      sample.text_ids.push_back('0' + digit);
    }
    sample.text_ids.push_back(tok::kEos);
    // Positions: [bos][k visual][k digit bytes][eos]; score the predictions
    // of every text token that follows the visual span.
    const int t_total = 2 * k + 2;
    sample.targets.assign(static_cast<std::size_t>(t_total), -1);
    for (int t = k; t <= 2 * k; ++t) {
      const int next_text_index = t - k + 2;  // skip bos+placeholder in text_ids
      sample.targets[static_cast<std::size_t>(t)] = sample.text_ids[static_cast<std::size_t>(next_text_index)];
    }
    samples.push_back(std::move(sample));
  }

  std::vector<double> losses;
  const double batch_inv = 1.0 / config.batch;
  for (int step = 0; step <= config.steps; ++step) {
    DecoderParams grads = zeros_like(params);
    double loss = 0.0;
    for (const auto& sample : samples) {
      MixedSequence seq = assemble(sample.text_ids, sample.visual, {}, params);
      DecoderCache cache;
      Matrix logits = decoder_forward(seq, params, &cache);
      CrossEntropy ce = cross_entropy_rows(logits, sample.targets);
      loss += ce.loss * batch_inv;
      for (double& g : ce.d_logits.data) g *= batch_inv;
      decoder_backward(ce.d_logits, seq, params, cache, grads);
    }
    if (!std::isfinite(loss))
      throw NumericError("copy task diverged at step " + std::to_string(step));
    losses.push_back(loss);
    if (step == config.steps) break;

    auto prefs = named_tensors(params);
    auto grefs = named_tensors(grads);
    for (std::size_t i = 0; i < prefs.size(); ++i) {
      double* p = prefs[i].ptr();
      const double* g = grefs[i].ptr();
      for (std::size_t j = 0; j < prefs[i].size(); ++j) p[j] -= config.lr * g[j];
    }
  }
  return losses;
}

}  // namespace unipatch
