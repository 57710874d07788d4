// SPDX-License-Identifier: Apache-2.0
#pragma once

// Gradient-check probes: each builds a small scalar loss, computes its
// analytic gradient via the backward passes, and reports the worst relative
// error against the central-difference oracle. Desk-scale configs keep every
// check exhaustive over all parameter tensors.

#include <utility>
#include <vector>

#include "unipatch/encoder.hpp"
#include "unipatch/fusion.hpp"
#include "unipatch/projector.hpp"

namespace unipatch {

inline double grad_rel_err(const Vec& analytic, const Vec& numeric) {
  if (analytic.size() != numeric.size()) throw ShapeError("grad_rel_err: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({1.0, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

inline constexpr double kGradStep = 1e-5;

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t params = 0;
};

// Encoder: linear probe loss sum(C .* H) over all encoder parameters,
// including the patch embedding they share with the visual stream.
inline GradCheckResult encoder_gradcheck(std::uint64_t seed, int n_tokens = 6,
                                         EncoderConfig config = {2, 8, 16, 2}, int patch = 4) {
  Rng rng(substream_seed(seed, 0xE7C));
  Matrix patches(n_tokens, patch * patch);
  for (double& x : patches.data) x = rng.uniform();
  std::vector<std::pair<int, int>> coords;
  for (int i = 0; i < n_tokens; ++i) coords.emplace_back(rng.uniform_int(0, 6), rng.uniform_int(0, 6));
  Matrix probe(n_tokens, config.d_model);
  for (double& x : probe.data) x = rng.normal();

  EncoderParams params = init_params(config, seed, patch);
  const RopeTable rope = make_rope(config);
  auto refs = named_tensors(params);

  auto loss_at = [&](const Vec& theta) {
    EncoderParams local = params;
    auto local_refs = named_tensors(local);
    unflatten(theta, local_refs);
    Matrix tokens = affine(patches, local.w_embed, local.b_embed);
    Matrix h = encoder_run(tokens, coords, local, rope);
    double acc = 0.0;
    for (std::size_t i = 0; i < h.data.size(); ++i) acc += probe.data[i] * h.data[i];
    return acc;
  };

  // Analytic path.
  Matrix tokens = affine(patches, params.w_embed, params.b_embed);
  EncoderCache cache;
  encoder_run(tokens, coords, params, rope, &cache);
  EncoderParams grads = zeros_like(params);
  Matrix d_tokens = encoder_backward(probe, coords, params, rope, cache, grads);
  affine_backward(d_tokens, patches, params.w_embed, grads.w_embed, grads.b_embed);

  const Vec theta = flatten(refs);
  auto grad_refs = named_tensors(grads);
  GradCheckResult res;
  res.params = theta.size();
  res.max_rel_err = grad_rel_err(flatten(grad_refs), central_diff_grad(loss_at, theta, kGradStep));
  return res;
}

// Projector: linear probe loss over both MLP layers' weights and biases.
inline GradCheckResult projector_gradcheck(std::uint64_t seed, int n_rows = 5, int d_model = 8,
                                           int d_hidden = 16, int d_llm = 12) {
  Rng rng(substream_seed(seed, 0x960));
  Matrix h_v(n_rows, d_model);
  for (double& x : h_v.data) x = rng.normal();
  Matrix probe(n_rows, d_llm);
  for (double& x : probe.data) x = rng.normal();

  ProjectorParams params = init_projector(d_model, d_hidden, d_llm, seed);
  auto refs = named_tensors(params);
  auto loss_at = [&](const Vec& theta) {
    ProjectorParams local = params;
    auto local_refs = named_tensors(local);
    unflatten(theta, local_refs);
    Matrix out = project(h_v, local);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) acc += probe.data[i] * out.data[i];
    return acc;
  };

  ProjectorCache cache;
  project(h_v, params, &cache);
  ProjectorParams grads = zeros_like(params);
  project_backward(probe, params, cache, grads);

  const Vec theta = flatten(refs);
  auto grad_refs = named_tensors(grads);
  GradCheckResult res;
  res.params = theta.size();
  res.max_rel_err = grad_rel_err(flatten(grad_refs), central_diff_grad(loss_at, theta, kGradStep));
  return res;
}

// Decoder on a fused sequence: cross-entropy loss, gradients over all decoder
// tensors plus the visual span fed in from the projector side.
inline GradCheckResult decoder_gradcheck(std::uint64_t seed,
                                         DecoderConfig config = {2, 12, 24, 2, tok::kVocab, 32}) {
  Rng rng(substream_seed(seed, 0xDEC));
  DecoderParams params = init_decoder(config, seed);
  Matrix visual(3, config.d_model);
  for (double& x : visual.data) x = rng.normal();
  std::vector<int> text_ids = {tok::kBos, 'Q', tok::kImage, 'A', tok::kEos};
  // Score the two predictions that close the answer span.
  auto targets_for = [&](int t_total) {
    std::vector<int> targets(static_cast<std::size_t>(t_total), -1);
    targets[static_cast<std::size_t>(t_total - 3)] = 'A';
    targets[static_cast<std::size_t>(t_total - 2)] = tok::kEos;
    return targets;
  };

  auto prefs = named_tensors(params);
  std::vector<TensorRef> refs = prefs;
  refs.push_back({"probe.visual", &visual, nullptr});

  auto loss_at = [&](const Vec& theta) {
    DecoderParams local = params;
    Matrix local_visual = visual;
    auto local_refs = named_tensors(local);
    local_refs.push_back({"probe.visual", &local_visual, nullptr});
    unflatten(theta, local_refs);
    MixedSequence seq = assemble(text_ids, local_visual, {}, local);
    Matrix logits = decoder_forward(seq, local);
    return cross_entropy_rows(logits, targets_for(seq.length())).loss;
  };

  MixedSequence seq = assemble(text_ids, visual, {}, params);
  DecoderCache cache;
  Matrix logits = decoder_forward(seq, params, &cache);
  CrossEntropy ce = cross_entropy_rows(logits, targets_for(seq.length()));
  DecoderParams grads = zeros_like(params);
  Matrix d_emb = decoder_backward(ce.d_logits, seq, params, cache, grads);

  Matrix d_visual(visual.rows, visual.cols);
  int v_row = 0;
  for (int t = 0; t < seq.length(); ++t)
    if (seq.segments[static_cast<std::size_t>(t)].kind == Segment::Kind::Visual) {
      for (int j = 0; j < visual.cols; ++j) d_visual.at(v_row, j) = d_emb.at(t, j);
      ++v_row;
    }

  auto grefs = named_tensors(grads);
  std::vector<TensorRef> grad_refs = grefs;
  grad_refs.push_back({"probe.visual", &d_visual, nullptr});

  const Vec theta = flatten(refs);
  GradCheckResult res;
  res.params = theta.size();
  res.max_rel_err = grad_rel_err(flatten(grad_refs), central_diff_grad(loss_at, theta, kGradStep));
  return res;
}

// Full composite: pixels -> patch embedding -> encoder -> projector ->
// fused decoder -> cross-entropy. One gradient vector over every parameter of
// all three stages.
inline GradCheckResult composite_gradcheck(std::uint64_t seed) {
  const EncoderConfig enc_cfg{2, 8, 16, 2};
  const int patch = 4;
  const DecoderConfig dec_cfg{2, 12, 24, 2, tok::kVocab, 32};
  const int d_hidden = 16;

  Rng rng(substream_seed(seed, 0xF05));
  PixelPlane plane(8, 8);
  for (double& v : plane.pix) v = rng.uniform();
  const PatchGrid grid = patchify(plane, patch);  // 4 tokens

  EncoderParams enc = init_params(enc_cfg, seed, patch);
  ProjectorParams proj = init_projector(enc_cfg.d_model, d_hidden, dec_cfg.d_model,
                                        substream_seed(seed, 0x9107));
  DecoderParams dec = init_decoder(dec_cfg, substream_seed(seed, 0xD3C));
  const RopeTable rope = make_rope(enc_cfg);

  std::vector<int> text_ids = {tok::kBos, 'Q', ':', tok::kImage, 'A', tok::kEos};
  auto targets_for = [&](int t_total) {
    std::vector<int> targets(static_cast<std::size_t>(t_total), -1);
    targets[static_cast<std::size_t>(t_total - 3)] = 'A';
    targets[static_cast<std::size_t>(t_total - 2)] = tok::kEos;
    return targets;
  };

  auto all_refs = [&](EncoderParams& e, ProjectorParams& p, DecoderParams& d) {
    std::vector<TensorRef> refs = named_tensors(e);
    auto pr = named_tensors(p);
    auto dr = named_tensors(d);
    refs.insert(refs.end(), pr.begin(), pr.end());
    refs.insert(refs.end(), dr.begin(), dr.end());
    return refs;
  };

  auto forward_loss = [&](EncoderParams& e, ProjectorParams& p, DecoderParams& d) {
    Matrix tokens = affine(grid.patches, e.w_embed, e.b_embed);
    Matrix h_v = encoder_run(tokens, grid.coords, e, rope);
    Matrix h_proj = project(h_v, p);
    MixedSequence seq = assemble(text_ids, h_proj, {}, d);
    Matrix logits = decoder_forward(seq, d);
    return cross_entropy_rows(logits, targets_for(seq.length())).loss;
  };

  auto loss_at = [&](const Vec& theta) {
    EncoderParams e = enc;
    ProjectorParams p = proj;
    DecoderParams d = dec;
    auto refs = all_refs(e, p, d);
    unflatten(theta, refs);
    return forward_loss(e, p, d);
  };

  // Analytic chain.
  Matrix tokens = affine(grid.patches, enc.w_embed, enc.b_embed);
  EncoderCache enc_cache;
  Matrix h_v = encoder_run(tokens, grid.coords, enc, rope, &enc_cache);
  ProjectorCache proj_cache;
  Matrix h_proj = project(h_v, proj, &proj_cache);
  MixedSequence seq = assemble(text_ids, h_proj, {}, dec);
  DecoderCache dec_cache;
  Matrix logits = decoder_forward(seq, dec, &dec_cache);
  CrossEntropy ce = cross_entropy_rows(logits, targets_for(seq.length()));

  EncoderParams enc_g = zeros_like(enc);
  ProjectorParams proj_g = zeros_like(proj);
  DecoderParams dec_g = zeros_like(dec);
  Matrix d_emb = decoder_backward(ce.d_logits, seq, dec, dec_cache, dec_g);
  Matrix d_h_proj(h_proj.rows, h_proj.cols);
  int v_row = 0;
  for (int t = 0; t < seq.length(); ++t)
    if (seq.segments[static_cast<std::size_t>(t)].kind == Segment::Kind::Visual) {
      for (int j = 0; j < h_proj.cols; ++j) d_h_proj.at(v_row, j) = d_emb.at(t, j);
      ++v_row;
    }
  Matrix d_h_v = project_backward(d_h_proj, proj, proj_cache, proj_g);
  Matrix d_tokens = encoder_backward(d_h_v, grid.coords, enc, rope, enc_cache, enc_g);
  affine_backward(d_tokens, grid.patches, enc.w_embed, enc_g.w_embed, enc_g.b_embed);

  auto refs = all_refs(enc, proj, dec);
  auto grad_refs = all_refs(enc_g, proj_g, dec_g);
  const Vec theta = flatten(refs);
  GradCheckResult res;
  res.params = theta.size();
  res.max_rel_err = grad_rel_err(flatten(grad_refs), central_diff_grad(loss_at, theta, kGradStep));
  return res;
}

}  // namespace unipatch
