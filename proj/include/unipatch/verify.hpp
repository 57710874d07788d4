// SPDX-License-Identifier: Apache-2.0
#pragma once

// Cross-module verification harness: every module invariant as a seeded
// property suite, runnable as one command. Suites own independent random
// streams derived from the master seed, so running them in parallel cannot
// change any outcome.

#include <functional>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "unipatch/pipeline.hpp"
#include "unipatch/probes.hpp"
#include "unipatch/synth.hpp"

namespace unipatch {

inline constexpr int kPropertyTrials = 1000;

struct PropertyResult {
  std::string name;
  long checks = 0;
  long failures = 0;
};

struct SuiteResult {
  std::string name;
  std::vector<PropertyResult> properties;
  double ms = 0.0;

  long checks() const {
    long n = 0;
    for (const auto& p : properties) n += p.checks;
    return n;
  }
  long failures() const {
    long n = 0;
    for (const auto& p : properties) n += p.failures;
    return n;
  }
};

// Relative-position property of 2D RoPE, parameterized over the apply
// function so a deliberately broken variant can prove the check has teeth.
template <typename ApplyFn>
inline PropertyResult rope_relative_position_property(ApplyFn&& apply, int d, int trials, double tol,
                                                      Rng& rng) {
  PropertyResult res{"relative_position_d" + std::to_string(d), 0, 0};
  const RopeTable table = RopeTable::build(d, 64);
  for (int t = 0; t < trials; ++t) {
    PositionedVector q, k;
    q.values.resize(static_cast<std::size_t>(d));
    k.values.resize(static_cast<std::size_t>(d));
    for (double& x : q.values) x = rng.normal();
    for (double& x : k.values) x = rng.normal();
    q.m = rng.uniform_int(0, 20);
    q.n = rng.uniform_int(0, 20);
    k.m = rng.uniform_int(0, 20);
    k.n = rng.uniform_int(0, 20);
    const int s = rng.uniform_int(-10, 10);
    const int tt = rng.uniform_int(-10, 10);

    auto dot_at = [&](int qm, int qn, int km, int kn) {
      PositionedVector qq{q.values, qm, qn};
      PositionedVector kk{k.values, km, kn};
      const Vec qr = apply(qq, table);
      const Vec kr = apply(kk, table);
      double acc = 0.0;
      for (std::size_t i = 0; i < qr.size(); ++i) acc += qr[i] * kr[i];
      return acc;
    };
    const double base = dot_at(q.m, q.n, k.m, k.n);
    const double shifted = dot_at(q.m + s, q.n + tt, k.m + s, k.n + tt);
    ++res.checks;
    if (std::abs(base - shifted) >= tol) ++res.failures;
  }
  return res;
}

namespace suites {

inline SuiteResult numkit(std::uint64_t seed) {
  SuiteResult suite{"numkit", {}, 0.0};
  {
    Rng rng(substream_seed(seed, 1));
    PropertyResult p{"matmul_associative", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const int a = rng.uniform_int(1, 5), b = rng.uniform_int(1, 5), c = rng.uniform_int(1, 5),
                d = rng.uniform_int(1, 5);
      Matrix ma(a, b), mb(b, c), mc(c, d);
      for (double& x : ma.data) x = rng.uniform(-1.0, 1.0);
      for (double& x : mb.data) x = rng.uniform(-1.0, 1.0);
      for (double& x : mc.data) x = rng.uniform(-1.0, 1.0);
      ++p.checks;
      if (max_abs_diff(matmul(matmul(ma, mb), mc), matmul(ma, matmul(mb, mc))) >= 1e-10) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 2));
    PropertyResult p{"softmax_rows_sum_to_one", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      Matrix m(rng.uniform_int(1, 6), rng.uniform_int(1, 8));
      for (double& x : m.data) x = rng.uniform(-1e3, 1e3);
      const Matrix sm = softmax_rows(m);
      bool ok = true;
      for (int i = 0; i < sm.rows; ++i) {
        double sum = 0.0;
        for (int j = 0; j < sm.cols; ++j) {
          if (sm.at(i, j) < 0.0) ok = false;
          sum += sm.at(i, j);
        }
        if (std::abs(sum - 1.0) >= 1e-12) ok = false;
      }
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 3));
    PropertyResult p{"gelu_odd_cancellation", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const double x = rng.uniform(-20.0, 20.0);
      ++p.checks;
      if (std::abs(gelu(x) - gelu(-x) - x) >= 1e-10) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  return suite;
}

inline SuiteResult vistream(std::uint64_t seed) {
  SuiteResult suite{"vistream", {}, 0.0};
  {
    Rng rng(substream_seed(seed, 10));
    PropertyResult p{"patch_roundtrip", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const int h = rng.uniform_int(1, 40), w = rng.uniform_int(1, 40);
      const int patch = std::vector<int>{2, 3, 4, 16}[static_cast<std::size_t>(rng.uniform_int(0, 3))];
      PixelPlane plane(h, w);
      for (double& v : plane.pix) v = rng.uniform();
      const PatchGrid g = patchify(plane, patch);
      bool ok = true;
      for (int row = 0; row < g.patches.rows && ok; ++row) {
        const auto [m, n] = g.coords[static_cast<std::size_t>(row)];
        for (int r = 0; r < patch && ok; ++r)
          for (int c = 0; c < patch; ++c) {
            const int pr = m * patch + r, pc = n * patch + c;
            const double want = (pr < h && pc < w) ? plane.at(pr, pc) : 0.0;
            if (g.patches.at(row, r * patch + c) != want) {
              ok = false;
              break;
            }
          }
      }
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    PropertyResult p{"patch_count_formula", 0, 0};
    PixelPlane plane(100, 100, 0.5);
    for (int h = 1; h <= 100; ++h)
      for (int w = 1; w <= 100; ++w) {
        PixelPlane sub(h, w);
        for (int r = 0; r < h; ++r)
          for (int c = 0; c < w; ++c) sub.at(r, c) = plane.at(r, c);
        const PatchGrid g = patchify(sub, 16);
        ++p.checks;
        if (g.grid_h * g.grid_w != ((h + 15) / 16) * ((w + 15) / 16)) ++p.failures;
      }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 11));
    PropertyResult p{"decompose_patchify_commutes", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      VisualInput input;
      input.kind = rng.uniform() < 0.5 ? SourceKind::Volume3D : SourceKind::Video;
      input.height = rng.uniform_int(4, 24);
      input.width = rng.uniform_int(4, 24);
      const int n_planes = rng.uniform_int(2, 4);
      for (int i = 0; i < n_planes; ++i) {
        PixelPlane plane(input.height, input.width);
        for (double& v : plane.pix) v = rng.uniform();
        input.planes.push_back(std::move(plane));
      }
      const RawPlaneSequence seq = decompose(input);
      bool ok = seq.planes.size() == input.planes.size();
      for (std::size_t i = 0; ok && i < seq.planes.size(); ++i) {
        const PatchGrid a = patchify(seq.planes[i], 4);
        const PatchGrid b = patchify(input.planes[i], 4);
        ok = a.coords == b.coords && max_abs_diff(a.patches, b.patches) == 0.0;
      }
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  return suite;
}

inline SuiteResult rope2d(std::uint64_t seed) {
  SuiteResult suite{"rope2d", {}, 0.0};
  for (int d : {4, 8, 64}) {
    Rng rng(substream_seed(seed, 20 + static_cast<std::uint64_t>(d)));
    suite.properties.push_back(rope_relative_position_property(
        [](const PositionedVector& v, const RopeTable& t) { return apply_rope2d(v, t); }, d,
        kPropertyTrials, 1e-9, rng));
  }
  {
    Rng rng(substream_seed(seed, 21));
    PropertyResult p{"norm_preservation", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const int d = std::vector<int>{4, 8, 16, 64}[static_cast<std::size_t>(rng.uniform_int(0, 3))];
      const RopeTable table = RopeTable::build(d, 64);
      PositionedVector v;
      v.values.resize(static_cast<std::size_t>(d));
      for (double& x : v.values) x = rng.normal();
      v.m = rng.uniform_int(0, 50);
      v.n = rng.uniform_int(0, 50);
      const Vec rotated = apply_rope2d(v, table);
      double n0 = 0.0, n1 = 0.0;
      for (std::size_t i = 0; i < rotated.size(); ++i) {
        n0 += v.values[i] * v.values[i];
        n1 += rotated[i] * rotated[i];
      }
      ++p.checks;
      if (std::abs(std::sqrt(n0) - std::sqrt(n1)) >= 1e-12) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 22));
    PropertyResult p{"rotation_composition", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const int d = std::vector<int>{4, 8, 16}[static_cast<std::size_t>(rng.uniform_int(0, 2))];
      const RopeTable table = RopeTable::build(d, 128);
      Vec v(static_cast<std::size_t>(d));
      for (double& x : v) x = rng.normal();
      const int m1 = rng.uniform_int(0, 30), n1 = rng.uniform_int(0, 30);
      const int m2 = rng.uniform_int(0, 30), n2 = rng.uniform_int(0, 30);
      Vec two_step = v;
      rope_rotate_inplace(two_step, m1, n1, table);
      rope_rotate_inplace(two_step, m2, n2, table);
      Vec one_step = v;
      rope_rotate_inplace(one_step, m1 + m2, n1 + n2, table);
      double worst = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i)
        worst = std::max(worst, std::abs(two_step[i] - one_step[i]));
      ++p.checks;
      if (worst >= 1e-10) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 23));
    PropertyResult p{"identity_at_origin", 0, 0};
    const RopeTable table = RopeTable::build(8, 16);
    for (int t = 0; t < kPropertyTrials; ++t) {
      PositionedVector v;
      v.values.resize(8);
      for (double& x : v.values) x = rng.normal();
      v.m = 0;
      v.n = 0;
      const Vec rotated = apply_rope2d(v, table);
      ++p.checks;
      if (rotated != v.values) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  return suite;
}

// Random token sequence whose site distances cluster around tau so threshold
// behavior actually gets exercised.
inline PlaneSequence random_token_sequence(Rng& rng, int max_planes = 4, int max_grid = 3,
                                           int max_d = 8) {
  PlaneSequence seq;
  seq.source_kind = rng.uniform() < 0.5 ? SourceKind::Volume3D : SourceKind::Video;
  const int gh = rng.uniform_int(1, max_grid), gw = rng.uniform_int(1, max_grid);
  const int d = rng.uniform_int(1, max_d);
  const int planes = rng.uniform_int(2, max_planes);
  for (int p = 0; p < planes; ++p) {
    TokenPlane plane;
    plane.grid_h = gh;
    plane.grid_w = gw;
    plane.tokens = Matrix(gh * gw, d);
    for (int m = 0; m < gh; ++m)
      for (int n = 0; n < gw; ++n) plane.coords.emplace_back(m, n);
    if (p == 0) {
      for (double& x : plane.tokens.data) x = rng.uniform(-1.0, 1.0);
    } else {
      const Matrix& prev = seq.planes.back().tokens;
      for (int s = 0; s < plane.tokens.rows; ++s) {
        const double kind = rng.uniform();
        for (int j = 0; j < d; ++j) {
          if (kind < 0.25)
            plane.tokens.at(s, j) = prev.at(s, j);  // exact duplicate site
          else if (kind < 0.65)
            plane.tokens.at(s, j) = prev.at(s, j) + rng.uniform(-0.2, 0.2);  // near tau
          else
            plane.tokens.at(s, j) = rng.uniform(-1.0, 1.0);
        }
      }
    }
    seq.planes.push_back(std::move(plane));
    seq.plane_index.push_back(p);
  }
  return seq;
}

// Brute-force prune oracle: recompute every site distance directly.
inline std::vector<std::vector<std::uint8_t>> prune_oracle(const PlaneSequence& seq, double tau) {
  std::vector<std::vector<std::uint8_t>> keep;
  for (std::size_t p = 0; p < seq.planes.size(); ++p) {
    const int sites = seq.planes[p].tokens.rows;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(sites), 1);
    if (p > 0) {
      const int d = seq.planes[p].tokens.cols;
      for (int s = 0; s < sites; ++s) {
        double acc = 0.0;
        for (int j = 0; j < d; ++j)
          acc += std::abs(seq.planes[p].tokens.at(s, j) - seq.planes[p - 1].tokens.at(s, j));
        if (acc / d <= tau) mask[static_cast<std::size_t>(s)] = 0;
      }
    }
    keep.push_back(std::move(mask));
  }
  return keep;
}

inline SuiteResult tokred(std::uint64_t seed) {
  SuiteResult suite{"tokred", {}, 0.0};
  {
    Rng rng(substream_seed(seed, 30));
    PropertyResult p{"tau_monotone_mask_subset", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const PlaneSequence seq = random_token_sequence(rng);
      double t1 = rng.uniform(0.0, 0.3), t2 = rng.uniform(0.0, 0.3);
      if (t1 > t2) std::swap(t1, t2);
      const auto r1 = prune_interplane(seq, t1);
      const auto r2 = prune_interplane(seq, t2);
      bool ok = true;
      for (std::size_t pl = 0; pl < seq.planes.size(); ++pl)
        for (std::size_t s = 0; s < r1.seq.keep[pl].size(); ++s)
          if (!r1.seq.keep[pl][s] && r2.seq.keep[pl][s]) ok = false;  // pruned at t1 must stay pruned
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 31));
    PropertyResult p{"tau_extremes", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const PlaneSequence seq = random_token_sequence(rng);
      const auto r0 = prune_interplane(seq, 0.0);
      bool ok = true;
      // tau = 0 prunes exactly the token-identical adjacent sites.
      for (std::size_t pl = 1; pl < seq.planes.size(); ++pl)
        for (int s = 0; s < seq.planes[pl].tokens.rows; ++s) {
          bool identical = true;
          for (int j = 0; j < seq.planes[pl].tokens.cols; ++j)
            if (seq.planes[pl].tokens.at(s, j) != seq.planes[pl - 1].tokens.at(s, j)) {
              identical = false;
              break;
            }
          if (identical == static_cast<bool>(r0.seq.keep[pl][static_cast<std::size_t>(s)])) ok = false;
        }
      // tau -> inf keeps exactly plane 0.
      const auto rinf = prune_interplane(seq, 1e12);
      for (std::size_t pl = 0; pl < seq.planes.size(); ++pl)
        for (auto kept : rinf.seq.keep[pl])
          if (static_cast<bool>(kept) != (pl == 0)) ok = false;
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 32));
    PropertyResult p{"count_reconciliation", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const PlaneSequence seq = random_token_sequence(rng, 4, 5, 6);
      const auto res = reduce_pipeline(seq, rng.uniform(0.0, 0.2));
      long before = 0;
      for (const auto& plane : seq.planes) before += plane.tokens.rows;
      const long merged_sites = static_cast<long>(seq.planes.size()) *
                                (((seq.planes[0].grid_h + 1) / 2) * ((seq.planes[0].grid_w + 1) / 2));
      long per_plane_pruned = 0, per_plane_kept = 0;
      for (const auto& pc : res.report.per_plane) {
        per_plane_pruned += pc.pruned;
        per_plane_kept += pc.kept;
      }
      bool ok = res.report.total_before == before && res.report.stage2_input() == merged_sites &&
                res.report.total_after == merged_sites - res.report.pruned &&
                per_plane_pruned == res.report.pruned && per_plane_kept == res.report.total_after &&
                res.report.rate >= 0.0 && res.report.rate <= 1.0;
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 33));
    PropertyResult p{"merge_mean_and_affine_equivariance", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      TokenPlane plane;
      plane.grid_h = rng.uniform_int(1, 5);
      plane.grid_w = rng.uniform_int(1, 5);
      const int d = rng.uniform_int(1, 6);
      plane.tokens = Matrix(plane.grid_h * plane.grid_w, d);
      for (int m = 0; m < plane.grid_h; ++m)
        for (int n = 0; n < plane.grid_w; ++n) plane.coords.emplace_back(m, n);
      bool ok = true;
      {
        // Identical tokens: merge reproduces the token.
        TokenPlane uniform = plane;
        Vec tokval(static_cast<std::size_t>(d));
        for (double& x : tokval) x = rng.uniform(-2.0, 2.0);
        for (int s = 0; s < uniform.tokens.rows; ++s)
          for (int j = 0; j < d; ++j) uniform.tokens.at(s, j) = tokval[static_cast<std::size_t>(j)];
        TokenPlane merged = merge_2x2(uniform);
        for (int s = 0; s < merged.tokens.rows; ++s)
          for (int j = 0; j < d; ++j)
            if (std::abs(merged.tokens.at(s, j) - tokval[static_cast<std::size_t>(j)]) >= 1e-12) ok = false;
      }
      {
        for (double& x : plane.tokens.data) x = rng.uniform(-1.0, 1.0);
        const double a = rng.uniform(-2.0, 2.0), b = rng.uniform(-2.0, 2.0);
        TokenPlane scaled = plane;
        for (double& x : scaled.tokens.data) x = a * x + b;
        TokenPlane lhs = merge_2x2(scaled);
        TokenPlane rhs = merge_2x2(plane);
        for (double& x : rhs.tokens.data) x = a * x + b;
        if (max_abs_diff(lhs.tokens, rhs.tokens) >= 1e-12) ok = false;
      }
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 34));
    PropertyResult p{"prune_oracle_equivalence", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const PlaneSequence seq = random_token_sequence(rng, 4, 3, 8);
      const double tau = rng.uniform(0.0, 0.25);
      const auto res = prune_interplane(seq, tau);
      ++p.checks;
      if (res.seq.keep != prune_oracle(seq, tau)) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  return suite;
}

// Small in-memory input for pipeline-level properties.
inline VisualInput small_input(Rng& rng, SourceKind kind) {
  VisualInput input;
  input.kind = kind;
  input.height = 32;
  input.width = 32;
  const int n_planes = kind == SourceKind::Image2D ? 1 : rng.uniform_int(2, 3);
  for (int i = 0; i < n_planes; ++i) {
    PixelPlane plane(input.height, input.width);
    for (double& v : plane.pix) v = rng.uniform();
    input.planes.push_back(std::move(plane));
  }
  return input;
}

inline PipelineConfig small_config(std::uint64_t seed) {
  PipelineConfig config;
  config.patch = 16;
  config.encoder = {1, 8, 16, 2};
  config.d_hidden = 16;
  config.d_llm = 12;
  config.seed = seed;
  return config;
}

inline SuiteResult encoder(std::uint64_t seed) {
  SuiteResult suite{"encoder", {}, 0.0};
  {
    Rng rng(substream_seed(seed, 40));
    PropertyResult p{"modality_shape_universality", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const SourceKind kind = std::vector<SourceKind>{
          SourceKind::Image2D, SourceKind::Volume3D,
          SourceKind::Video}[static_cast<std::size_t>(t % 3)];
      const VisualInput input = small_input(rng, kind);
      PipelineConfig config = small_config(seed + static_cast<std::uint64_t>(t));
      config.kind = kind;
      const PipelineRun run = run_pipeline_on(input, config);
      ++p.checks;
      if (run.h_v.cols != config.encoder.d_model || run.h_proj.cols != config.d_llm ||
          run.h_v.rows != run.report.total_after || run.h_proj.rows != run.h_v.rows)
        ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    PropertyResult p{"gradient_correctness", 0, 0};
    for (std::uint64_t s = 0; s < 3; ++s) {
      ++p.checks;
      if (encoder_gradcheck(substream_seed(seed, 41 + s)).max_rel_err >= 1e-5) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 44));
    PropertyResult p{"rope_shift_leaves_attention_invariant", 0, 0};
    const EncoderConfig config{1, 8, 16, 2};
    const EncoderParams params = init_params(config, seed);
    const RopeTable rope = make_rope(config);
    for (int t = 0; t < kPropertyTrials; ++t) {
      const int n = rng.uniform_int(2, 6);
      Matrix tokens(n, config.d_model);
      for (double& x : tokens.data) x = rng.normal();
      std::vector<std::pair<int, int>> coords, shifted;
      const int s = rng.uniform_int(0, 40), tt = rng.uniform_int(0, 40);
      for (int i = 0; i < n; ++i) {
        coords.emplace_back(rng.uniform_int(0, 10), rng.uniform_int(0, 10));
        shifted.emplace_back(coords.back().first + s, coords.back().second + tt);
      }
      BlockCache c0, c1;
      attention_block(tokens, params.blocks[0], config.heads, {false, &rope, &coords}, &c0);
      attention_block(tokens, params.blocks[0], config.heads, {false, &rope, &shifted}, &c1);
      double worst = 0.0;
      for (std::size_t h = 0; h < c0.probs.size(); ++h)
        worst = std::max(worst, max_abs_diff(c0.probs[h], c1.probs[h]));
      ++p.checks;
      if (worst >= 1e-9) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 45));
    PropertyResult p{"forward_determinism", 0, 0};
    const EncoderConfig config{2, 8, 16, 2};
    const RopeTable rope = make_rope(config);
    for (int t = 0; t < 100; ++t) {
      const EncoderParams params = init_params(config, seed + static_cast<std::uint64_t>(t));
      const EncoderParams params2 = init_params(config, seed + static_cast<std::uint64_t>(t));
      const int n = rng.uniform_int(1, 8);
      Matrix tokens(n, config.d_model);
      for (double& x : tokens.data) x = rng.normal();
      std::vector<std::pair<int, int>> coords;
      for (int i = 0; i < n; ++i) coords.emplace_back(rng.uniform_int(0, 6), rng.uniform_int(0, 6));
      const Matrix h1 = encoder_run(tokens, coords, params, rope);
      const Matrix h2 = encoder_run(tokens, coords, params2, rope);
      ++p.checks;
      if (h1.data != h2.data) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  return suite;
}

inline SuiteResult projector(std::uint64_t seed) {
  SuiteResult suite{"projector", {}, 0.0};
  {
    Rng rng(substream_seed(seed, 50));
    PropertyResult p{"row_independence", 0, 0};
    const ProjectorParams params = init_projector(8, 16, 12, seed);
    for (int t = 0; t < kPropertyTrials; ++t) {
      const int n = rng.uniform_int(1, 6);
      Matrix h(n, 8);
      for (double& x : h.data) x = rng.normal();
      const Matrix batch = project(h, params);
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        Matrix single(1, 8);
        for (int j = 0; j < 8; ++j) single.at(0, j) = h.at(i, j);
        const Matrix row = project(single, params);
        for (int j = 0; j < row.cols; ++j)
          if (std::abs(row.at(0, j) - batch.at(i, j)) >= 1e-12) ok = false;
      }
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 51));
    PropertyResult p{"output_width_is_dllm_for_every_modality", 0, 0};
    for (int t = 0; t < 333; ++t)
      for (SourceKind kind : {SourceKind::Image2D, SourceKind::Volume3D, SourceKind::Video}) {
        const VisualInput input = small_input(rng, kind);
        PipelineConfig config = small_config(seed + static_cast<std::uint64_t>(t));
        config.kind = kind;
        const PipelineRun run = run_pipeline_on(input, config);
        ++p.checks;
        if (run.h_proj.cols != config.d_llm) ++p.failures;
      }
    suite.properties.push_back(p);
  }
  return suite;
}

inline SuiteResult fusion(std::uint64_t seed) {
  SuiteResult suite{"fusion", {}, 0.0};
  {
    Rng rng(substream_seed(seed, 60));
    PropertyResult p{"decoder_causality_bitwise", 0, 0};
    const DecoderConfig config{2, 12, 24, 2, tok::kVocab, 32};
    const DecoderParams params = init_decoder(config, seed);
    for (int t = 0; t < kPropertyTrials; ++t) {
      Matrix visual(rng.uniform_int(1, 3), config.d_model);
      for (double& x : visual.data) x = rng.normal();
      std::vector<int> text_ids = {tok::kBos, tok::kImage};
      const int extra = rng.uniform_int(1, 4);
      for (int i = 0; i < extra; ++i) text_ids.push_back(rng.uniform_int(0, 255));
      MixedSequence seq = assemble(text_ids, visual, {}, params);
      const Matrix base = decoder_forward(seq, params);
      const int t_total = seq.length();
      const int cut = rng.uniform_int(0, t_total - 2);  // perturb somewhere after `cut`
      const int victim = rng.uniform_int(cut + 1, t_total - 1);
      MixedSequence perturbed = seq;
      perturbed.embeddings.at(victim, rng.uniform_int(0, config.d_model - 1)) += rng.normal();
      const Matrix mod = decoder_forward(perturbed, params);
      bool ok = true;
      for (int i = 0; i <= cut && ok; ++i)
        for (int j = 0; j < base.cols; ++j)
          if (base.at(i, j) != mod.at(i, j)) {
            ok = false;
            break;
          }
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 61));
    PropertyResult p{"tokenizer_roundtrip", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const int len = rng.uniform_int(0, 64);
      std::string s;
      for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(rng.uniform_int(0, 255)));
      ++p.checks;
      if (tok::decode(tok::encode(s)) != s) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    PropertyResult p{"composite_gradient", 0, 0};
    for (std::uint64_t s = 0; s < 2; ++s) {
      ++p.checks;
      if (composite_gradcheck(substream_seed(seed, 62 + s)).max_rel_err >= 1e-5) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  return suite;
}

inline SuiteResult report(std::uint64_t seed) {
  SuiteResult suite{"report", {}, 0.0};
  {
    Rng rng(substream_seed(seed, 70));
    PropertyResult p{"report_arithmetic_reconciles", 0, 0};
    for (int t = 0; t < kPropertyTrials; ++t) {
      const SourceKind kind = std::vector<SourceKind>{
          SourceKind::Image2D, SourceKind::Volume3D,
          SourceKind::Video}[static_cast<std::size_t>(t % 3)];
      const VisualInput input = small_input(rng, kind);
      PipelineConfig config = small_config(seed + static_cast<std::uint64_t>(t));
      config.kind = kind;
      config.tau = rng.uniform(0.0, 0.3);
      const PipelineRun run = run_pipeline_on(input, config);
      const auto& j = run.report_json;
      long expect_merge = 0;
      const int gh = j["grid"][0].get<int>(), gw = j["grid"][1].get<int>();
      const int planes = j["planes"].get<int>();
      if (kind == SourceKind::Image2D)
        expect_merge = static_cast<long>(gh) * gw;
      else
        expect_merge = static_cast<long>(planes) * (((gh + 1) / 2) * ((gw + 1) / 2));
      const long before = j["tokens_before"].get<long>();
      const long after_merge = j["tokens_after_merge"].get<long>();
      const long after_prune = j["tokens_after_prune"].get<long>();
      bool ok = before == static_cast<long>(planes) * gh * gw && after_merge == expect_merge &&
                after_prune == after_merge - run.report.pruned &&
                j["encoder_output_shape"][0].get<long>() == after_prune;
      ++p.checks;
      if (!ok) ++p.failures;
    }
    suite.properties.push_back(p);
  }
  {
    Rng rng(substream_seed(seed, 71));
    PropertyResult p{"json_deterministic_modulo_timings", 0, 0};
    for (int t = 0; t < 100; ++t) {
      const VisualInput input = small_input(rng, SourceKind::Video);
      PipelineConfig config = small_config(seed + static_cast<std::uint64_t>(t));
      config.kind = SourceKind::Video;
      auto strip = [](nlohmann::ordered_json j) {
        j.erase("timings_ms");
        return j.dump();
      };
      ++p.checks;
      if (strip(run_pipeline_on(input, config).report_json) !=
          strip(run_pipeline_on(input, config).report_json))
        ++p.failures;
    }
    suite.properties.push_back(p);
  }
  return suite;
}

}  // namespace suites

struct VerifySummary {
  std::vector<SuiteResult> suites;
  std::uint64_t seed = 0;

  long properties() const {
    long n = 0;
    for (const auto& s : suites) n += static_cast<long>(s.properties.size());
    return n;
  }
  long failures() const {
    long n = 0;
    for (const auto& s : suites) n += s.failures();
    return n;
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["properties"] = properties();
    j["failures"] = failures();
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& s : suites) {
      nlohmann::ordered_json sj;
      sj["suite"] = s.name;
      sj["properties"] = s.properties.size();
      sj["checks"] = s.checks();
      sj["failures"] = s.failures();
      sj["ms"] = s.ms;
      nlohmann::ordered_json props = nlohmann::ordered_json::array();
      for (const auto& p : s.properties)
        props.push_back({{"name", p.name}, {"checks", p.checks}, {"failures", p.failures}});
      sj["detail"] = std::move(props);
      arr.push_back(std::move(sj));
    }
    j["suites"] = std::move(arr);
    return j;
  }
};

// Runs every suite (or one selected by name), in parallel up to the
// UNIPATCH_THREADS cap. Results are independent of scheduling because each
// suite derives its own random streams from the master seed.
inline VerifySummary run_all(std::uint64_t seed, const std::optional<std::string>& only = {}) {
  using SuiteFn = std::function<SuiteResult(std::uint64_t)>;
  const std::vector<std::pair<std::string, SuiteFn>> all = {
      {"numkit", suites::numkit},     {"vistream", suites::vistream},
      {"rope2d", suites::rope2d},     {"tokred", suites::tokred},
      {"encoder", suites::encoder},   {"projector", suites::projector},
      {"fusion", suites::fusion},     {"report", suites::report},
  };

  std::vector<std::pair<std::string, SuiteFn>> chosen;
  for (const auto& entry : all)
    if (!only || entry.first == *only) chosen.push_back(entry);
  if (chosen.empty()) throw ConfigError("verify: unknown suite " + (only ? *only : std::string{}));

  VerifySummary summary;
  summary.seed = seed;
  summary.suites.resize(chosen.size());
  const int cap = thread_cap();
  std::atomic<std::size_t> cursor{0};
  auto worker = [&]() {
    for (std::size_t i = cursor.fetch_add(1); i < chosen.size(); i = cursor.fetch_add(1)) {
      const auto t0 = std::chrono::steady_clock::now();
      SuiteResult res = chosen[i].second(seed);
      res.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      summary.suites[i] = std::move(res);
    }
  };
  if (cap <= 1 || chosen.size() <= 1) {
    worker();
  } else {
    std::vector<std::future<void>> pool;
    const int workers = std::min<int>(cap, static_cast<int>(chosen.size()));
    for (int w = 0; w < workers; ++w) pool.push_back(std::async(std::launch::async, worker));
    for (auto& f : pool) f.get();
  }
  return summary;
}

}  // namespace unipatch
