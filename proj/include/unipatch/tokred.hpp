// SPDX-License-Identifier: Apache-2.0
#pragma once

// Two-stage token reduction. Stage 1 merges each 2x2 block of patch tokens
// into its mean (bilinear downsample by 2 at block centers), quartering the
// per-plane count; it is skipped for single 2D images. Stage 2 prunes a token
// when its mean absolute difference to the same grid site of the immediately
// preceding plane falls at or below tau; plane 0 is always kept in full.

#include <cstdint>
#include <vector>

#include "unipatch/vistream.hpp"

namespace unipatch {

enum class MergeMode { Auto, On, Off };

struct ReductionReport {
  long total_before = 0;  // tokens entering stage 1 (post-patchify)
  long total_after = 0;   // tokens surviving both stages
  long merged_away = 0;   // removed by the 2x2 merge
  long pruned = 0;        // removed by inter-plane pruning
  // Pruning rate over the stage-2 input stream (post-merge tokens); this is
  // the figure the per-plane breakdown reconciles against.
  double rate = 0.0;
  double tau = 0.0;

  struct PlaneCounts {
    int plane_index = 0;
    long kept = 0;
    long pruned = 0;
  };
  std::vector<PlaneCounts> per_plane;

  long stage2_input() const { return total_before - merged_away; }
};

// Token planes plus a per-token keep mask; kept tokens retain their
// (plane, m, n) provenance for downstream stacking and drift tracking.
struct PrunedSequence {
  SourceKind source_kind = SourceKind::Image2D;
  std::vector<TokenPlane> planes;
  std::vector<int> plane_index;
  std::vector<std::vector<std::uint8_t>> keep;

  struct KeptRef {
    int plane = 0;  // position in `planes`
    int m = 0;
    int n = 0;
  };

  // Kept tokens in stacking order: plane-major, row-major within each plane.
  std::vector<KeptRef> kept_refs() const {
    std::vector<KeptRef> refs;
    for (std::size_t p = 0; p < planes.size(); ++p)
      for (int r = 0; r < planes[p].tokens.rows; ++r)
        if (keep[p][static_cast<std::size_t>(r)])
          refs.push_back({static_cast<int>(p), planes[p].coords[static_cast<std::size_t>(r)].first,
                          planes[p].coords[static_cast<std::size_t>(r)].second});
    return refs;
  }

  Matrix stack_kept() const {
    long n_kept = 0;
    for (const auto& mask : keep)
      for (auto k : mask) n_kept += k ? 1 : 0;
    const int d = planes.empty() ? 0 : planes[0].tokens.cols;
    Matrix out(static_cast<int>(n_kept), d);
    int row = 0;
    for (std::size_t p = 0; p < planes.size(); ++p)
      for (int r = 0; r < planes[p].tokens.rows; ++r)
        if (keep[p][static_cast<std::size_t>(r)]) {
          auto src = planes[p].tokens.row(r);
          auto dst = out.row(row++);
          for (int j = 0; j < d; ++j) dst[static_cast<std::size_t>(j)] = src[static_cast<std::size_t>(j)];
        }
    return out;
  }

  std::vector<std::pair<int, int>> kept_coords() const {
    std::vector<std::pair<int, int>> coords;
    for (const auto& ref : kept_refs()) coords.emplace_back(ref.m, ref.n);
    return coords;
  }
};

// Mean over each 2x2 block; bottom/right blocks on odd grids average their
// actual members so the operation stays total. Output coordinates live in the
// halved grid.
inline TokenPlane merge_2x2(const TokenPlane& plane) {
  if (plane.tokens.rows == 0 || plane.grid_h == 0 || plane.grid_w == 0)
    throw ShapeError("merge_2x2: empty plane");
  TokenPlane out;
  out.grid_h = (plane.grid_h + 1) / 2;
  out.grid_w = (plane.grid_w + 1) / 2;
  const int d = plane.tokens.cols;
  out.tokens = Matrix(out.grid_h * out.grid_w, d);
  out.coords.reserve(static_cast<std::size_t>(out.grid_h) * out.grid_w);
  int row = 0;
  for (int m = 0; m < out.grid_h; ++m) {
    for (int n = 0; n < out.grid_w; ++n, ++row) {
      auto dst = out.tokens.row(row);
      int members = 0;
      for (int dm = 0; dm < 2; ++dm) {
        const int sm = 2 * m + dm;
        if (sm >= plane.grid_h) break;
        for (int dn = 0; dn < 2; ++dn) {
          const int sn = 2 * n + dn;
          if (sn >= plane.grid_w) break;
          auto src = plane.tokens.row(sm * plane.grid_w + sn);
          for (int j = 0; j < d; ++j) dst[static_cast<std::size_t>(j)] += src[static_cast<std::size_t>(j)];
          ++members;
        }
      }
      for (int j = 0; j < d; ++j) dst[static_cast<std::size_t>(j)] /= members;
      out.coords.emplace_back(m, n);
    }
  }
  return out;
}

// Mean absolute difference between two token rows; the L1 distance normalized
// by feature width so tau is comparable across embedding widths.
inline double site_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  return acc / static_cast<double>(a.size());
}

struct PruneResult {
  PrunedSequence seq;
  ReductionReport report;
};

// Inter-plane pruning. The comparison reference is the immediately preceding
// plane's token at the same site, pre-pruning. A token at distance <= tau is
// dropped; the earlier occurrence stays.
inline PruneResult prune_interplane(const PlaneSequence& seq, double tau = 0.1) {
  if (seq.planes.empty()) throw ShapeError("prune_interplane: empty sequence");
  if (tau < 0.0) throw ConfigError("prune_interplane: tau must be >= 0");
  const int gh = seq.planes[0].grid_h;
  const int gw = seq.planes[0].grid_w;
  const int d = seq.planes[0].tokens.cols;
  for (const auto& p : seq.planes)
    if (p.grid_h != gh || p.grid_w != gw || p.tokens.cols != d)
      throw ShapeError("prune_interplane: planes disagree on grid shape");

  PruneResult res;
  res.seq.source_kind = seq.source_kind;
  res.seq.planes = seq.planes;
  res.seq.plane_index = seq.plane_index;
  res.report.tau = tau;
  const int sites = gh * gw;
  res.report.total_before = static_cast<long>(seq.planes.size()) * sites;

  for (std::size_t p = 0; p < seq.planes.size(); ++p) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(sites), 1);
    long pruned_here = 0;
    if (p > 0) {
      for (int s = 0; s < sites; ++s) {
        const double dist = site_distance(seq.planes[p].tokens.row(s), seq.planes[p - 1].tokens.row(s));
        if (dist <= tau) {
          mask[static_cast<std::size_t>(s)] = 0;
          ++pruned_here;
        }
      }
    }
    const int idx = p < seq.plane_index.size() ? seq.plane_index[p] : static_cast<int>(p);
    res.report.per_plane.push_back({idx, sites - pruned_here, pruned_here});
    res.report.pruned += pruned_here;
    res.seq.keep.push_back(std::move(mask));
  }
  res.report.total_after = res.report.total_before - res.report.pruned;
  res.report.rate =
      res.report.total_before > 0 ? static_cast<double>(res.report.pruned) / static_cast<double>(res.report.total_before) : 0.0;
  return res;
}

// Full reduction: merge gate by source kind (2D images skip both stages),
// then inter-plane pruning. The report's total_before counts pre-merge tokens
// while the rate stays the stage-2 pruning rate.
inline PruneResult reduce_pipeline(const PlaneSequence& seq, double tau = 0.1,
                                   MergeMode merge = MergeMode::Auto) {
  if (seq.planes.empty()) throw ShapeError("reduce_pipeline: empty sequence");
  long before = 0;
  for (const auto& p : seq.planes) before += p.tokens.rows;

  const bool do_merge =
      merge == MergeMode::On || (merge == MergeMode::Auto && seq.source_kind != SourceKind::Image2D);

  if (seq.source_kind == SourceKind::Image2D && !do_merge) {
    // Single 2D images skip both reduction stages.
    PruneResult res;
    res.seq.source_kind = seq.source_kind;
    res.seq.planes = seq.planes;
    res.seq.plane_index = seq.plane_index;
    for (const auto& p : res.seq.planes)
      res.seq.keep.emplace_back(static_cast<std::size_t>(p.tokens.rows), std::uint8_t{1});
    res.report.total_before = before;
    res.report.total_after = before;
    res.report.tau = tau;
    const int idx0 = seq.plane_index.empty() ? 0 : seq.plane_index[0];
    res.report.per_plane.push_back({idx0, before, 0});
    return res;
  }

  PlaneSequence reduced = seq;
  if (do_merge)
    for (auto& p : reduced.planes) p = merge_2x2(p);

  PruneResult res = prune_interplane(reduced, tau);
  res.report.total_before = before;
  res.report.merged_away = before - static_cast<long>(reduced.planes.size()) *
                                        (reduced.planes[0].grid_h * reduced.planes[0].grid_w);
  res.report.total_after = res.report.stage2_input() - res.report.pruned;
  res.report.rate = res.report.stage2_input() > 0
                        ? static_cast<double>(res.report.pruned) / static_cast<double>(res.report.stage2_input())
                        : 0.0;
  return res;
}

}  // namespace unipatch
