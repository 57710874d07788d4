// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "unipatch/tokred.hpp"

using namespace unipatch;

namespace {

TokenPlane make_plane(int gh, int gw, int d) {
  TokenPlane p;
  p.grid_h = gh;
  p.grid_w = gw;
  p.tokens = Matrix(gh * gw, d);
  for (int m = 0; m < gh; ++m)
    for (int n = 0; n < gw; ++n) p.coords.emplace_back(m, n);
  return p;
}

PlaneSequence identical_planes(int count, int gh, int gw, int d, double value) {
  PlaneSequence seq;
  seq.source_kind = SourceKind::Video;
  for (int p = 0; p < count; ++p) {
    TokenPlane plane = make_plane(gh, gw, d);
    for (double& x : plane.tokens.data) x = value;
    seq.planes.push_back(std::move(plane));
    seq.plane_index.push_back(p);
  }
  return seq;
}

}  // namespace

TEST_CASE("merge of identical tokens reproduces the token") {
  TokenPlane plane = make_plane(4, 4, 3);
  for (int r = 0; r < plane.tokens.rows; ++r) {
    plane.tokens.at(r, 0) = 1.5;
    plane.tokens.at(r, 1) = -2.0;
    plane.tokens.at(r, 2) = 0.25;
  }
  const TokenPlane merged = merge_2x2(plane);
  REQUIRE(merged.tokens.rows == 4);
  for (int r = 0; r < merged.tokens.rows; ++r) {
    CHECK(merged.tokens.at(r, 0) == 1.5);
    CHECK(merged.tokens.at(r, 1) == -2.0);
    CHECK(merged.tokens.at(r, 2) == 0.25);
  }
}

TEST_CASE("merge averages a 2x2 block") {
  TokenPlane plane = make_plane(2, 2, 1);
  plane.tokens.at(0, 0) = 0.0;
  plane.tokens.at(1, 0) = 2.0;
  plane.tokens.at(2, 0) = 4.0;
  plane.tokens.at(3, 0) = 6.0;
  const TokenPlane merged = merge_2x2(plane);
  REQUIRE(merged.tokens.rows == 1);
  CHECK(merged.tokens.at(0, 0) == 3.0);
  CHECK(merged.coords[0] == std::pair<int, int>{0, 0});
}

TEST_CASE("merge quarters a 14x14 grid") {
  const TokenPlane merged = merge_2x2(make_plane(14, 14, 2));
  CHECK(merged.grid_h == 7);
  CHECK(merged.grid_w == 7);
  CHECK(merged.tokens.rows == 49);
}

TEST_CASE("merge on odd grids averages the actual members") {
  TokenPlane plane = make_plane(3, 3, 1);
  for (int r = 0; r < 9; ++r) plane.tokens.at(r, 0) = r;  // row-major 0..8
  const TokenPlane merged = merge_2x2(plane);
  REQUIRE(merged.grid_h == 2);
  REQUIRE(merged.grid_w == 2);
  CHECK(merged.tokens.at(0, 0) == Catch::Approx((0.0 + 1 + 3 + 4) / 4));
  CHECK(merged.tokens.at(1, 0) == Catch::Approx((2.0 + 5) / 2));  // right edge
  CHECK(merged.tokens.at(2, 0) == Catch::Approx((6.0 + 7) / 2));  // bottom edge
  CHECK(merged.tokens.at(3, 0) == 8.0);                           // corner
}

TEST_CASE("merge rejects an empty plane") {
  TokenPlane empty;
  CHECK_THROWS_AS(merge_2x2(empty), ShapeError);
}

TEST_CASE("identical planes prune down to plane zero") {
  for (int count : {2, 4, 8}) {
    const PlaneSequence seq = identical_planes(count, 2, 3, 4, 0.7);
    const PruneResult res = prune_interplane(seq, 0.1);
    CHECK(res.report.pruned == static_cast<long>(count - 1) * 6);
    CHECK(res.report.rate == Catch::Approx(static_cast<double>(count - 1) / count));
    for (auto kept : res.seq.keep[0]) CHECK(kept == 1);
    for (std::size_t p = 1; p < res.seq.keep.size(); ++p)
      for (auto kept : res.seq.keep[p]) CHECK(kept == 0);
  }
}

TEST_CASE("distances at or above tau keep everything") {
  PlaneSequence seq = identical_planes(3, 2, 2, 2, 0.0);
  // Give every site of planes 1, 2 a mean-abs step of exactly 0.2 > tau.
  for (std::size_t p = 1; p < 3; ++p)
    for (int s = 0; s < 4; ++s)
      for (int j = 0; j < 2; ++j)
        seq.planes[p].tokens.at(s, j) = seq.planes[p - 1].tokens.at(s, j) + 0.2;
  const PruneResult res = prune_interplane(seq, 0.1);
  CHECK(res.report.pruned == 0);
  CHECK(res.report.rate == 0.0);
}

TEST_CASE("crafted distances land on the known mask") {
  // 3 planes, 2x2 grid, d = 2. Between consecutive planes, sites 0 and 3
  // move by mean-abs 0.05 (pruned at tau = 0.1) and sites 1, 2 by 0.2 (kept).
  PlaneSequence seq = identical_planes(3, 2, 2, 2, 0.0);
  Rng rng(23);
  for (double& x : seq.planes[0].tokens.data) x = rng.uniform(-1.0, 1.0);
  for (std::size_t p = 1; p < 3; ++p)
    for (int s = 0; s < 4; ++s) {
      const double step = (s == 0 || s == 3) ? 0.05 : 0.2;
      for (int j = 0; j < 2; ++j)
        seq.planes[p].tokens.at(s, j) = seq.planes[p - 1].tokens.at(s, j) + step;
    }
  const PruneResult res = prune_interplane(seq, 0.1);
  for (std::size_t p = 1; p < 3; ++p) {
    CHECK(res.seq.keep[p][0] == 0);
    CHECK(res.seq.keep[p][1] == 1);
    CHECK(res.seq.keep[p][2] == 1);
    CHECK(res.seq.keep[p][3] == 0);
  }
  CHECK(res.report.pruned == 4);
  CHECK(res.report.total_after == 8);
  REQUIRE(res.report.per_plane.size() == 3);
  CHECK(res.report.per_plane[0].pruned == 0);
  CHECK(res.report.per_plane[1].pruned == 2);
  CHECK(res.report.per_plane[2].pruned == 2);
}

TEST_CASE("boundary distance exactly tau is pruned") {
  PlaneSequence seq = identical_planes(2, 1, 1, 2, 0.0);
  seq.planes[1].tokens.at(0, 0) = 0.1;
  seq.planes[1].tokens.at(0, 1) = 0.1;
  CHECK(prune_interplane(seq, 0.1).report.pruned == 1);
  CHECK(prune_interplane(seq, 0.0999).report.pruned == 0);
}

TEST_CASE("tau zero prunes exact duplicates only") {
  PlaneSequence seq = identical_planes(2, 1, 2, 2, 0.4);
  seq.planes[1].tokens.at(1, 0) += 1e-12;  // site 1 differs minutely
  const PruneResult res = prune_interplane(seq, 0.0);
  CHECK(res.seq.keep[1][0] == 0);
  CHECK(res.seq.keep[1][1] == 1);
}

TEST_CASE("prune rejects mismatched grids and negative tau") {
  PlaneSequence seq = identical_planes(2, 2, 2, 2, 0.0);
  CHECK_THROWS_AS(prune_interplane(seq, -0.5), ConfigError);
  seq.planes[1] = make_plane(3, 2, 2);
  CHECK_THROWS_AS(prune_interplane(seq, 0.1), ShapeError);
}

TEST_CASE("kept tokens retain plane and grid provenance") {
  PlaneSequence seq = identical_planes(2, 2, 2, 1, 0.0);
  for (int s = 0; s < 4; ++s) seq.planes[1].tokens.at(s, 0) = (s == 2) ? 5.0 : 0.0;
  const PruneResult res = prune_interplane(seq, 0.1);
  const auto refs = res.seq.kept_refs();
  REQUIRE(refs.size() == 5);  // plane 0 in full plus the one changed site
  CHECK(refs[4].plane == 1);
  CHECK(refs[4].m == 1);
  CHECK(refs[4].n == 0);
  const Matrix stacked = res.seq.stack_kept();
  CHECK(stacked.rows == 5);
  CHECK(stacked.at(4, 0) == 5.0);
}

TEST_CASE("reduce_pipeline gates the merge by source kind") {
  PlaneSequence image;
  image.source_kind = SourceKind::Image2D;
  image.planes.push_back(make_plane(14, 14, 4));
  image.plane_index.push_back(0);
  const PruneResult res = reduce_pipeline(image, 0.1);
  CHECK(res.report.total_before == 196);
  CHECK(res.report.total_after == 196);
  CHECK(res.report.merged_away == 0);
  CHECK(res.report.pruned == 0);
  CHECK(res.report.rate == 0.0);
}

TEST_CASE("reduce_pipeline merges then prunes a video") {
  const PlaneSequence seq = identical_planes(8, 14, 14, 4, 0.3);
  const PruneResult res = reduce_pipeline(seq, 0.1);
  CHECK(res.report.total_before == 8 * 196);
  CHECK(res.report.stage2_input() == 392);
  CHECK(res.report.merged_away == 8 * 196 - 392);
  CHECK(res.report.total_after == 49);
  CHECK(res.report.rate == Catch::Approx(7.0 / 8.0));
}

TEST_CASE("merge override forces the gate both ways") {
  const PlaneSequence video = identical_planes(2, 4, 4, 2, 0.5);
  const PruneResult off = reduce_pipeline(video, 0.1, MergeMode::Off);
  CHECK(off.report.merged_away == 0);
  CHECK(off.report.stage2_input() == 32);

  PlaneSequence image;
  image.source_kind = SourceKind::Image2D;
  image.planes.push_back(make_plane(4, 4, 2));
  image.plane_index.push_back(0);
  const PruneResult on = reduce_pipeline(image, 0.1, MergeMode::On);
  CHECK(on.report.merged_away == 12);
  CHECK(on.report.total_after == 4);  // single plane, nothing to prune against
  CHECK(on.report.pruned == 0);
}
