// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic corpus generator with a known redundant-site fraction. A "site"
// is one post-merge grid cell, i.e. a (2*patch)x(2*patch) pixel block whose
// four patches carry identical content so the 2x2 merge preserves it exactly.
// Between adjacent planes, exactly floor(redundancy * sites) sites get a
// sub-tau nudge (amplitude tau/10 per pixel) and every other site is inverted
// (per-pixel difference ~1, an order of magnitude above tau after embedding),
// so the pipeline's measured pruning rate is redundancy * (P-1)/P by
// construction.

#include <cstdio>
#include <string>
#include <vector>

#include "unipatch/io.hpp"
#include "unipatch/tokred.hpp"

namespace unipatch {

struct SynthSpec {
  SourceKind kind = SourceKind::Video;
  double redundancy = 0.5;
  int planes = 8;
  int height = 224;
  int width = 224;
  double tau = 0.1;
  int patch = 16;
};

struct SynthSummary {
  int sites = 0;
  int redundant_per_pair = 0;
  int planes = 0;
  int height = 0;
  int width = 0;
  std::string path;

  // Pruning rate the pipeline should report on this corpus.
  double expected_rate() const {
    return static_cast<double>(redundant_per_pair) * (planes - 1) /
           (static_cast<double>(sites) * planes);
  }
};

// Builds the plane stack in memory. Pixel values stay binary up to the small
// nudges, so 8-bit graymap quantization cannot blur the calibration.
inline std::vector<PixelPlane> gen_synthetic_planes(const SynthSpec& spec, std::uint64_t seed,
                                                    SynthSummary* summary = nullptr) {
  if (spec.kind == SourceKind::Image2D)
    throw ConfigError("gen-synthetic: redundancy needs adjacent planes; kind must be volume or video");
  if (spec.redundancy < 0.0 || spec.redundancy > 1.0)
    throw ConfigError("gen-synthetic: redundancy must lie in [0, 1]");
  if (spec.planes < 2)
    throw ConfigError("gen-synthetic: impossible configuration, no adjacent-plane pairs (planes < 2)");
  const int block = 2 * spec.patch;
  if (spec.height < block || spec.width < block || spec.height % block != 0 || spec.width % block != 0)
    throw ConfigError("gen-synthetic: dims must be positive multiples of " + std::to_string(block) +
                      " so merge sites carry uniform content");
  if (!(spec.tau > 0.0)) throw ConfigError("gen-synthetic: tau must be > 0");

  const int site_rows = spec.height / block;
  const int site_cols = spec.width / block;
  const int sites = site_rows * site_cols;
  const int redundant = static_cast<int>(spec.redundancy * sites);

  Rng rng(seed);
  // Per-site 16x16 tile, tiled 2x2 inside its block.
  std::vector<Vec> tiles(static_cast<std::size_t>(sites),
                         Vec(static_cast<std::size_t>(spec.patch) * spec.patch));
  for (auto& tile : tiles)
    for (double& v : tile) v = rng.uniform() < 0.5 ? 0.0 : 1.0;

  auto render = [&](std::vector<PixelPlane>& planes) {
    PixelPlane plane(spec.height, spec.width);
    for (int sr = 0; sr < site_rows; ++sr)
      for (int sc = 0; sc < site_cols; ++sc) {
        const Vec& tile = tiles[static_cast<std::size_t>(sr) * site_cols + sc];
        for (int r = 0; r < block; ++r)
          for (int c = 0; c < block; ++c)
            plane.at(sr * block + r, sc * block + c) =
                tile[static_cast<std::size_t>(r % spec.patch) * spec.patch + (c % spec.patch)];
      }
    planes.push_back(std::move(plane));
  };

  std::vector<PixelPlane> planes;
  render(planes);
  std::vector<int> order(static_cast<std::size_t>(sites));
  const double nudge = spec.tau / 10.0;
  for (int p = 1; p < spec.planes; ++p) {
    for (int i = 0; i < sites; ++i) order[static_cast<std::size_t>(i)] = i;
    for (int i = sites - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    for (int i = 0; i < sites; ++i) {
      Vec& tile = tiles[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
      if (i < redundant) {
        // Sub-tau site: nudge every pixel toward the interior.
        for (double& v : tile) v += v > 0.5 ? -nudge : nudge;
      } else {
        // Supra-tau site: invert.
        for (double& v : tile) v = 1.0 - v;
      }
    }
    render(planes);
  }

  if (summary) {
    summary->sites = sites;
    summary->redundant_per_pair = redundant;
    summary->planes = spec.planes;
    summary->height = spec.height;
    summary->width = spec.width;
  }
  return planes;
}

// Writes the corpus to disk: a frame directory for video, raw+sidecar for a
// volume. Returns the summary including the expected pruning rate inputs.
inline SynthSummary gen_synthetic(const SynthSpec& spec, std::uint64_t seed,
                                  const std::string& out_path) {
  SynthSummary summary;
  std::vector<PixelPlane> planes = gen_synthetic_planes(spec, seed, &summary);
  summary.path = out_path;
  if (spec.kind == SourceKind::Video) {
    std::filesystem::create_directories(out_path);
    for (std::size_t i = 0; i < planes.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04zu.pgm", i);
      write_pgm(out_path + "/" + name, planes[i]);
    }
  } else {
    if (const auto parent = std::filesystem::path(out_path).parent_path(); !parent.empty())
      std::filesystem::create_directories(parent);
    write_volume(out_path, planes);
  }
  return summary;
}

}  // namespace unipatch
