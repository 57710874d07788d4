// SPDX-License-Identifier: Apache-2.0
#pragma once

// Turns any visual input (single image, volume slices, video frames) into a
// uniform sequence of 2D planes, then each plane into patch tokens. One code
// path for all modalities; the only thing that varies is the plane count.

#include <atomic>
#include <future>
#include <utility>
#include <vector>

#include "unipatch/common.hpp"
#include "unipatch/matrix.hpp"

namespace unipatch {

enum class SourceKind { Image2D, Volume3D, Video };

inline const char* source_kind_name(SourceKind k) {
  switch (k) {
    case SourceKind::Image2D: return "image";
    case SourceKind::Volume3D: return "volume";
    case SourceKind::Video: return "video";
  }
  return "?";
}

// One grayscale plane, row-major, values in [0, 1].
struct PixelPlane {
  int height = 0;
  int width = 0;
  Vec pix;

  PixelPlane() = default;
  PixelPlane(int h, int w, double fill = 0.0)
      : height(h), width(w), pix(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

  double& at(int r, int c) { return pix[static_cast<std::size_t>(r) * width + c]; }
  double at(int r, int c) const { return pix[static_cast<std::size_t>(r) * width + c]; }
};

struct VisualInput {
  SourceKind kind = SourceKind::Image2D;
  std::vector<PixelPlane> planes;
  int height = 0;
  int width = 0;

  void validate() const {
    if (planes.empty()) throw InputError("visual input has no planes");
    if (kind == SourceKind::Image2D && planes.size() != 1)
      throw InputError("2D image must have exactly one plane, got " + std::to_string(planes.size()));
    for (const auto& p : planes) {
      if (p.height != height || p.width != width)
        throw InputError("plane dimensions differ across the input");
      for (double v : p.pix)
        if (!std::isfinite(v)) throw InputError("non-finite pixel value");
    }
  }
};

// Patchified plane before embedding: flattened patch pixel vectors plus the
// (m, n) grid coordinate of each patch.
struct PatchGrid {
  int grid_h = 0;
  int grid_w = 0;
  int patch = 0;
  Matrix patches;  // (grid_h * grid_w) x patch^2, row-major within the patch
  std::vector<std::pair<int, int>> coords;
};

// Embedded plane: one feature vector of width d per patch, coordinates intact.
struct TokenPlane {
  int grid_h = 0;
  int grid_w = 0;
  Matrix tokens;  // (grid_h * grid_w) x d
  std::vector<std::pair<int, int>> coords;
};

struct RawPlaneSequence {
  SourceKind source_kind = SourceKind::Image2D;
  std::vector<PixelPlane> planes;
  std::vector<int> plane_index;  // index in the original input, survives frame sampling
};

struct PlaneSequence {
  SourceKind source_kind = SourceKind::Image2D;
  std::vector<TokenPlane> planes;
  std::vector<int> plane_index;
};

inline std::vector<PixelPlane> sample_frames(const std::vector<PixelPlane>& frames, int stride) {
  if (stride < 1) throw ConfigError("sample_frames: stride must be >= 1");
  std::vector<PixelPlane> out;
  for (std::size_t i = 0; i < frames.size(); i += static_cast<std::size_t>(stride))
    out.push_back(frames[i]);
  return out;
}

// Splits the input into its ordered planes. Videos are subsampled with the
// given frame stride; volumes and images are taken as-is.
inline RawPlaneSequence decompose(const VisualInput& input, int stride = 1) {
  input.validate();
  RawPlaneSequence seq;
  seq.source_kind = input.kind;
  if (input.kind == SourceKind::Video && stride > 1) {
    seq.planes = sample_frames(input.planes, stride);
    for (std::size_t i = 0; i < seq.planes.size(); ++i)
      seq.plane_index.push_back(static_cast<int>(i) * stride);
  } else {
    seq.planes = input.planes;
    for (std::size_t i = 0; i < seq.planes.size(); ++i) seq.plane_index.push_back(static_cast<int>(i));
  }
  return seq;
}

// Non-overlapping patch x patch blocks, zero-padded at the bottom/right edges
// so partial blocks reconstruct exactly. Patch (m, n) holds pixel rows
// [m*patch, (m+1)*patch) and columns [n*patch, (n+1)*patch).
inline PatchGrid patchify(const PixelPlane& plane, int patch = 16) {
  if (plane.height <= 0 || plane.width <= 0 || plane.pix.empty())
    throw ShapeError("patchify: empty plane");
  if (patch < 1) throw ConfigError("patchify: patch size must be >= 1");
  PatchGrid g;
  g.patch = patch;
  g.grid_h = (plane.height + patch - 1) / patch;
  g.grid_w = (plane.width + patch - 1) / patch;
  g.patches = Matrix(g.grid_h * g.grid_w, patch * patch);
  g.coords.reserve(static_cast<std::size_t>(g.grid_h) * g.grid_w);
  int row = 0;
  for (int m = 0; m < g.grid_h; ++m) {
    for (int n = 0; n < g.grid_w; ++n, ++row) {
      auto dst = g.patches.row(row);
      for (int r = 0; r < patch; ++r) {
        const int pr = m * patch + r;
        if (pr >= plane.height) break;  // padded rows stay zero
        for (int c = 0; c < patch; ++c) {
          const int pc = n * patch + c;
          if (pc >= plane.width) break;
          dst[static_cast<std::size_t>(r) * patch + c] = plane.at(pr, pc);
        }
      }
      g.coords.emplace_back(m, n);
    }
  }
  return g;
}

// token_i = W_embed * patch_i + b_embed, with W_embed shaped d x patch^2.
inline TokenPlane embed_patches(const PatchGrid& grid, const Matrix& w_embed, const Vec& b_embed) {
  if (w_embed.cols != grid.patch * grid.patch)
    throw ShapeError("embed_patches: weight " + w_embed.shape_str() + " vs patch vector width " +
                     std::to_string(grid.patch * grid.patch));
  TokenPlane t;
  t.grid_h = grid.grid_h;
  t.grid_w = grid.grid_w;
  t.coords = grid.coords;
  t.tokens = affine(grid.patches, w_embed, b_embed);
  return t;
}

// Patchify + embed every plane of a raw sequence. Planes are independent, so
// they may be processed in parallel (capped by UNIPATCH_THREADS); outputs land
// in fixed slots, keeping the result deterministic.
inline PlaneSequence embed_sequence(const RawPlaneSequence& raw, const Matrix& w_embed,
                                    const Vec& b_embed, int patch = 16) {
  PlaneSequence seq;
  seq.source_kind = raw.source_kind;
  seq.plane_index = raw.plane_index;
  seq.planes.resize(raw.planes.size());
  const int cap = thread_cap();
  if (cap <= 1 || raw.planes.size() <= 1) {
    for (std::size_t i = 0; i < raw.planes.size(); ++i)
      seq.planes[i] = embed_patches(patchify(raw.planes[i], patch), w_embed, b_embed);
    return seq;
  }
  std::vector<std::future<void>> work;
  const std::size_t n = raw.planes.size();
  const int workers = std::min<int>(cap, static_cast<int>(n));
  std::atomic<std::size_t> cursor{0};
  for (int w = 0; w < workers; ++w) {
    work.push_back(std::async(std::launch::async, [&]() {
      for (std::size_t i = cursor.fetch_add(1); i < n; i = cursor.fetch_add(1))
        seq.planes[i] = embed_patches(patchify(raw.planes[i], patch), w_embed, b_embed);
    }));
  }
  for (auto& f : work) f.get();
  return seq;
}

}  // namespace unipatch
