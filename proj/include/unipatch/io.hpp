// SPDX-License-Identifier: Apache-2.0
#pragma once

// Fixture-friendly file formats, chosen so inputs stay hand-writable:
//   image  — binary portable graymap (P5), 8-bit, scaled to [0, 1]
//   volume — raw little-endian float32 planes plus a JSON sidecar
//            <path>.json holding {"dims": [D, H, W]}, slice-major
//   video  — directory of P5 frames, lexicographic filename order

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unipatch/vistream.hpp"

namespace unipatch {

namespace detail {

// Reads one whitespace-delimited header token, skipping '#' comments. Leaves
// the stream just past the single whitespace byte that ends the token, which
// is what the binary payload after maxval requires.
inline std::string pgm_token(std::istream& in) {
  std::string t;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (!std::isspace(c)) break;
  }
  while (c != EOF && !std::isspace(c)) {
    t.push_back(static_cast<char>(c));
    c = in.get();
  }
  return t;
}

inline long parse_pgm_int(const std::string& t, const std::string& path, const char* what) {
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos)
    throw InputError(path + ": malformed P5 header (" + std::string(what) + ")");
  return std::stol(t);
}

}  // namespace detail

inline PixelPlane read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing file: " + path);
  std::string magic = detail::pgm_token(in);
  if (magic != "P5") throw InputError(path + ": not a binary portable graymap (P5)");
  const long w = detail::parse_pgm_int(detail::pgm_token(in), path, "width");
  const long h = detail::parse_pgm_int(detail::pgm_token(in), path, "height");
  const long maxval = detail::parse_pgm_int(detail::pgm_token(in), path, "maxval");
  if (w < 1 || h < 1) throw InputError(path + ": malformed P5 header (degenerate dimensions)");
  if (maxval < 1 || maxval > 255) throw InputError(path + ": P5 maxval must be in 1..255 (8-bit)");
  // The single whitespace byte after maxval was already consumed by pgm_token.
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * static_cast<std::size_t>(h));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size())
    throw InputError(path + ": pixel payload shorter than header dimensions");
  PixelPlane plane(static_cast<int>(h), static_cast<int>(w));
  for (std::size_t i = 0; i < raw.size(); ++i)
    plane.pix[i] = static_cast<double>(raw[i]) / static_cast<double>(maxval);
  return plane;
}

inline void write_pgm(const std::string& path, const PixelPlane& plane) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  out << "P5\n" << plane.width << " " << plane.height << "\n255\n";
  for (double v : plane.pix) {
    const double clamped = std::clamp(v, 0.0, 1.0);
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  if (!out) throw InputError("short write to " + path);
}

inline std::vector<PixelPlane> read_volume(const std::string& path) {
  if constexpr (std::endian::native != std::endian::little)
    throw ConfigError("volume format is little-endian; this platform is not");
  std::ifstream sf(path + ".json");
  if (!sf) throw InputError("missing volume sidecar: " + path + ".json");
  nlohmann::json sidecar;
  try {
    sf >> sidecar;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ".json: malformed sidecar: " + std::string(e.what()));
  }
  if (!sidecar.contains("dims") || !sidecar["dims"].is_array() || sidecar["dims"].size() != 3)
    throw InputError(path + ".json: sidecar must hold {\"dims\": [D, H, W]}");
  const long d = sidecar["dims"][0].get<long>();
  const long h = sidecar["dims"][1].get<long>();
  const long w = sidecar["dims"][2].get<long>();
  if (d < 1 || h < 1 || w < 1) throw InputError(path + ".json: dims must be positive");

  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("missing file: " + path);
  in.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::uint64_t>(in.tellg());
  in.seekg(0);
  const std::uint64_t expect = static_cast<std::uint64_t>(d) * h * w * sizeof(float);
  if (bytes != expect)
    throw InputError(path + ": payload is " + std::to_string(bytes) + " bytes but dims [" +
                     std::to_string(d) + "," + std::to_string(h) + "," + std::to_string(w) +
                     "] require " + std::to_string(expect));

  std::vector<PixelPlane> planes;
  std::vector<float> slab(static_cast<std::size_t>(h) * static_cast<std::size_t>(w));
  for (long s = 0; s < d; ++s) {
    in.read(reinterpret_cast<char*>(slab.data()), static_cast<std::streamsize>(slab.size() * sizeof(float)));
    if (!in) throw InputError(path + ": truncated volume payload");
    PixelPlane plane(static_cast<int>(h), static_cast<int>(w));
    for (std::size_t i = 0; i < slab.size(); ++i) plane.pix[i] = static_cast<double>(slab[i]);
    planes.push_back(std::move(plane));
  }
  return planes;
}

inline void write_volume(const std::string& path, const std::vector<PixelPlane>& planes) {
  if (planes.empty()) throw ConfigError("write_volume: no planes");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path);
  for (const auto& plane : planes) {
    std::vector<float> slab(plane.pix.size());
    for (std::size_t i = 0; i < slab.size(); ++i) slab[i] = static_cast<float>(plane.pix[i]);
    out.write(reinterpret_cast<const char*>(slab.data()),
              static_cast<std::streamsize>(slab.size() * sizeof(float)));
  }
  nlohmann::ordered_json sidecar;
  sidecar["dims"] = {static_cast<int>(planes.size()), planes[0].height, planes[0].width};
  std::ofstream sf(path + ".json", std::ios::trunc);
  if (!sf) throw InputError("cannot write " + path + ".json");
  sf << sidecar.dump() << "\n";
}

inline std::vector<PixelPlane> read_frame_dir(const std::string& path) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) throw InputError("missing frame directory: " + path);
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(path)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() > 4 && name.substr(name.size() - 4) == ".pgm") names.push_back(name);
  }
  if (names.empty()) throw InputError(path + ": no .pgm frames found");
  std::sort(names.begin(), names.end());
  std::vector<PixelPlane> frames;
  for (const auto& name : names) frames.push_back(read_pgm(path + "/" + name));
  return frames;
}

inline VisualInput load_input(const std::string& path, SourceKind kind) {
  VisualInput input;
  input.kind = kind;
  switch (kind) {
    case SourceKind::Image2D:
      input.planes.push_back(read_pgm(path));
      break;
    case SourceKind::Volume3D:
      input.planes = read_volume(path);
      break;
    case SourceKind::Video:
      input.planes = read_frame_dir(path);
      break;
  }
  input.height = input.planes[0].height;
  input.width = input.planes[0].width;
  input.validate();
  return input;
}

}  // namespace unipatch
