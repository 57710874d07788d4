// SPDX-License-Identifier: Apache-2.0
#pragma once

// Parameter checkpoints: a flat little-endian binary of 64-bit values at
// <base>.bin plus a JSON manifest at <base>.json mapping tensor name to shape
// and byte offset.

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "unipatch/tensors.hpp"

namespace unipatch {

inline void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw ConfigError("checkpoint format is little-endian; this platform is not");
}

inline void save_checkpoint(const std::string& base, const std::vector<TensorRef>& refs) {
  require_little_endian();
  nlohmann::ordered_json manifest;
  manifest["format"] = "unipatch-checkpoint-v1";
  manifest["dtype"] = "float64";
  manifest["byte_order"] = "little-endian";
  nlohmann::ordered_json tensors = nlohmann::ordered_json::object();

  std::ofstream bin(base + ".bin", std::ios::binary | std::ios::trunc);
  if (!bin) throw InputError("cannot open checkpoint data file " + base + ".bin");
  std::uint64_t offset = 0;
  for (const auto& r : refs) {
    nlohmann::ordered_json entry;
    if (r.mat)
      entry["shape"] = {r.mat->rows, r.mat->cols};
    else
      entry["shape"] = {static_cast<int>(r.vec->size())};
    entry["offset"] = offset;
    tensors[r.name] = entry;
    bin.write(reinterpret_cast<const char*>(r.ptr()),
              static_cast<std::streamsize>(r.size() * sizeof(double)));
    offset += r.size() * sizeof(double);
  }
  if (!bin) throw InputError("short write to " + base + ".bin");
  bin.close();
  manifest["tensors"] = std::move(tensors);

  std::ofstream mf(base + ".json", std::ios::trunc);
  if (!mf) throw InputError("cannot open checkpoint manifest " + base + ".json");
  mf << manifest.dump(2) << "\n";
}

// Loads into existing tensors; names and shapes must match the manifest.
inline void load_checkpoint(const std::string& base, std::vector<TensorRef>& refs) {
  require_little_endian();
  std::ifstream mf(base + ".json");
  if (!mf) throw InputError("missing checkpoint manifest " + base + ".json");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("malformed checkpoint manifest: " + std::string(e.what()));
  }
  if (manifest.value("format", "") != "unipatch-checkpoint-v1")
    throw InputError("unknown checkpoint format in " + base + ".json");

  std::ifstream bin(base + ".bin", std::ios::binary);
  if (!bin) throw InputError("missing checkpoint data file " + base + ".bin");

  const auto& tensors = manifest.at("tensors");
  for (auto& r : refs) {
    if (!tensors.contains(r.name)) throw InputError("checkpoint lacks tensor " + r.name);
    const auto& entry = tensors.at(r.name);
    std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    if (r.mat) {
      if (shape.size() != 2 || shape[0] != r.mat->rows || shape[1] != r.mat->cols)
        throw InputError("checkpoint shape mismatch for " + r.name);
    } else {
      if (shape.size() != 1 || shape[0] != static_cast<int>(r.vec->size()))
        throw InputError("checkpoint shape mismatch for " + r.name);
    }
    bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    bin.read(reinterpret_cast<char*>(r.ptr()), static_cast<std::streamsize>(r.size() * sizeof(double)));
    if (!bin) throw InputError("checkpoint data truncated reading " + r.name);
  }
}

}  // namespace unipatch
