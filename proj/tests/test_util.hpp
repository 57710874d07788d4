// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <random>
#include <string>

// Fresh scratch directory under the system temp root, removed on destruction.
struct ScratchDir {
  std::filesystem::path path;

  ScratchDir() {
    std::random_device rd;
    path = std::filesystem::temp_directory_path() /
           ("unipatch_test_" + std::to_string(rd()) + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};
