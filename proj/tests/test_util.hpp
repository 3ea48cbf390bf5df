#pragma once

#include <filesystem>
#include <random>
#include <string>

#include <unistd.h>

#include "featfuse/prompt_bank.hpp"
#include "featfuse/scene.hpp"

namespace featfuse::testing {

// Camera at the origin looking down +z with the given depth everywhere.
inline View FlatView(int width, int height, double focal, float depth, int id = 0) {
  View v;
  v.id = id;
  v.intrinsics.fx = v.intrinsics.fy = focal;
  v.intrinsics.cx = width / 2.0 - 0.5;
  v.intrinsics.cy = height / 2.0 - 0.5;
  v.intrinsics.width = width;
  v.intrinsics.height = height;
  v.depth = DepthMap(width, height, depth);
  v.mask = InstanceMask(width, height, 0);
  return v;
}

inline Embedding Axis(int dim, int axis, float value = 1.0f) {
  Embedding e(static_cast<std::size_t>(dim), 0.0f);
  e[static_cast<std::size_t>(axis)] = value;
  return e;
}

inline Embedding RandomUnit(int dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Embedding e(static_cast<std::size_t>(dim));
  for (auto& x : e) x = static_cast<float>(n(rng));
  NormalizeInPlace(e);
  return e;
}

// Fresh scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() / ("featfuse_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace featfuse::testing
