#pragma once

#include <filesystem>
#include <span>

#include "featfuse/scene.hpp"

namespace featfuse::io {

inline constexpr const char* kSceneManifestName = "scene.json";

// Reads a scene manifest (JSON) plus the depth/mask rasters it references.
// Relative paths resolve against the manifest directory. `coordinate_scale`
// is applied after loading (1.0 leaves the scene untouched).
Scene LoadScene(const std::filesystem::path& manifest_or_dir, double coordinate_scale = 1.0);

// Writes <dir>/scene.json and one depth (float32 LE) and mask (uint16 LE)
// raster per view under <dir>/views/.
void SaveScene(const Scene& scene, const std::filesystem::path& dir);

// Headerless M x 3 float32.
void WritePointsBinary(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud ReadPointsBinary(const std::filesystem::path& path);

// ASCII PLY, "x y z" or "x y z r g b" when `colors` is non-empty.
void WritePly(const std::filesystem::path& path, const PointCloud& cloud,
              std::span<const std::array<std::uint8_t, 3>> colors = {});

void WriteLabels(const std::filesystem::path& path, std::span<const int> labels);
std::vector<int> ReadLabels(const std::filesystem::path& path);

}  // namespace featfuse::io
