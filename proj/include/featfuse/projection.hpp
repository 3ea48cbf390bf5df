#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Core>

#include "featfuse/scene.hpp"

namespace featfuse {

// Default occlusion tolerance: one voxel of the default grid.
inline constexpr double kDefaultOcclusionThreshold = 0.02;

struct ProjectionConfig {
  double occlusion_threshold = kDefaultOcclusionThreshold;  // meters, > 0
  void Validate() const;
};

struct Pixel {
  int x = -1;
  int y = -1;
  bool valid() const { return x >= 0 && y >= 0; }
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

// Homogeneous image coordinates K * T * [x; 1] (no perspective division).
Eigen::Vector3d ProjectPoint(const Eigen::Vector3d& world_point, const View& view);

// u_z > 0 and the dehomogenized pixel lies in [0, W) x [0, H).
bool InFov(const Eigen::Vector3d& homogeneous, const CameraIntrinsics& intrinsics);

// Nearest pixel of an in-FOV projection. Coordinates in [W - 0.5, W) snap to
// W - 1 (likewise for rows).
Pixel NearestPixel(const Eigen::Vector3d& homogeneous, const CameraIntrinsics& intrinsics);

// Depth-buffer test. Requires InFov(homogeneous); throws ContractError otherwise.
bool IsVisible(const Eigen::Vector3d& homogeneous, const View& view, const ProjectionConfig& cfg);

// V x M binary visibility plus the sampled pixel of every visible entry.
class VisibilityMap {
 public:
  VisibilityMap() = default;
  VisibilityMap(std::size_t num_views, std::size_t num_points)
      : num_views_(num_views), num_points_(num_points),
        visible_(num_views * num_points, 0), pixels_(num_views * num_points) {}

  std::size_t num_views() const { return num_views_; }
  std::size_t num_points() const { return num_points_; }

  bool visible(std::size_t v, std::size_t i) const { return visible_[v * num_points_ + i] != 0; }
  // Only meaningful when visible(v, i).
  Pixel pixel(std::size_t v, std::size_t i) const { return pixels_[v * num_points_ + i]; }

  void Set(std::size_t v, std::size_t i, Pixel px) {
    visible_[v * num_points_ + i] = 1;
    pixels_[v * num_points_ + i] = px;
  }

  const std::vector<std::uint8_t>& raw() const { return visible_; }

 private:
  std::size_t num_views_ = 0;
  std::size_t num_points_ = 0;
  std::vector<std::uint8_t> visible_;
  std::vector<Pixel> pixels_;
};

// Rows are views. Each worker fills whole rows.
VisibilityMap BuildVisibility(const Scene& scene, const PointCloud& cloud,
                              const ProjectionConfig& cfg, int threads = 1);

// Per (view, object) count of mask pixels, objects 1..N.
class ObjectVisibility {
 public:
  ObjectVisibility() = default;
  ObjectVisibility(std::size_t num_views, int num_objects)
      : num_views_(num_views), num_objects_(num_objects),
        counts_(num_views * static_cast<std::size_t>(num_objects), 0) {}

  std::size_t num_views() const { return num_views_; }
  int num_objects() const { return num_objects_; }
  std::int64_t count(std::size_t v, int n) const { return counts_[Index(v, n)]; }
  std::int64_t& count(std::size_t v, int n) { return counts_[Index(v, n)]; }

 private:
  std::size_t Index(std::size_t v, int n) const {
    if (n < 1 || n > num_objects_) throw LookupError("object id out of range");
    return v * static_cast<std::size_t>(num_objects_) + static_cast<std::size_t>(n - 1);
  }
  std::size_t num_views_ = 0;
  int num_objects_ = 0;
  std::vector<std::int64_t> counts_;
};

ObjectVisibility ComputeObjectVisibility(const Scene& scene);

namespace io {
// Raw uint8 V x M, row-major.
void WriteVisibility(const std::filesystem::path& path, const VisibilityMap& vis);
}  // namespace io

}  // namespace featfuse
