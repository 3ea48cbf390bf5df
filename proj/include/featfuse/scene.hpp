#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "featfuse/error.hpp"

namespace featfuse {

// Default voxel edge used before feature fusion (meters).
inline constexpr double kDefaultVoxelSize = 0.02;

struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  void Validate() const;
  Eigen::Matrix3d K() const;
};

// Rigid world-to-camera transform.
class Pose {
 public:
  Pose() : world_to_camera_(Eigen::Matrix4d::Identity()) {}

  // Throws StructuralError unless the matrix is a proper rigid transform.
  explicit Pose(const Eigen::Matrix4d& world_to_camera);

  static Pose FromRowMajor(std::span<const double> values);
  std::array<double, 16> ToRowMajor() const;

  const Eigen::Matrix4d& world_to_camera() const { return world_to_camera_; }
  Eigen::Matrix3d rotation() const { return world_to_camera_.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_to_camera_.topRightCorner<3, 1>(); }

  // Closed-form rigid inverse (R^T, -R^T t).
  Eigen::Matrix4d camera_to_world() const;
  Eigen::Vector3d camera_center() const;

 private:
  Eigen::Matrix4d world_to_camera_;
};

// Row-major H x W raster.
template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {}
  Image(int width, int height, std::vector<T> data)
      : width_(width), height_(height), data_(std::move(data)) {
    if (data_.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
      throw StructuralError("image buffer does not match its dimensions");
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return data_.empty(); }

  T& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<const T> data() const { return data_; }
  std::span<T> data() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using DepthMap = Image<float>;         // camera-frame z in meters, 0 = invalid
using InstanceMask = Image<std::uint16_t>;  // 0 = background/table, n = object n

struct View {
  int id = 0;
  CameraIntrinsics intrinsics;
  Pose pose;
  DepthMap depth;
  InstanceMask mask;
  std::optional<std::string> rgb_path;
  std::optional<std::string> dense_features_path;

  void Validate(int num_objects) const;
};

struct Scene {
  std::vector<View> views;
  int num_objects = 0;
  // object_instance_ids[n - 1] is the catalog instance of local object n.
  std::vector<int> object_instance_ids;
  std::optional<std::string> object_features_path;
  std::optional<std::string> bank_path;

  void Validate() const;
  int catalog_instance(int local_object) const;
};

struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<std::array<std::uint8_t, 3>> colors;  // empty or one per point

  std::size_t size() const { return points.size(); }
  bool has_colors() const { return !colors.empty(); }
};

// Per-point object id; 0 = table/background.
struct Mask3D {
  std::vector<int> labels;
  std::size_t size() const { return labels.size(); }
};

// Multiplies depth and translations by `scale` so the world frame is
// uniformly rescaled; intrinsics and rotations are unchanged.
void UpscaleScene(Scene& scene, double scale);

PointCloud DepthToPoints(const View& view);

std::pair<PointCloud, Mask3D> AggregateCloud(const Scene& scene, int threads = 1);

std::pair<PointCloud, Mask3D> VoxelDownsample(const PointCloud& cloud, const Mask3D& mask,
                                              double voxel_size);

}  // namespace featfuse
