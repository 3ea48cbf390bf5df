#include "featfuse/scene.hpp"

#include <cmath>
#include <map>
#include <unordered_map>

#include "featfuse/parallel.hpp"

namespace featfuse {

void CameraIntrinsics::Validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw StructuralError("focal lengths must be positive");
  if (width < 1 || height < 1) throw StructuralError("image dimensions must be >= 1");
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height)) {
    throw StructuralError("principal point outside the image");
  }
}

Eigen::Matrix3d CameraIntrinsics::K() const {
  Eigen::Matrix3d k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Pose::Pose(const Eigen::Matrix4d& world_to_camera) : world_to_camera_(world_to_camera) {
  if (!world_to_camera_.allFinite()) throw StructuralError("pose has non-finite entries");
  const Eigen::RowVector4d last = world_to_camera_.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9) {
    throw StructuralError("pose last row must be [0 0 0 1]");
  }
  const Eigen::Matrix3d r = rotation();
  if ((r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6) {
    throw StructuralError("pose rotation is not orthonormal");
  }
  if (std::abs(r.determinant() - 1.0) > 1e-6) {
    throw StructuralError("pose rotation must have determinant +1");
  }
}

Pose Pose::FromRowMajor(std::span<const double> values) {
  if (values.size() != 16) throw StructuralError("pose needs 16 values");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) m(r, c) = values[static_cast<std::size_t>(r * 4 + c)];
  return Pose(m);
}

std::array<double, 16> Pose::ToRowMajor() const {
  std::array<double, 16> out{};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out[static_cast<std::size_t>(r * 4 + c)] = world_to_camera_(r, c);
  return out;
}

Eigen::Matrix4d Pose::camera_to_world() const {
  Eigen::Matrix4d inv = Eigen::Matrix4d::Identity();
  const Eigen::Matrix3d rt = rotation().transpose();
  inv.topLeftCorner<3, 3>() = rt;
  inv.topRightCorner<3, 1>() = -rt * translation();
  return inv;
}

Eigen::Vector3d Pose::camera_center() const { return -rotation().transpose() * translation(); }

void View::Validate(int num_objects) const {
  intrinsics.Validate();
  if (depth.width() != intrinsics.width || depth.height() != intrinsics.height) {
    throw StructuralError("view " + std::to_string(id) + ": depth size differs from intrinsics");
  }
  if (mask.width() != intrinsics.width || mask.height() != intrinsics.height) {
    throw StructuralError("view " + std::to_string(id) + ": mask size differs from intrinsics");
  }
  for (float z : depth.data()) {
    if (!std::isfinite(z) || z < 0.0f) {
      throw StructuralError("view " + std::to_string(id) + ": depth must be finite and >= 0");
    }
  }
  for (std::uint16_t m : mask.data()) {
    if (m > num_objects) {
      throw StructuralError("view " + std::to_string(id) + ": mask id " + std::to_string(m) +
                            " exceeds object count");
    }
  }
}

void Scene::Validate() const {
  if (num_objects < 0) throw StructuralError("negative object count");
  if (object_instance_ids.size() != static_cast<std::size_t>(num_objects)) {
    throw StructuralError("object_instance_ids must list one catalog id per object");
  }
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].id != static_cast<int>(v)) {
      throw StructuralError("view ids must be unique, contiguous and 0-based");
    }
    views[v].Validate(num_objects);
  }
}

int Scene::catalog_instance(int local_object) const {
  if (local_object < 1 || local_object > num_objects) {
    throw LookupError("object " + std::to_string(local_object) + " is not in the scene");
  }
  return object_instance_ids[static_cast<std::size_t>(local_object - 1)];
}

void UpscaleScene(Scene& scene, double scale) {
  if (!(scale > 0.0)) throw ParameterError("coordinate scale must be positive");
  if (scale == 1.0) return;
  for (auto& view : scene.views) {
    for (float& z : view.depth.data()) z = static_cast<float>(z * scale);
    Eigen::Matrix4d m = view.pose.world_to_camera();
    m.topRightCorner<3, 1>() *= scale;
    view.pose = Pose(m);
  }
}

PointCloud DepthToPoints(const View& view) {
  const auto& k = view.intrinsics;
  const Eigen::Matrix4d to_world = view.pose.camera_to_world();
  const Eigen::Matrix3d r = to_world.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = to_world.topRightCorner<3, 1>();
  PointCloud cloud;
  for (int y = 0; y < view.depth.height(); ++y) {
    for (int x = 0; x < view.depth.width(); ++x) {
      const double z = view.depth.at(x, y);
      if (z <= 0.0) continue;
      const Eigen::Vector3d cam((x - k.cx) * z / k.fx, (y - k.cy) * z / k.fy, z);
      cloud.points.push_back(r * cam + t);
    }
  }
  return cloud;
}

std::pair<PointCloud, Mask3D> AggregateCloud(const Scene& scene, int threads) {
  if (scene.views.empty()) throw ParameterError("scene has no views");
  std::vector<PointCloud> per_view(scene.views.size());
  ParallelFor(scene.views.size(), threads,
              [&](std::size_t v) { per_view[v] = DepthToPoints(scene.views[v]); });

  PointCloud cloud;
  Mask3D mask;
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    const View& view = scene.views[v];
    cloud.points.insert(cloud.points.end(), per_view[v].points.begin(), per_view[v].points.end());
    // Same traversal as DepthToPoints so labels line up with points.
    for (int y = 0; y < view.depth.height(); ++y)
      for (int x = 0; x < view.depth.width(); ++x)
        if (view.depth.at(x, y) > 0.0f) mask.labels.push_back(view.mask.at(x, y));
  }
  return {std::move(cloud), std::move(mask)};
}

namespace {

struct VoxelKey {
  std::int64_t x, y, z;
  bool operator==(const VoxelKey&) const = default;
};

struct VoxelKeyHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::size_t h = static_cast<std::size_t>(k.x) * 73856093u;
    h ^= static_cast<std::size_t>(k.y) * 19349663u;
    h ^= static_cast<std::size_t>(k.z) * 83492791u;
    return h;
  }
};

struct VoxelAccumulator {
  Eigen::Vector3d sum = Eigen::Vector3d::Zero();
  std::array<double, 3> color_sum{0.0, 0.0, 0.0};
  std::size_t count = 0;
  std::map<int, std::size_t> label_votes;
};

}  // namespace

std::pair<PointCloud, Mask3D> VoxelDownsample(const PointCloud& cloud, const Mask3D& mask,
                                              double voxel_size) {
  if (!(voxel_size > 0.0)) throw ParameterError("voxel size must be positive");
  if (mask.size() != cloud.size()) throw StructuralError("mask and cloud sizes differ");
  if (cloud.has_colors() && cloud.colors.size() != cloud.size()) {
    throw StructuralError("color count differs from point count");
  }

  // Voxels are emitted in order of their first member point.
  std::unordered_map<VoxelKey, std::size_t, VoxelKeyHash> index;
  std::vector<VoxelAccumulator> voxels;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3d& p = cloud.points[i];
    const VoxelKey key{static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
                       static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
                       static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
    auto [it, inserted] = index.try_emplace(key, voxels.size());
    if (inserted) voxels.emplace_back();
    VoxelAccumulator& acc = voxels[it->second];
    acc.sum += p;
    if (cloud.has_colors()) {
      for (int c = 0; c < 3; ++c) acc.color_sum[c] += cloud.colors[i][c];
    }
    ++acc.count;
    ++acc.label_votes[mask.labels[i]];
  }

  PointCloud out;
  Mask3D out_mask;
  out.points.reserve(voxels.size());
  out_mask.labels.reserve(voxels.size());
  for (const auto& acc : voxels) {
    const double n = static_cast<double>(acc.count);
    out.points.push_back(acc.sum / n);
    if (cloud.has_colors()) {
      std::array<std::uint8_t, 3> c{};
      for (int k = 0; k < 3; ++k) c[k] = static_cast<std::uint8_t>(std::lround(acc.color_sum[k] / n));
      out.colors.push_back(c);
    }
    // std::map iterates ascending, so strict '>' keeps the lowest id on ties.
    int best_label = 0;
    std::size_t best_votes = 0;
    for (const auto& [label, votes] : acc.label_votes) {
      if (votes > best_votes) {
        best_votes = votes;
        best_label = label;
      }
    }
    out_mask.labels.push_back(best_label);
  }
  return {std::move(out), std::move(out_mask)};
}

}  // namespace featfuse
