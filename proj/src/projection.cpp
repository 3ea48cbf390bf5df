#include "featfuse/projection.hpp"

#include <cmath>

#include "featfuse/binary_io.hpp"
#include "featfuse/parallel.hpp"

namespace featfuse {

void ProjectionConfig::Validate() const {
  if (!(occlusion_threshold > 0.0)) throw ParameterError("occlusion threshold must be positive");
}

Eigen::Vector3d ProjectPoint(const Eigen::Vector3d& world_point, const View& view) {
  const Eigen::Matrix4d& t = view.pose.world_to_camera();
  const Eigen::Vector3d cam = t.topLeftCorner<3, 3>() * world_point + t.topRightCorner<3, 1>();
  return view.intrinsics.K() * cam;
}

bool InFov(const Eigen::Vector3d& u, const CameraIntrinsics& k) {
  if (!(u.z() > 0.0)) return false;
  const double px = u.x() / u.z();
  const double py = u.y() / u.z();
  return px >= 0.0 && px < k.width && py >= 0.0 && py < k.height;
}

Pixel NearestPixel(const Eigen::Vector3d& u, const CameraIntrinsics& k) {
  const int x = static_cast<int>(std::floor(u.x() / u.z() + 0.5));
  const int y = static_cast<int>(std::floor(u.y() / u.z() + 0.5));
  return {std::min(x, k.width - 1), std::min(y, k.height - 1)};
}

bool IsVisible(const Eigen::Vector3d& u, const View& view, const ProjectionConfig& cfg) {
  if (!InFov(u, view.intrinsics)) throw ContractError("IsVisible requires an in-FOV projection");
  const Pixel px = NearestPixel(u, view.intrinsics);
  const double depth = view.depth.at(px.x, px.y);
  if (depth <= 0.0) return false;
  return std::abs(u.z() - depth) <= cfg.occlusion_threshold;
}

VisibilityMap BuildVisibility(const Scene& scene, const PointCloud& cloud,
                              const ProjectionConfig& cfg, int threads) {
  cfg.Validate();
  VisibilityMap vis(scene.views.size(), cloud.size());
  ParallelFor(scene.views.size(), threads, [&](std::size_t v) {
    const View& view = scene.views[v];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Eigen::Vector3d u = ProjectPoint(cloud.points[i], view);
      if (!InFov(u, view.intrinsics)) continue;
      if (!IsVisible(u, view, cfg)) continue;
      vis.Set(v, i, NearestPixel(u, view.intrinsics));
    }
  });
  return vis;
}

ObjectVisibility ComputeObjectVisibility(const Scene& scene) {
  ObjectVisibility out(scene.views.size(), scene.num_objects);
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    for (std::uint16_t id : scene.views[v].mask.data()) {
      if (id == 0) continue;
      if (id > scene.num_objects) throw StructuralError("mask id exceeds object count");
      ++out.count(v, id);
    }
  }
  return out;
}

namespace io {
void WriteVisibility(const std::filesystem::path& path, const VisibilityMap& vis) {
  WriteRawArray<std::uint8_t>(path, vis.raw());
}
}  // namespace io

}  // namespace featfuse
