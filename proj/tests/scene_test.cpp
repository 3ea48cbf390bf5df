#include <gtest/gtest.h>

#include <cmath>

#include "featfuse/projection.hpp"
#include "featfuse/scene.hpp"
#include "featfuse/scene_io.hpp"
#include "test_util.hpp"

using namespace featfuse;
using featfuse::testing::FlatView;

namespace {

Eigen::Matrix4d RigidMatrix(double angle, const Eigen::Vector3d& axis, const Eigen::Vector3d& t) {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
  m.topRightCorner<3, 1>() = t;
  return m;
}

}  // namespace

TEST(Pose, RejectsNonRigidMatrices) {
  Eigen::Matrix4d scaled = Eigen::Matrix4d::Identity();
  scaled(0, 0) = 2.0;
  EXPECT_THROW(Pose{scaled}, StructuralError);
  Eigen::Matrix4d reflected = Eigen::Matrix4d::Identity();
  reflected(2, 2) = -1.0;
  EXPECT_THROW(Pose{reflected}, StructuralError);
  Eigen::Matrix4d bottom = Eigen::Matrix4d::Identity();
  bottom(3, 0) = 0.5;
  EXPECT_THROW(Pose{bottom}, StructuralError);
}

TEST(Pose, InverseAndRowMajorRoundTrip) {
  const Pose p(RigidMatrix(0.7, {1, 2, 3}, {0.1, -0.4, 2.0}));
  const Eigen::Matrix4d prod = p.camera_to_world() * p.world_to_camera();
  EXPECT_LT((prod - Eigen::Matrix4d::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  const auto rows = p.ToRowMajor();
  const Pose q = Pose::FromRowMajor(rows);
  EXPECT_EQ(q.world_to_camera(), p.world_to_camera());
  // Camera center maps to the camera origin.
  EXPECT_LT((p.world_to_camera() * p.camera_center().homogeneous()).head<3>().norm(), 1e-12);
}

TEST(DepthToPoints, BackProjectsThroughThePinhole) {
  View v = FlatView(8, 6, 10.0, 2.0f);
  v.pose = Pose(RigidMatrix(0.3, {0, 1, 0}, {0.2, 0.0, 0.5}));
  v.depth.at(3, 2) = 0.0f;  // invalid pixel is skipped
  const PointCloud pc = DepthToPoints(v);
  ASSERT_EQ(pc.size(), 8u * 6u - 1u);
  // Every lifted point projects back onto its source pixel at depth 2.
  std::size_t i = 0;
  for (int y = 0; y < 6; ++y) {
    for (int x = 0; x < 8; ++x) {
      if (x == 3 && y == 2) continue;
      const Eigen::Vector3d u = ProjectPoint(pc.points[i++], v);
      EXPECT_NEAR(u.z(), 2.0, 1e-9);
      EXPECT_NEAR(u.x() / u.z(), x, 1e-9);
      EXPECT_NEAR(u.y() / u.z(), y, 1e-9);
    }
  }
}

TEST(AggregateCloud, LabelsFollowValidPixels) {
  Scene s;
  s.num_objects = 1;
  s.object_instance_ids = {4};
  View v = FlatView(4, 4, 4.0, 1.0f);
  v.mask.at(1, 1) = 1;
  v.depth.at(0, 0) = 0.0f;
  s.views = {v, v};
  s.views[1].id = 1;
  const auto [cloud, labels] = AggregateCloud(s);
  ASSERT_EQ(cloud.size(), 30u);
  ASSERT_EQ(labels.size(), 30u);
  int ones = 0;
  for (int l : labels.labels) ones += l;
  EXPECT_EQ(ones, 2);
  EXPECT_EQ(labels.labels[4], 1);  // pixel (1,1) is the fifth valid pixel
}

TEST(VoxelDownsample, AveragesAndTakesMajorityLabel) {
  PointCloud pc;
  pc.points = {{0.001, 0.001, 0.001}, {0.003, 0.001, 0.001}, {0.005, 0.005, 0.005}, {0.5, 0.5, 0.5}};
  Mask3D m;
  m.labels = {2, 1, 1, 3};
  const auto [down, labels] = VoxelDownsample(pc, m, 0.02);
  ASSERT_EQ(down.size(), 2u);
  EXPECT_NEAR(down.points[0].x(), 0.003, 1e-12);
  EXPECT_EQ(labels.labels[0], 1);
  EXPECT_EQ(labels.labels[1], 3);
  EXPECT_THROW(VoxelDownsample(pc, m, 0.0), ParameterError);
}

TEST(VoxelDownsample, TiesGoToLowestLabel) {
  PointCloud pc;
  pc.points = {{0.001, 0.001, 0.001}, {0.002, 0.001, 0.001}};
  Mask3D m;
  m.labels = {5, 2};
  EXPECT_EQ(VoxelDownsample(pc, m, 0.02).second.labels[0], 2);
}

TEST(UpscaleScene, ScalesLiftedPointsUniformly) {
  Scene s;
  View v = FlatView(5, 5, 5.0, 1.5f);
  v.pose = Pose(RigidMatrix(0.4, {1, 0, 1}, {0.3, 0.2, -0.1}));
  s.views = {v};
  const PointCloud before = DepthToPoints(s.views[0]);
  UpscaleScene(s, 2.5);
  const PointCloud after = DepthToPoints(s.views[0]);
  ASSERT_EQ(before.size(), after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_LT((after.points[i] - 2.5 * before.points[i]).norm(), 1e-5);
  }
  EXPECT_THROW(UpscaleScene(s, -1.0), ParameterError);
}

TEST(SceneIo, SaveLoadRoundTrip) {
  featfuse::testing::TempDir dir("scene_io");
  Scene s;
  s.num_objects = 2;
  s.object_instance_ids = {7, 3};
  View v = FlatView(6, 4, 5.0, 1.25f);
  v.pose = Pose(RigidMatrix(0.2, {0, 0, 1}, {0.0, 0.1, 0.2}));
  v.mask.at(2, 1) = 2;
  v.mask.at(3, 1) = 1;
  s.views = {v};
  io::SaveScene(s, dir.path());
  const Scene r = io::LoadScene(dir.path());
  EXPECT_EQ(r.object_instance_ids, s.object_instance_ids);
  ASSERT_EQ(r.views.size(), 1u);
  EXPECT_EQ(r.views[0].depth, v.depth);
  EXPECT_EQ(r.views[0].mask, v.mask);
  EXPECT_LT((r.views[0].pose.world_to_camera() - v.pose.world_to_camera()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(r.catalog_instance(1), 7);
  EXPECT_THROW(r.catalog_instance(3), LookupError);
}

TEST(SceneIo, MissingManifestIsAnIoError) {
  EXPECT_THROW(io::LoadScene("/nonexistent/featfuse/scene.json"), IoError);
}

TEST(SceneValidate, MaskIdsMustBeInRange) {
  Scene s;
  s.num_objects = 1;
  s.object_instance_ids = {1};
  View v = FlatView(3, 3, 3.0, 1.0f);
  v.mask.at(0, 0) = 2;
  s.views = {v};
  EXPECT_THROW(s.Validate(), ValidationError);
}
