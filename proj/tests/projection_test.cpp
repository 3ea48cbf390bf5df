#include <gtest/gtest.h>

#include "featfuse/projection.hpp"
#include "test_util.hpp"

using namespace featfuse;
using featfuse::testing::FlatView;

TEST(Projection, HomogeneousCoordinatesAreKTimesCameraPoint) {
  View v = FlatView(10, 8, 20.0, 1.0f);
  const Eigen::Vector3d u = ProjectPoint({0.1, -0.05, 2.0}, v);
  EXPECT_NEAR(u.x(), 20.0 * 0.1 + v.intrinsics.cx * 2.0, 1e-12);
  EXPECT_NEAR(u.y(), 20.0 * -0.05 + v.intrinsics.cy * 2.0, 1e-12);
  EXPECT_NEAR(u.z(), 2.0, 1e-12);
}

TEST(Projection, FovRejectsBehindCameraAndOutOfImage) {
  CameraIntrinsics k;
  k.fx = k.fy = 1.0;
  k.width = 4;
  k.height = 3;
  EXPECT_TRUE(InFov({0.0, 0.0, 1.0}, k));
  EXPECT_TRUE(InFov({3.99, 2.99, 1.0}, k));
  EXPECT_FALSE(InFov({4.0, 1.0, 1.0}, k));
  EXPECT_FALSE(InFov({-0.01, 1.0, 1.0}, k));
  EXPECT_FALSE(InFov({1.0, 1.0, 0.0}, k));
  EXPECT_FALSE(InFov({-1.0, -1.0, -1.0}, k));  // divides to (1, 1) but z < 0
}

TEST(Projection, NearestPixelRoundsAndClampsTheLastHalfPixel) {
  CameraIntrinsics k;
  k.width = 4;
  k.height = 3;
  EXPECT_EQ(NearestPixel({1.49, 0.5, 1.0}, k), (Pixel{1, 1}));
  EXPECT_EQ(NearestPixel({3.7, 2.6, 1.0}, k), (Pixel{3, 2}));
  EXPECT_EQ(NearestPixel({2.0, 1.0, 2.0}, k), (Pixel{1, 1}));
}

TEST(Projection, OcclusionUsesTheDepthTolerance) {
  View v = FlatView(6, 6, 6.0, 1.0f);
  ProjectionConfig cfg;
  EXPECT_TRUE(IsVisible(ProjectPoint({0.0, 0.0, 1.015}, v), v, cfg));
  EXPECT_FALSE(IsVisible(ProjectPoint({0.0, 0.0, 1.03}, v), v, cfg));
  EXPECT_FALSE(IsVisible(ProjectPoint({0.0, 0.0, 0.97}, v), v, cfg));
  v.depth = DepthMap(6, 6, 0.0f);
  EXPECT_FALSE(IsVisible(ProjectPoint({0.0, 0.0, 1.0}, v), v, cfg));  // no depth reading
  EXPECT_THROW(IsVisible({100.0, 0.0, 1.0}, v, cfg), ContractError);
  cfg.occlusion_threshold = 0.0;
  EXPECT_THROW(cfg.Validate(), ParameterError);
}

TEST(Visibility, MatrixMatchesPerPointTests) {
  Scene s;
  s.views = {FlatView(8, 8, 8.0, 1.0f, 0), FlatView(8, 8, 8.0, 2.0f, 1)};
  PointCloud pc;
  pc.points = {{0.0, 0.0, 1.0}, {0.0, 0.0, 2.0}, {5.0, 0.0, 1.0}, {0.05, 0.02, 1.01}};
  const VisibilityMap vis = BuildVisibility(s, pc, ProjectionConfig{}, 2);
  ASSERT_EQ(vis.num_views(), 2u);
  const bool expect[2][4] = {{true, false, false, true}, {false, true, false, false}};
  for (std::size_t v = 0; v < 2; ++v) {
    for (std::size_t i = 0; i < 4; ++i) {
      EXPECT_EQ(vis.visible(v, i), expect[v][i]) << v << "," << i;
      if (vis.visible(v, i)) {
        EXPECT_EQ(vis.pixel(v, i), NearestPixel(ProjectPoint(pc.points[i], s.views[v]), s.views[v].intrinsics));
      }
    }
  }
}

TEST(ObjectVisibility, CountsMaskPixels) {
  Scene s;
  s.num_objects = 2;
  s.object_instance_ids = {1, 2};
  View v = FlatView(4, 4, 4.0, 1.0f);
  v.mask.at(0, 0) = 1;
  v.mask.at(1, 0) = 1;
  v.mask.at(3, 3) = 2;
  s.views = {v};
  const ObjectVisibility ov = ComputeObjectVisibility(s);
  EXPECT_EQ(ov.count(0, 1), 2);
  EXPECT_EQ(ov.count(0, 2), 1);
  EXPECT_THROW(ov.count(0, 3), LookupError);
}
