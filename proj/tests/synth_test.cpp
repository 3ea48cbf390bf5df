#include <gtest/gtest.h>

#include <cmath>

#include "featfuse/pipeline.hpp"
#include "featfuse/scene_io.hpp"
#include "featfuse/synth.hpp"
#include "test_util.hpp"

using namespace featfuse;
using namespace featfuse::synth;

namespace {

SynthConfig Small(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.num_views = 6;
  cfg.num_objects = 4;
  cfg.width = 48;
  cfg.height = 36;
  cfg.focal = 42.0;
  return cfg;
}

}  // namespace

TEST(Primitive, RayIntersection) {
  const Primitive s = Primitive::Sphere(1, {0, 0, 5}, 1.0);
  EXPECT_NEAR(*s.Intersect({0, 0, 0}, {0, 0, 1}), 4.0, 1e-12);
  EXPECT_FALSE(s.Intersect({0, 0, 0}, {0, 1, 0}).has_value());
  const Primitive b = Primitive::Box(2, {0, 0, 5}, {1, 1, 1});
  EXPECT_NEAR(*b.Intersect({0, 0, 0}, {0, 0, 1}), 4.0, 1e-12);
  EXPECT_NEAR(b.SurfaceDistance({0, 0, 5}), 1.0, 1e-12);
  EXPECT_THROW(Primitive::Sphere(1, {0, 0, 0}, 0.0), ParameterError);
}

TEST(Rig, CamerasLookAtTheOrigin) {
  const auto poses = HemisphereRig(16, 0.9);
  ASSERT_EQ(poses.size(), 16u);
  for (const Pose& p : poses) {
    EXPECT_NEAR(p.camera_center().norm(), 0.9, 1e-9);
    EXPECT_GT(p.camera_center().z(), 0.0);
    const Eigen::Vector3d o = (p.world_to_camera() * Eigen::Vector4d(0, 0, 0, 1)).head<3>();
    EXPECT_NEAR(o.x(), 0.0, 1e-9);
    EXPECT_NEAR(o.y(), 0.0, 1e-9);
    EXPECT_NEAR(o.z(), 0.9, 1e-9);
  }
}

TEST(ConceptBank, PrototypesAreSeparated) {
  SynthConfig cfg;
  const ConceptBank c = MakeConceptBank(cfg);
  ASSERT_EQ(static_cast<int>(c.prototypes.size()), cfg.catalog_size);
  for (std::size_t i = 0; i < c.prototypes.size(); ++i) {
    EXPECT_LT(Dot(c.prototypes[i], c.distractor), kPrototypeSeparation);
    for (std::size_t j = i + 1; j < c.prototypes.size(); ++j) {
      EXPECT_LT(Dot(c.prototypes[i], c.prototypes[j]), kPrototypeSeparation);
    }
  }
  EXPECT_EQ(c.bank.instance_ids().size(), static_cast<std::size_t>(cfg.catalog_size));
  EXPECT_TRUE(c.bank.has_canonical());
}

TEST(GenerateScene, DeterministicForASeed) {
  const SynthConfig cfg = Small(3);
  const ConceptBank c = MakeConceptBank(cfg);
  const SynthScene a = GenerateScene(cfg, c, 1);
  const SynthScene b = GenerateScene(cfg, c, 4);
  ASSERT_EQ(a.scene.views.size(), b.scene.views.size());
  EXPECT_EQ(a.scene.object_instance_ids, b.scene.object_instance_ids);
  for (std::size_t v = 0; v < a.scene.views.size(); ++v) {
    EXPECT_EQ(a.scene.views[v].depth, b.scene.views[v].depth);
    EXPECT_EQ(a.scene.views[v].mask, b.scene.views[v].mask);
  }
  const SynthScene other = GenerateScene(Small(4), c);
  EXPECT_NE(other.truth.primitives.front().center, a.truth.primitives.front().center);
}

TEST(GenerateScene, LiftedPointsLieOnTheirSurfaces) {
  const SynthConfig cfg = Small(8);
  const ConceptBank c = MakeConceptBank(cfg);
  const SynthScene s = GenerateScene(cfg, c);
  const auto [cloud, labels] = AggregateCloud(s.scene);
  ASSERT_GT(cloud.size(), 0u);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const int n = labels.labels[i];
    if (n == 0) {
      EXPECT_NEAR(cloud.points[i].z(), 0.0, 1e-5);
    } else {
      EXPECT_LT(s.truth.primitives[static_cast<std::size_t>(n - 1)].SurfaceDistance(cloud.points[i]), 1e-5);
    }
  }
}

TEST(GenerateScene, ObjectsDoNotOverlap) {
  const SynthConfig cfg = Small(21);
  const SynthScene s = GenerateScene(cfg, MakeConceptBank(cfg));
  const auto& p = s.truth.primitives;
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const bool overlap = (p[i].aabb_min().array() < p[j].aabb_max().array()).all() &&
                           (p[j].aabb_min().array() < p[i].aabb_max().array()).all();
      EXPECT_FALSE(overlap);
    }
  }
}

TEST(GenerateScene, RejectsBadConfigs) {
  SynthConfig cfg = Small(1);
  cfg.num_objects = 0;
  EXPECT_THROW(cfg.Validate(), ParameterError);
  cfg = Small(1);
  cfg.patch_size = 5;
  EXPECT_THROW(cfg.Validate(), ParameterError);
  cfg = Small(1);
  cfg.num_objects = 12;
  cfg.catalog_size = 12;
  cfg.placement_half_extent = 0.08;
  cfg.table_half_extent = 0.1;
  EXPECT_THROW(GenerateScene(cfg, MakeConceptBank(cfg)), ParameterError);
}

TEST(ViewFeatures, CorruptionsPreferTheirSource) {
  SynthConfig cfg = Small(13);
  cfg.corruption = 0.5;
  const ConceptBank c = MakeConceptBank(cfg);
  const SynthScene s = GenerateScene(cfg, c);
  const SynthFeatures f = GenerateViewFeatures(s.scene, c, cfg);
  const ObjectVisibility ov = ComputeObjectVisibility(s.scene);
  int corrupted = 0;
  for (int v = 0; v < cfg.num_views; ++v) {
    for (int n = 1; n <= cfg.num_objects; ++n) {
      EXPECT_EQ(f.objects.valid(v, n), ov.count(static_cast<std::size_t>(v), n) > 0);
      if (!f.corrupted(v, n)) continue;
      ++corrupted;
      const int src = f.corruption_source[static_cast<std::size_t>(v) * cfg.num_objects + (n - 1)];
      const auto z = f.objects.feature(v, n);
      EXPECT_GT(Cosine(z, c.bank.prompt(src)), Cosine(z, c.bank.prompt(s.scene.catalog_instance(n))));
    }
  }
  EXPECT_GT(corrupted, 0);
  ASSERT_EQ(f.dense.size(), s.scene.views.size());
  for (std::size_t v = 0; v < f.dense.size(); ++v) EXPECT_NO_THROW(f.dense[v].CheckAgainst(s.scene.views[v].intrinsics));
}

TEST(WriteSceneDirectory, LoadsBack) {
  featfuse::testing::TempDir dir("synth_dir");
  const SynthConfig cfg = Small(2);
  const ConceptBank c = MakeConceptBank(cfg);
  const SynthScene s = GenerateScene(cfg, c);
  const SynthFeatures f = GenerateViewFeatures(s.scene, c, cfg);
  WriteSceneDirectory(dir.path(), s, c, f, cfg);
  const SceneInputs in = LoadSceneInputs(dir.path());
  ASSERT_TRUE(in.bank.has_value());
  ASSERT_TRUE(in.objects.has_value());
  EXPECT_EQ(in.objects->raw_data(), f.objects.raw_data());
  ASSERT_EQ(in.dense.size(), f.dense.size());
  EXPECT_EQ(in.dense[0].data, f.dense[0].data);
  EXPECT_EQ(in.scene.object_instance_ids, s.scene.object_instance_ids);
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "truth.json"));
}
