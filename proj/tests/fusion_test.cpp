#include <gtest/gtest.h>

#include <cmath>

#include "featfuse/fusion.hpp"
#include "featfuse/pipeline.hpp"
#include "featfuse/synth.hpp"
#include "test_util.hpp"

using namespace featfuse;
using featfuse::testing::Axis;
using featfuse::testing::FlatView;

namespace {

QueryContext Context(Embedding pos, std::vector<Embedding> neg, Reduction r = Reduction::kMax) {
  QueryContext ctx;
  ctx.positive = std::move(pos);
  ctx.negatives = std::move(neg);
  ctx.reduction = r;
  return ctx;
}

Embedding Unit(std::initializer_list<float> v) {
  Embedding e(v);
  NormalizeInPlace(e);
  return e;
}

}  // namespace

TEST(Informativeness, ClipsAtZeroAndReducesNegatives) {
  const Embedding z = Unit({1.0f, 1.0f, 0.0f});
  const QueryContext max_ctx = Context(Axis(3, 0), {Axis(3, 1), Axis(3, 2)});
  EXPECT_NEAR(Informativeness(z, max_ctx), 0.0, 1e-12);  // cos+ == max cos-
  const QueryContext mean_ctx = Context(Axis(3, 0), {Axis(3, 1), Axis(3, 2)}, Reduction::kMean);
  EXPECT_NEAR(Informativeness(z, mean_ctx), 1.0 / std::sqrt(2.0) / 2.0, 1e-7);
  EXPECT_NEAR(Informativeness(Axis(3, 0), Context(Axis(3, 0), {})), 1.0, 1e-12);
  EXPECT_EQ(Informativeness(Axis(3, 1), Context(Axis(3, 0), {Axis(3, 1)})), 0.0);
  EXPECT_THROW(Informativeness(Embedding(3, 0.0f), max_ctx), ParameterError);
}

TEST(ObjectFusion, WeightedMeanIsNormalized) {
  Scene s;
  s.num_objects = 1;
  s.object_instance_ids = {1};
  View a = FlatView(4, 4, 4.0, 1.0f, 0), b = FlatView(4, 4, 4.0, 1.0f, 1);
  a.mask.at(0, 0) = 1;  // Lambda = 1
  for (int x = 0; x < 3; ++x) b.mask.at(x, 1) = 1;  // Lambda = 3
  s.views = {a, b};
  ObjectFeatures f(2, 1, 2);
  f.Set(0, 1, Axis(2, 0));
  f.Set(1, 1, Axis(2, 1));
  const ObjectVisibility ov = ComputeObjectVisibility(s);
  const FusionWeights w = ComputeObjectWeights(f, ov, Weighting::kLambda, {});
  EXPECT_EQ(w.at(0, 0), 1.0);
  EXPECT_EQ(w.at(1, 0), 3.0);
  const ObjectFusionResult r = FuseObjectwise(f, w);
  ASSERT_EQ(r.fused[0], 1);
  EXPECT_NEAR(r.feature(1)[0], 1.0 / std::sqrt(10.0), 1e-6);
  EXPECT_NEAR(r.feature(1)[1], 3.0 / std::sqrt(10.0), 1e-6);
}

TEST(ObjectFusion, AllZeroInformativenessFallsBackToLambda) {
  Scene s;
  s.num_objects = 1;
  s.object_instance_ids = {1};
  View a = FlatView(4, 4, 4.0, 1.0f, 0), b = FlatView(4, 4, 4.0, 1.0f, 1);
  a.mask.at(0, 0) = 1;
  b.mask.at(0, 0) = 1;
  b.mask.at(1, 0) = 1;
  s.views = {a, b};
  ObjectFeatures f(2, 1, 3);
  f.Set(0, 1, Axis(3, 1));
  f.Set(1, 1, Axis(3, 2));
  const std::vector<QueryContext> ctx = {Context(Axis(3, 0), {Axis(3, 1), Axis(3, 2)})};
  const FusionWeights w = ComputeObjectWeights(f, ComputeObjectVisibility(s), Weighting::kLambdaG, ctx);
  EXPECT_EQ(w.fallback[0], 1);
  EXPECT_EQ(w.at(0, 0), 1.0);
  EXPECT_EQ(w.at(1, 0), 2.0);
}

TEST(ObjectFusion, InvisibleAndInvalidViewsNeverContribute) {
  Scene s;
  s.num_objects = 2;
  s.object_instance_ids = {1, 2};
  View a = FlatView(4, 4, 4.0, 1.0f, 0);
  a.mask.at(0, 0) = 1;
  s.views = {a};
  ObjectFeatures f(1, 2, 2);
  f.Set(0, 1, Axis(2, 0));
  f.Set(0, 2, Axis(2, 1));  // object 2 has Lambda = 0 in the only view
  for (Weighting w : {Weighting::kUniform, Weighting::kLambda}) {
    const ObjectFusionResult r = FuseObjectwise(f, ComputeObjectWeights(f, ComputeObjectVisibility(s), w, {}));
    EXPECT_EQ(r.fused[0], 1);
    EXPECT_EQ(r.fused[1], 0);
    EXPECT_FALSE(r.errors[1].empty());
  }
}

TEST(Scatter, TableAndUnfusedObjectsAreFlagged) {
  ObjectFusionResult r;
  r.num_objects = 2;
  r.dim = 2;
  r.features = {1.0f, 0.0f, 0.0f, 0.0f};
  r.fused = {1, 0};
  r.errors = {"", "no views"};
  PointCloud pc;
  pc.points.assign(3, Eigen::Vector3d::Zero());
  Mask3D m;
  m.labels = {1, 0, 2};
  const FeatureCloud c = ScatterObjectFeatures(r, pc, m);
  EXPECT_FALSE(c.unfused(0));
  EXPECT_EQ(c.row(0)[0], 1.0f);
  EXPECT_TRUE(c.unfused(1));
  EXPECT_TRUE(c.unfused(2));
}

TEST(PointFusion, AveragesSampledCellsOverVisibleViews) {
  Scene s;
  s.num_objects = 1;
  s.object_instance_ids = {1};
  s.views = {FlatView(4, 4, 4.0, 1.0f, 0), FlatView(4, 4, 4.0, 1.0f, 1), FlatView(4, 4, 4.0, 5.0f, 2)};
  PointCloud pc;
  pc.points = {{0.0, 0.0, 1.0}};
  Mask3D m;
  m.labels = {1};
  std::vector<DenseFeatureMap> dense;
  for (int v = 0; v < 3; ++v) {
    DenseFeatureMap d(2, 2, 2);
    for (int gy = 0; gy < 2; ++gy)
      for (int gx = 0; gx < 2; ++gx) {
        const Embedding e = Axis(2, v == 0 ? 0 : 1);
        std::copy(e.begin(), e.end(), d.cell(gx, gy).begin());
      }
    dense.push_back(d);
  }
  const VisibilityMap vis = BuildVisibility(s, pc, ProjectionConfig{});
  EXPECT_FALSE(vis.visible(2, 0));  // occluded in the third view
  const FusionWeights w = ComputePointWeights(s, dense, vis, m, Weighting::kUniform, {});
  const FeatureCloud c = FusePointwise(s, pc, dense, vis, w);
  EXPECT_NEAR(c.row(0)[0], 1.0 / std::sqrt(2.0), 1e-6);
  EXPECT_NEAR(c.row(0)[1], 1.0 / std::sqrt(2.0), 1e-6);

  PointCloud far;
  far.points = {{10.0, 0.0, 1.0}};
  const VisibilityMap none = BuildVisibility(s, far, ProjectionConfig{});
  const FeatureCloud u = FusePointwise(s, far, dense, none, ComputePointWeights(s, dense, none, m, Weighting::kUniform, {}));
  EXPECT_TRUE(u.unfused(0));
  EXPECT_EQ(u.row(0)[0], 0.0f);
}

TEST(DenseFeatureMap, GridMustDivideTheImage) {
  CameraIntrinsics k;
  k.width = 10;
  k.height = 8;
  EXPECT_NO_THROW(DenseFeatureMap(5, 4, 3).CheckAgainst(k));
  EXPECT_THROW(DenseFeatureMap(3, 4, 3).CheckAgainst(k), StructuralError);
  const DenseFeatureMap d(5, 4, 1);
  EXPECT_EQ(d.Sample({3, 5}, k).data(), d.cell(1, 2).data());
}

TEST(DistillLoss, MatchesOneMinusCosine) {
  PointCloud pc;
  pc.points.assign(3, Eigen::Vector3d::Zero());
  FeatureCloud a(pc, 2), b(pc, 2);
  a.row(0)[0] = 1.0f;
  b.row(0)[0] = 1.0f;
  a.row(1)[0] = 1.0f;
  b.row(1)[1] = 1.0f;
  a.flags[2] = kFlagUnfused;  // ignored
  EXPECT_NEAR(DistillLoss(a, b), 0.5, 1e-12);
}

TEST(CropRegion, TightBoxAroundMask) {
  View v = FlatView(6, 5, 5.0, 1.0f);
  v.mask.at(1, 2) = 3;
  v.mask.at(4, 3) = 3;
  const CropRegion c = ComputeCropRegion(v, 3);
  EXPECT_EQ(c.x_min, 1);
  EXPECT_EQ(c.y_min, 2);
  EXPECT_EQ(c.width, 4);
  EXPECT_EQ(c.height, 2);
  EXPECT_TRUE(c.inside(1, 2));
  EXPECT_FALSE(c.inside(2, 2));
  EXPECT_THROW(ComputeCropRegion(v, 1), LookupError);
}

// The vectorized engine against the scalar reference on a small scene.
TEST(OracleEquivalence, SmallSceneAllWeightings) {
  synth::SynthConfig cfg;
  cfg.seed = 5;
  cfg.num_views = 3;
  cfg.num_objects = 3;
  cfg.dim = 16;
  cfg.catalog_size = 8;
  cfg.width = 32;
  cfg.height = 24;
  cfg.focal = 28.0;
  cfg.corruption = 0.3;
  const auto concepts = synth::MakeConceptBank(cfg);
  const auto scene = synth::GenerateScene(cfg, concepts);
  const auto feats = synth::GenerateViewFeatures(scene.scene, concepts, cfg);
  const PreparedCloud prepared = PrepareCloud(scene.scene, kDefaultVoxelSize);
  for (Weighting w : {Weighting::kUniform, Weighting::kLambda, Weighting::kG, Weighting::kLambdaG}) {
    FuseOptions o;
    o.weighting = w;
    const synth::OracleQuery q{&concepts.bank, o.strategy, o.reduction};
    o.mode = FusionMode::kObject;
    const FuseOutput obj = FuseScene(scene.scene, prepared, &concepts.bank, &feats.objects, feats.dense, o);
    const auto ref = synth::OracleObjectFusion(scene.scene, feats.objects, w, q);
    for (std::size_t i = 0; i < prepared.cloud.size(); ++i) {
      const int n = prepared.labels.labels[i];
      if (n == 0) continue;
      for (int c = 0; c < ref.dim; ++c) {
        EXPECT_NEAR(obj.cloud.row(i)[c], ref.features[(n - 1) * ref.dim + c], 1e-6);
      }
    }
    if (w == Weighting::kLambda) continue;
    o.mode = FusionMode::kPoint;
    const FuseOutput pt = FuseScene(scene.scene, prepared, &concepts.bank, nullptr, feats.dense, o);
    const auto pref = synth::OraclePointFusion(scene.scene, prepared.cloud, prepared.labels, feats.dense, w,
                                               kDefaultOcclusionThreshold, q);
    for (std::size_t i = 0; i < prepared.cloud.size(); ++i) {
      ASSERT_EQ(pt.cloud.unfused(i), pref.unfused[i] != 0);
      for (int c = 0; c < pref.dim; ++c) EXPECT_NEAR(pt.cloud.row(i)[c], pref.features[i * pref.dim + c], 1e-6);
    }
  }
}

TEST(FusionNames, RoundTrip) {
  for (auto w : {Weighting::kUniform, Weighting::kLambda, Weighting::kG, Weighting::kLambdaG}) {
    EXPECT_EQ(ParseWeighting(ToString(w)), w);
  }
  EXPECT_EQ(ParseFusionMode("point"), FusionMode::kPoint);
  EXPECT_THROW(ParseFusionMode("voxel"), ParameterError);
}
