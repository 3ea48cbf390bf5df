#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "featfuse/grounding.hpp"
#include "test_util.hpp"

using namespace featfuse;
using featfuse::testing::Axis;

namespace {

FeatureCloud CloudOf(const std::vector<Embedding>& rows) {
  PointCloud pc;
  pc.points.assign(rows.size(), Eigen::Vector3d::Zero());
  FeatureCloud c(pc, static_cast<int>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), c.row(i).begin());
  return c;
}

}  // namespace

TEST(SimilaritySoftmax, SumsToOneAndIsShiftInvariant) {
  const std::vector<double> cos = {0.9, 0.1, -0.3};
  const auto p = SimilaritySoftmax(cos, 0.1);
  EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
  const double z = std::exp(9.0) + std::exp(1.0) + std::exp(-3.0);
  EXPECT_NEAR(p[0], std::exp(9.0) / z, 1e-12);
  const std::vector<double> shifted = {1.4, 0.6, 0.2};
  const auto q = SimilaritySoftmax(shifted, 0.1);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  EXPECT_THROW(SimilaritySoftmax(cos, 0.0), ParameterError);
  EXPECT_THROW(SimilaritySoftmax(std::vector<double>{}, 0.1), ParameterError);
}

TEST(SimilaritySoftmax, StableAtTinyTemperature) {
  const auto p = SimilaritySoftmax(std::vector<double>{1.0, -1.0}, 1e-4);
  EXPECT_TRUE(std::isfinite(p[0]));
  EXPECT_NEAR(p[0], 1.0, 1e-12);
}

TEST(ReferSegment, ThresholdAndPositiveVsNegative) {
  Embedding mixed = {0.8f, 0.6f, 0.0f};
  const FeatureCloud cloud = CloudOf({Axis(3, 0), Axis(3, 1), mixed});
  QueryContext ctx;
  ctx.positive = Axis(3, 0);
  ctx.negatives = {Axis(3, 1)};
  GroundingConfig cfg;
  const SegmentationResult thr = ReferSegment(cloud, ctx, cfg);
  // rho+ for the mixed row is 1 / (1 + e^-2) ~ 0.88 < 0.95.
  EXPECT_EQ(thr.labels, (std::vector<int>{1, 0, 0}));
  cfg.rule = ReferRule::kPositiveVsNegative;
  const SegmentationResult pvn = ReferSegment(cloud, ctx, cfg);
  EXPECT_EQ(pvn.labels, (std::vector<int>{1, 0, 1}));
  ctx.negatives.clear();
  EXPECT_THROW(ReferSegment(cloud, ctx, cfg), ParameterError);
  // With no negatives the threshold applies to the raw cosine.
  cfg.rule = ReferRule::kThreshold;
  cfg.threshold = 0.7;
  EXPECT_EQ(ReferSegment(cloud, ctx, cfg).labels, (std::vector<int>{1, 0, 1}));
}

TEST(ReferSegment, ProvenanceSelectsThreshold) {
  EXPECT_DOUBLE_EQ(GroundingConfig::ForProvenance(Provenance::kFusedTarget).threshold, 0.95);
  EXPECT_DOUBLE_EQ(GroundingConfig::ForProvenance(Provenance::kExternalPrediction).threshold, 0.7);
  GroundingConfig bad;
  bad.threshold = 1.0;
  EXPECT_THROW(bad.Validate(), ParameterError);
}

TEST(ReferProbabilities, EqualCosinesSplitEvenly) {
  const FeatureCloud cloud = CloudOf({Axis(3, 0)});
  QueryContext ctx;
  ctx.positive = Embedding{0.6f, 0.8f, 0.0f};
  ctx.negatives = {Embedding{0.6f, 0.0f, 0.8f}};
  const ReferProbabilities p = ComputeReferProbabilities(cloud, ctx, 0.1);
  EXPECT_NEAR(p.positive[0], 0.5, 1e-9);
  EXPECT_NEAR(p.negative(0, 0), 0.5, 1e-9);
}

TEST(SemanticSegment, ArgmaxWithLowestIndexOnTies) {
  Embedding diag = {0.70710678f, 0.70710678f};
  const FeatureCloud cloud = CloudOf({Axis(2, 1), diag});
  const std::vector<Embedding> prompts = {Axis(2, 0), Axis(2, 1)};
  const SegmentationResult s = SemanticSegment(cloud, prompts);
  EXPECT_EQ(s.labels[0], 2);
  EXPECT_EQ(s.labels[1], 1);
}

TEST(Dbscan, ChainsCoreAndAttachesBorder) {
  // 1-D rows: a chain of three cores, one border point and one outlier.
  const std::vector<float> rows = {0.0f, 0.008f, 0.016f, 0.025f, 0.5f};
  EXPECT_EQ(Dbscan(rows, 5, 1, 0.01, 2), (std::vector<int>{1, 1, 1, 1, 0}));
  // Only the middle two are core at 3; the ends join as border points.
  EXPECT_EQ(Dbscan(rows, 5, 1, 0.01, 3), (std::vector<int>{1, 1, 1, 1, 0}));
  EXPECT_EQ(Dbscan(rows, 5, 1, 0.01, 4), (std::vector<int>{0, 0, 0, 0, 0}));
  // min_samples = 1 makes the outlier a cluster of its own.
  EXPECT_EQ(Dbscan(rows, 5, 1, 0.01, 1), (std::vector<int>{1, 1, 1, 1, 2}));
  const std::vector<std::uint8_t> exclude = {0, 1, 0, 0, 0};
  EXPECT_EQ(Dbscan(rows, 5, 1, 0.01, 2, exclude), (std::vector<int>{0, 0, 1, 1, 0}));
}

TEST(InstanceSegment, UnfusedRowsAreNoise) {
  FeatureCloud cloud = CloudOf({Axis(2, 0), Axis(2, 0), Axis(2, 1), Axis(2, 1)});
  std::fill(cloud.row(3).begin(), cloud.row(3).end(), 0.0f);
  cloud.flags[3] = kFlagUnfused;
  const SegmentationResult s = InstanceSegment(cloud, GroundingConfig{});
  EXPECT_EQ(s.labels, (std::vector<int>{1, 1, 0, 0}));
}

TEST(RemoveTable, FindsDominantPlane) {
  PointCloud pc;
  for (int x = 0; x < 20; ++x)
    for (int y = 0; y < 20; ++y) pc.points.emplace_back(x * 0.05, y * 0.05, 0.0);
  for (int k = 0; k < 30; ++k) pc.points.emplace_back(0.5, 0.5, 0.3 + 0.01 * k);
  RansacConfig cfg;
  cfg.seed = 1;
  const TableRemoval tr = RemoveTable(pc, cfg);
  EXPECT_EQ(tr.inlier_count, 400u);
  EXPECT_EQ(tr.kept.size(), 30u);
  EXPECT_NEAR(std::abs(tr.plane.normal.z()), 1.0, 1e-9);
  // Same seed, same answer.
  EXPECT_EQ(RemoveTable(pc, cfg).inlier_indices, tr.inlier_indices);
  PointCloud two;
  two.points.assign(2, Eigen::Vector3d::Zero());
  EXPECT_THROW(RemoveTable(two, cfg), ParameterError);
}
