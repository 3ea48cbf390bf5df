#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "featfuse/fusion.hpp"
#include "featfuse/prompt_bank.hpp"

namespace featfuse {

inline constexpr double kDefaultTemperature = 0.1;
inline constexpr double kFusedTargetThreshold = 0.95;
inline constexpr double kPredictionThreshold = 0.7;
inline constexpr double kDefaultClusterEps = 0.01;
inline constexpr int kDefaultClusterMinSamples = 2;

struct RansacConfig {
  double distance_threshold = 0.1;
  int sample_n = 3;
  int iterations = 1000;
  std::uint64_t seed = 0;
  void Validate() const;
};

enum class ReferRule { kThreshold, kPositiveVsNegative };
ReferRule ParseReferRule(const std::string& name);
std::string ToString(ReferRule rule);

struct GroundingConfig {
  double temperature = kDefaultTemperature;
  double threshold = kFusedTargetThreshold;
  ReferRule rule = ReferRule::kThreshold;
  double cluster_eps = kDefaultClusterEps;
  int cluster_min_samples = kDefaultClusterMinSamples;
  RansacConfig ransac;

  void Validate() const;
  // Threshold default depends on where the cloud came from: 0.95 for fused
  // targets, 0.7 for encoder predictions.
  static GroundingConfig ForProvenance(Provenance provenance);
};

struct SegmentationResult {
  std::vector<int> labels;
  std::vector<double> scores;
};

// Label k (1-based index into class_prompts) maximizing cosine; ties go to
// the lowest k. Unfused rows get label 0 and score 0.
SegmentationResult SemanticSegment(const FeatureCloud& cloud, std::span<const Embedding> class_prompts,
                                   int threads = 1);

// Per-point softmax over [q+, Q-] cosines scaled by 1/temperature. Unfused
// rows are treated as having cosine 0 to every query.
struct ReferProbabilities {
  std::size_t num_points = 0;
  std::size_t num_negatives = 0;
  std::vector<double> positive;         // rho+, M
  std::vector<double> negatives;        // M x |Q-|
  std::vector<double> positive_cosine;  // raw cos(z, q+), M

  double negative(std::size_t i, std::size_t j) const { return negatives[i * num_negatives + j]; }
  double max_negative(std::size_t i) const;
};

// Temperature-scaled softmax over [cos+, cos-_1, ...]; max-shifted for
// stability.
std::vector<double> SimilaritySoftmax(std::span<const double> cosines, double temperature);

ReferProbabilities ComputeReferProbabilities(const FeatureCloud& cloud, const QueryContext& ctx,
                                             double temperature, int threads = 1);

// Threshold rule: rho+ > threshold (raw cosine when Q- is empty).
// Positive-vs-negative rule: rho+ > max_j P-_{i,j}; requires negatives.
SegmentationResult ReferSegment(const FeatureCloud& cloud, const QueryContext& ctx,
                                const GroundingConfig& cfg, int threads = 1);

// DBSCAN over rows of a row-major matrix with Euclidean distance.
// Neighborhoods are inclusive (d <= eps) and count the point itself; a point
// is core when it has >= min_samples neighbors. Rows with exclude[i] != 0
// take no part and are labeled 0. Cluster ids start at 1 and follow the
// first core point in ascending index order; border points join the lowest
// cluster that reaches them. Noise is 0.
std::vector<int> Dbscan(std::span<const float> rows, std::size_t num_rows, int dim, double eps,
                        int min_samples, std::span<const std::uint8_t> exclude = {});

// DBSCAN in feature space; unfused rows are noise.
SegmentationResult InstanceSegment(const FeatureCloud& cloud, const GroundingConfig& cfg);

struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();  // unit length
  double offset = 0.0;                                // normal . p + offset = 0
  double SignedDistance(const Eigen::Vector3d& p) const { return normal.dot(p) + offset; }
};

struct TableRemoval {
  PointCloud kept;
  std::vector<std::size_t> kept_indices;
  std::vector<std::size_t> inlier_indices;
  Plane plane;
  std::size_t inlier_count = 0;
};

// Seeded RANSAC plane fit; removes the inliers of the best plane (most
// inliers, first found on ties).
TableRemoval RemoveTable(const PointCloud& cloud, const RansacConfig& cfg);

}  // namespace featfuse
