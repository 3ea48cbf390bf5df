#include "featfuse/grounding.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/SVD>

#include "featfuse/parallel.hpp"

namespace featfuse {

void RansacConfig::Validate() const {
  if (!(distance_threshold > 0.0)) throw ParameterError("RANSAC distance threshold must be positive");
  if (sample_n < 3) throw ParameterError("RANSAC needs at least 3 samples per hypothesis");
  if (iterations < 1) throw ParameterError("RANSAC needs at least one iteration");
}

ReferRule ParseReferRule(const std::string& name) {
  if (name == "threshold") return ReferRule::kThreshold;
  if (name == "pos-vs-neg") return ReferRule::kPositiveVsNegative;
  throw ParameterError("unknown referring rule '" + name + "'");
}

std::string ToString(ReferRule rule) { return rule == ReferRule::kThreshold ? "threshold" : "pos-vs-neg"; }

void GroundingConfig::Validate() const {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ParameterError("threshold must lie in (0, 1)");
  if (!(cluster_eps > 0.0)) throw ParameterError("cluster eps must be positive");
  if (cluster_min_samples < 1) throw ParameterError("min_samples must be >= 1");
  ransac.Validate();
}

GroundingConfig GroundingConfig::ForProvenance(Provenance provenance) {
  GroundingConfig cfg;
  cfg.threshold = provenance == Provenance::kFusedTarget ? kFusedTargetThreshold : kPredictionThreshold;
  return cfg;
}

namespace {

double RowCosine(const FeatureCloud& cloud, std::size_t i, std::span<const float> query) {
  if (cloud.unfused(i)) return 0.0;
  return Cosine(cloud.row(i), query);
}

}  // namespace

SegmentationResult SemanticSegment(const FeatureCloud& cloud, std::span<const Embedding> class_prompts,
                                   int threads) {
  if (class_prompts.empty()) throw ParameterError("semantic segmentation needs at least one class prompt");
  SegmentationResult out;
  out.labels.assign(cloud.size(), 0);
  out.scores.assign(cloud.size(), 0.0);
  ParallelFor(cloud.size(), threads, [&](std::size_t i) {
    if (cloud.unfused(i)) return;
    int best = 0;
    double best_cos = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < class_prompts.size(); ++k) {
      const double c = Cosine(cloud.row(i), class_prompts[k]);
      if (c > best_cos) {
        best_cos = c;
        best = static_cast<int>(k) + 1;
      }
    }
    out.labels[i] = best;
    out.scores[i] = best_cos;
  });
  return out;
}

double ReferProbabilities::max_negative(std::size_t i) const {
  double m = 0.0;
  for (std::size_t j = 0; j < num_negatives; ++j) m = std::max(m, negative(i, j));
  return m;
}

std::vector<double> SimilaritySoftmax(std::span<const double> cosines, double temperature) {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (cosines.empty()) throw ParameterError("softmax needs at least one similarity");
  std::vector<double> p(cosines.size());
  double peak = -std::numeric_limits<double>::infinity();
  for (double c : cosines) peak = std::max(peak, c / temperature);
  double total = 0.0;
  for (std::size_t j = 0; j < cosines.size(); ++j) {
    p[j] = std::exp(cosines[j] / temperature - peak);
    total += p[j];
  }
  for (double& x : p) x /= total;
  return p;
}

ReferProbabilities ComputeReferProbabilities(const FeatureCloud& cloud, const QueryContext& ctx,
                                             double temperature, int threads) {
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (ctx.positive.empty() || Norm(ctx.positive) == 0.0) throw ParameterError("query context has no positive prompt");
  ReferProbabilities out;
  out.num_points = cloud.size();
  out.num_negatives = ctx.negatives.size();
  out.positive.assign(cloud.size(), 0.0);
  out.positive_cosine.assign(cloud.size(), 0.0);
  out.negatives.assign(cloud.size() * ctx.negatives.size(), 0.0);
  ParallelFor(cloud.size(), threads, [&](std::size_t i) {
    std::vector<double> cosines(1 + ctx.negatives.size());
    cosines[0] = RowCosine(cloud, i, ctx.positive);
    out.positive_cosine[i] = cosines[0];
    for (std::size_t j = 0; j < ctx.negatives.size(); ++j) cosines[j + 1] = RowCosine(cloud, i, ctx.negatives[j]);
    const std::vector<double> p = SimilaritySoftmax(cosines, temperature);
    out.positive[i] = p[0];
    for (std::size_t j = 0; j < ctx.negatives.size(); ++j) out.negatives[i * ctx.negatives.size() + j] = p[j + 1];
  });
  return out;
}

SegmentationResult ReferSegment(const FeatureCloud& cloud, const QueryContext& ctx, const GroundingConfig& cfg,
                                int threads) {
  if (cfg.rule == ReferRule::kPositiveVsNegative && ctx.negatives.empty()) {
    throw ParameterError("positive-vs-negative rule needs at least one negative prompt");
  }
  const ReferProbabilities probs = ComputeReferProbabilities(cloud, ctx, cfg.temperature, threads);
  SegmentationResult out;
  out.labels.assign(cloud.size(), 0);
  out.scores.assign(cloud.size(), 0.0);
  const bool raw_cosine = ctx.negatives.empty();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double score = raw_cosine ? probs.positive_cosine[i] : probs.positive[i];
    out.scores[i] = score;
    if (cloud.unfused(i)) continue;
    const bool hit = cfg.rule == ReferRule::kThreshold ? score > cfg.threshold
                                                       : probs.positive[i] > probs.max_negative(i);
    out.labels[i] = hit ? 1 : 0;
  }
  return out;
}

namespace {

// Candidate neighbors via a sweep over rows sorted by their coordinate on the
// highest-variance axis; only pairs within eps on that axis are tested.
std::vector<std::vector<std::size_t>> RadiusNeighbors(std::span<const float> rows, std::size_t n, int dim,
                                                      double eps, std::span<const std::uint8_t> exclude) {
  int axis = 0;
  double best_var = -1.0;
  for (int c = 0; c < dim; ++c) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rows[i * dim + c];
      mean += x;
      sq += x * x;
    }
    const double var = n ? sq / n - (mean / n) * (mean / n) : 0.0;
    if (var > best_var) {
      best_var = var;
      axis = c;
    }
  }
  std::vector<std::size_t> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (exclude.empty() || !exclude[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return rows[a * dim + axis] < rows[b * dim + axis];
  });

  const double eps2 = eps * eps;
  std::vector<std::vector<std::size_t>> neighbors(n);
  for (std::size_t a = 0; a < order.size(); ++a) {
    const std::size_t i = order[a];
    neighbors[i].push_back(i);
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const std::size_t j = order[b];
      if (static_cast<double>(rows[j * dim + axis]) - rows[i * dim + axis] > eps) break;
      double d2 = 0.0;
      for (int c = 0; c < dim && d2 <= eps2; ++c) {
        const double diff = static_cast<double>(rows[i * dim + c]) - rows[j * dim + c];
        d2 += diff * diff;
      }
      if (d2 <= eps2) {
        neighbors[i].push_back(j);
        neighbors[j].push_back(i);
      }
    }
  }
  for (auto& list : neighbors) std::sort(list.begin(), list.end());
  return neighbors;
}

}  // namespace

std::vector<int> Dbscan(std::span<const float> rows, std::size_t num_rows, int dim, double eps, int min_samples,
                        std::span<const std::uint8_t> exclude) {
  if (!(eps > 0.0)) throw ParameterError("eps must be positive");
  if (min_samples < 1) throw ParameterError("min_samples must be >= 1");
  if (dim < 1 || rows.size() != num_rows * static_cast<std::size_t>(dim)) throw StructuralError("bad DBSCAN input shape");
  if (!exclude.empty() && exclude.size() != num_rows) throw StructuralError("exclude mask has the wrong length");

  const auto neighbors = RadiusNeighbors(rows, num_rows, dim, eps, exclude);
  auto excluded = [&](std::size_t i) { return !exclude.empty() && exclude[i]; };
  auto is_core = [&](std::size_t i) {
    return !excluded(i) && neighbors[i].size() >= static_cast<std::size_t>(min_samples);
  };

  constexpr int kUnassigned = -1;
  std::vector<int> labels(num_rows, kUnassigned);
  int next_cluster = 1;
  for (std::size_t seed = 0; seed < num_rows; ++seed) {
    if (labels[seed] != kUnassigned || !is_core(seed)) continue;
    const int cluster = next_cluster++;
    labels[seed] = cluster;
    std::deque<std::size_t> frontier{seed};
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (std::size_t q : neighbors[p]) {
        if (labels[q] != kUnassigned) continue;
        labels[q] = cluster;
        if (is_core(q)) frontier.push_back(q);
      }
    }
  }
  for (int& l : labels)
    if (l == kUnassigned) l = 0;
  return labels;
}

SegmentationResult InstanceSegment(const FeatureCloud& cloud, const GroundingConfig& cfg) {
  SegmentationResult out;
  out.labels = Dbscan(cloud.features, cloud.size(), cloud.dim, cfg.cluster_eps, cfg.cluster_min_samples, cloud.flags);
  out.scores.assign(cloud.size(), 0.0);
  for (std::size_t i = 0; i < cloud.size(); ++i) out.scores[i] = out.labels[i] == 0 ? 0.0 : 1.0;
  return out;
}

namespace {

bool FitPlane(const PointCloud& cloud, std::span<const std::size_t> sample, Plane& plane) {
  if (sample.size() == 3) {
    const Eigen::Vector3d& a = cloud.points[sample[0]];
    const Eigen::Vector3d n = (cloud.points[sample[1]] - a).cross(cloud.points[sample[2]] - a);
    const double len = n.norm();
    if (len < 1e-12) return false;
    plane.normal = n / len;
    plane.offset = -plane.normal.dot(a);
    return true;
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (std::size_t i : sample) centroid += cloud.points[i];
  centroid /= static_cast<double>(sample.size());
  Eigen::MatrixXd centered(static_cast<Eigen::Index>(sample.size()), 3);
  for (std::size_t r = 0; r < sample.size(); ++r) centered.row(static_cast<Eigen::Index>(r)) = (cloud.points[sample[r]] - centroid).transpose();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeFullV);
  if (svd.singularValues()(1) < 1e-12) return false;
  plane.normal = svd.matrixV().col(2).normalized();
  plane.offset = -plane.normal.dot(centroid);
  return true;
}

}  // namespace

TableRemoval RemoveTable(const PointCloud& cloud, const RansacConfig& cfg) {
  cfg.Validate();
  if (cloud.size() < static_cast<std::size_t>(cfg.sample_n)) {
    throw ParameterError("RANSAC needs at least " + std::to_string(cfg.sample_n) + " points");
  }
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);

  TableRemoval best;
  bool found = false;
  std::vector<std::size_t> sample(static_cast<std::size_t>(cfg.sample_n));
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t s = 0; s < sample.size(); ++s) {
      std::size_t idx;
      do {
        idx = pick(rng);
      } while (std::find(sample.begin(), sample.begin() + static_cast<std::ptrdiff_t>(s), idx) !=
               sample.begin() + static_cast<std::ptrdiff_t>(s));
      sample[s] = idx;
    }
    Plane plane;
    if (!FitPlane(cloud, sample, plane)) continue;
    std::size_t count = 0;
    for (const auto& p : cloud.points)
      if (std::abs(plane.SignedDistance(p)) <= cfg.distance_threshold) ++count;
    if (!found || count > best.inlier_count) {
      found = true;
      best.inlier_count = count;
      best.plane = plane;
    }
  }
  if (!found) throw NumericalError("RANSAC found no non-degenerate plane");

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (std::abs(best.plane.SignedDistance(cloud.points[i])) <= cfg.distance_threshold) {
      best.inlier_indices.push_back(i);
    } else {
      best.kept_indices.push_back(i);
      best.kept.points.push_back(cloud.points[i]);
      if (cloud.has_colors()) best.kept.colors.push_back(cloud.colors[i]);
    }
  }
  return best;
}

}  // namespace featfuse
