#include "featfuse/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "featfuse/parallel.hpp"

namespace featfuse {

namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void Add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      compensation_ += (sum_ - t) + x;
    } else {
      compensation_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + compensation_; }

 private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

// Accumulates sum_v w_v * z_v and sum_v w_v in ascending view order.
class WeightedMean {
 public:
  explicit WeightedMean(int dim) : coords_(static_cast<std::size_t>(dim)) {}

  void Add(std::span<const float> z, double w) {
    if (w == 0.0) return;
    for (std::size_t c = 0; c < coords_.size(); ++c) coords_[c].Add(w * z[c]);
    total_.Add(w);
  }

  // Writes the normalized mean; false when nothing (or a zero vector) was
  // accumulated.
  bool Finish(std::span<float> out) const {
    const double total = total_.value();
    if (!(total > 0.0)) return false;
    double norm = 0.0;
    std::vector<double> mean(coords_.size());
    for (std::size_t c = 0; c < coords_.size(); ++c) {
      mean[c] = coords_[c].value() / total;
      norm += mean[c] * mean[c];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) return false;
    for (std::size_t c = 0; c < coords_.size(); ++c) out[c] = static_cast<float>(mean[c] / norm);
    return true;
  }

 private:
  std::vector<CompensatedSum> coords_;
  CompensatedSum total_;
};

const QueryContext& ContextFor(std::span<const QueryContext> contexts, int object) {
  if (object < 1 || static_cast<std::size_t>(object) > contexts.size()) {
    throw StructuralError("no query context for object " + std::to_string(object));
  }
  return contexts[static_cast<std::size_t>(object - 1)];
}

}  // namespace

FusionMode ParseFusionMode(const std::string& name) {
  if (name == "point") return FusionMode::kPoint;
  if (name == "object") return FusionMode::kObject;
  throw ParameterError("unknown fusion mode '" + name + "'");
}

Weighting ParseWeighting(const std::string& name) {
  if (name == "uniform") return Weighting::kUniform;
  if (name == "lambda") return Weighting::kLambda;
  if (name == "g") return Weighting::kG;
  if (name == "lambda-g") return Weighting::kLambdaG;
  throw ParameterError("unknown weighting '" + name + "'");
}

std::string ToString(FusionMode m) { return m == FusionMode::kPoint ? "point" : "object"; }

std::string ToString(Weighting w) {
  switch (w) {
    case Weighting::kUniform: return "uniform";
    case Weighting::kLambda: return "lambda";
    case Weighting::kG: return "g";
    case Weighting::kLambdaG: return "lambda-g";
  }
  return "?";
}

void DenseFeatureMap::CheckAgainst(const CameraIntrinsics& k) const {
  if (grid_width < 1 || grid_height < 1 || k.width % grid_width != 0 || k.height % grid_height != 0) {
    throw StructuralError("feature grid " + std::to_string(grid_width) + "x" + std::to_string(grid_height) +
                          " does not divide image " + std::to_string(k.width) + "x" + std::to_string(k.height));
  }
  if (data.size() != static_cast<std::size_t>(grid_width) * grid_height * dim) {
    throw StructuralError("feature grid buffer size mismatch");
  }
}

std::span<const float> DenseFeatureMap::Sample(Pixel px, const CameraIntrinsics& k) const {
  return cell(px.x / (k.width / grid_width), px.y / (k.height / grid_height));
}

std::size_t ObjectFeatures::Slot(int v, int n) const {
  if (v < 0 || v >= num_views_ || n < 1 || n > num_objects_) throw LookupError("object feature index out of range");
  return static_cast<std::size_t>(v) * num_objects_ + static_cast<std::size_t>(n - 1);
}

void ObjectFeatures::Set(int v, int n, std::span<const float> feature) {
  if (static_cast<int>(feature.size()) != dim_) throw StructuralError("object feature dimension mismatch");
  const std::size_t slot = Slot(v, n);
  std::copy(feature.begin(), feature.end(), data_.begin() + static_cast<std::ptrdiff_t>(slot * dim_));
  valid_[slot] = 1;
}

void ObjectFeatures::Invalidate(int v, int n) {
  const std::size_t slot = Slot(v, n);
  std::fill_n(data_.begin() + static_cast<std::ptrdiff_t>(slot * dim_), dim_, 0.0f);
  valid_[slot] = 0;
}

void FeatureCloud::Validate() const {
  if (dim < 1) throw StructuralError("feature cloud dim must be >= 1");
  if (features.size() != size() * static_cast<std::size_t>(dim) || flags.size() != size()) {
    throw StructuralError("feature cloud buffers do not match point count");
  }
  for (float f : features) {
    if (!std::isfinite(f)) throw StructuralError("feature cloud has non-finite entries");
  }
  for (std::size_t i = 0; i < size(); ++i) {
    if (!unfused(i)) continue;
    const auto r = row(i);
    if (std::any_of(r.begin(), r.end(), [](float x) { return x != 0.0f; })) {
      throw StructuralError("unfused row " + std::to_string(i) + " carries a feature");
    }
  }
}

double Informativeness(std::span<const float> feature, const QueryContext& ctx) {
  if (Norm(feature) == 0.0) throw ParameterError("informativeness of a zero-norm feature");
  const double positive = Cosine(feature, ctx.positive);
  double negative = 0.0;
  if (!ctx.negatives.empty()) {
    if (ctx.reduction == Reduction::kMax) {
      negative = -std::numeric_limits<double>::infinity();
      for (const auto& q : ctx.negatives) negative = std::max(negative, Cosine(feature, q));
    } else {
      for (const auto& q : ctx.negatives) negative += Cosine(feature, q);
      negative /= static_cast<double>(ctx.negatives.size());
    }
  }
  return std::max(0.0, positive - negative);
}

FusionWeights ComputePointWeights(const Scene& scene, std::span<const DenseFeatureMap> features,
                                  const VisibilityMap& vis, const Mask3D& labels, Weighting weighting,
                                  std::span<const QueryContext> contexts, int threads) {
  const std::size_t num_views = scene.views.size();
  if (vis.num_views() != num_views || features.size() != num_views) {
    throw StructuralError("views, features and visibility disagree on the view count");
  }
  if (labels.size() != vis.num_points()) throw StructuralError("labels and visibility disagree on point count");
  for (std::size_t v = 0; v < num_views; ++v) features[v].CheckAgainst(scene.views[v].intrinsics);

  FusionWeights w(num_views, vis.num_points());
  const bool informative = UsesInformativeness(weighting);
  ParallelFor(num_views, threads, [&](std::size_t v) {
    const CameraIntrinsics& k = scene.views[v].intrinsics;
    for (std::size_t i = 0; i < vis.num_points(); ++i) {
      if (!vis.visible(v, i)) continue;
      const int n = labels.labels[i];
      // Points without an object (table) have no positive prompt.
      if (!informative || n == 0) {
        w.at(v, i) = 1.0;
        continue;
      }
      const auto z = features[v].Sample(vis.pixel(v, i), k);
      w.at(v, i) = Norm(z) == 0.0 ? 0.0 : Informativeness(z, ContextFor(contexts, n));
    }
  });
  return w;
}

FeatureCloud FusePointwise(const Scene& scene, const PointCloud& cloud,
                           std::span<const DenseFeatureMap> features, const VisibilityMap& vis,
                           const FusionWeights& weights, int threads) {
  const std::size_t num_views = scene.views.size();
  if (features.size() != num_views || vis.num_views() != num_views || weights.num_views != num_views) {
    throw StructuralError("views, features, visibility and weights disagree on the view count");
  }
  if (vis.num_points() != cloud.size() || weights.num_targets != cloud.size()) {
    throw StructuralError("visibility or weights do not match the cloud");
  }
  if (num_views == 0) throw ParameterError("no views to fuse");
  const int dim = features.front().dim;
  for (std::size_t v = 0; v < num_views; ++v) {
    if (features[v].dim != dim) throw StructuralError("dense feature dims differ across views");
    features[v].CheckAgainst(scene.views[v].intrinsics);
  }

  FeatureCloud out(cloud, dim, Provenance::kFusedTarget);
  ParallelFor(cloud.size(), threads, [&](std::size_t i) {
    WeightedMean mean(dim);
    for (std::size_t v = 0; v < num_views; ++v) {
      if (!vis.visible(v, i)) continue;
      const double w = weights.at(v, i);
      if (w < 0.0) throw ParameterError("negative fusion weight");
      mean.Add(features[v].Sample(vis.pixel(v, i), scene.views[v].intrinsics), w);
    }
    if (!mean.Finish(out.row(i))) out.flags[i] |= kFlagUnfused;
  });
  return out;
}

FusionWeights ComputeObjectWeights(const ObjectFeatures& features, const ObjectVisibility& objvis,
                                   Weighting weighting, std::span<const QueryContext> contexts) {
  if (static_cast<std::size_t>(features.num_views()) != objvis.num_views() ||
      features.num_objects() != objvis.num_objects()) {
    throw StructuralError("object features and object visibility disagree on shape");
  }
  const int num_views = features.num_views();
  const int num_objects = features.num_objects();
  FusionWeights w(static_cast<std::size_t>(num_views), static_cast<std::size_t>(num_objects));
  w.fallback.assign(static_cast<std::size_t>(num_objects), 0);

  for (int n = 1; n <= num_objects; ++n) {
    const std::size_t t = static_cast<std::size_t>(n - 1);
    double total = 0.0;
    double lambda_total = 0.0;
    for (int v = 0; v < num_views; ++v) {
      const double lambda = static_cast<double>(objvis.count(static_cast<std::size_t>(v), n));
      // A view that shows none of the object's pixels never contributes,
      // whatever its payload claims.
      if (!features.valid(v, n) || lambda == 0.0) continue;
      lambda_total += lambda;
      double g = 1.0;
      if (UsesInformativeness(weighting)) {
        const auto z = features.feature(v, n);
        g = Norm(z) == 0.0 ? 0.0 : Informativeness(z, ContextFor(contexts, n));
      }
      double omega = 0.0;
      switch (weighting) {
        case Weighting::kUniform: omega = 1.0; break;
        case Weighting::kLambda: omega = lambda; break;
        case Weighting::kG: omega = g; break;
        case Weighting::kLambdaG: omega = lambda * g; break;
      }
      w.at(static_cast<std::size_t>(v), t) = omega;
      total += omega;
    }
    if (UsesInformativeness(weighting) && total == 0.0 && lambda_total > 0.0) {
      for (int v = 0; v < num_views; ++v) {
        w.at(static_cast<std::size_t>(v), t) =
            features.valid(v, n) ? static_cast<double>(objvis.count(static_cast<std::size_t>(v), n)) : 0.0;
      }
      w.fallback[t] = 1;
    }
  }
  return w;
}

ObjectFusionResult FuseObjectwise(const ObjectFeatures& features, const FusionWeights& weights, int threads) {
  if (weights.num_views != static_cast<std::size_t>(features.num_views()) ||
      weights.num_targets != static_cast<std::size_t>(features.num_objects())) {
    throw StructuralError("weights do not match object features");
  }
  ObjectFusionResult out;
  out.num_objects = features.num_objects();
  out.dim = features.dim();
  out.features.assign(static_cast<std::size_t>(out.num_objects) * out.dim, 0.0f);
  out.fused.assign(static_cast<std::size_t>(out.num_objects), 0);
  out.errors.assign(static_cast<std::size_t>(out.num_objects), "");

  ParallelFor(static_cast<std::size_t>(out.num_objects), threads, [&](std::size_t t) {
    const int n = static_cast<int>(t) + 1;
    WeightedMean mean(out.dim);
    bool any_valid = false;
    for (int v = 0; v < features.num_views(); ++v) {
      if (!features.valid(v, n)) continue;
      any_valid = true;
      const double w = weights.at(static_cast<std::size_t>(v), t);
      if (w < 0.0) throw ParameterError("negative fusion weight");
      mean.Add(features.feature(v, n), w);
    }
    std::span<float> row(out.features.data() + t * out.dim, static_cast<std::size_t>(out.dim));
    if (!any_valid) {
      out.errors[t] = "object " + std::to_string(n) + " is not valid in any view";
    } else if (!mean.Finish(row)) {
      out.errors[t] = "object " + std::to_string(n) + " has zero total fusion weight";
    } else {
      out.fused[t] = 1;
    }
  });
  return out;
}

FeatureCloud ScatterObjectFeatures(const ObjectFusionResult& objects, const PointCloud& cloud,
                                   const Mask3D& labels) {
  if (labels.size() != cloud.size()) throw StructuralError("labels and cloud sizes differ");
  FeatureCloud out(cloud, objects.dim, Provenance::kFusedTarget);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const int n = labels.labels[i];
    if (n < 0 || n > objects.num_objects) {
      throw StructuralError("label " + std::to_string(n) + " out of range [0, " +
                            std::to_string(objects.num_objects) + "]");
    }
    if (n == 0 || !objects.fused[static_cast<std::size_t>(n - 1)]) {
      out.flags[i] |= kFlagUnfused;
      continue;
    }
    const auto src = objects.feature(n);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

CropRegion ComputeCropRegion(const View& view, int object) {
  int x0 = view.mask.width(), y0 = view.mask.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < view.mask.height(); ++y) {
    for (int x = 0; x < view.mask.width(); ++x) {
      if (view.mask.at(x, y) != object) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) {
    throw LookupError("object " + std::to_string(object) + " not visible in view " + std::to_string(view.id));
  }
  CropRegion crop;
  crop.view = view.id;
  crop.object = object;
  crop.x_min = x0;
  crop.y_min = y0;
  crop.width = x1 - x0 + 1;
  crop.height = y1 - y0 + 1;
  crop.mask.assign(static_cast<std::size_t>(crop.width) * crop.height, 0);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (view.mask.at(x, y) == object) crop.mask[static_cast<std::size_t>(y - y0) * crop.width + (x - x0)] = 1;
  return crop;
}

double DistillLoss(const FeatureCloud& prediction, const FeatureCloud& target) {
  if (prediction.size() != target.size() || prediction.dim != target.dim) {
    throw StructuralError("prediction and target clouds differ in shape");
  }
  CompensatedSum sum;
  std::size_t count = 0;
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    if (prediction.unfused(i) || target.unfused(i)) continue;
    sum.Add(1.0 - Cosine(prediction.row(i), target.row(i)));
    ++count;
  }
  if (count == 0) throw NumericalError("no rows to compare");
  return sum.value() / static_cast<double>(count);
}

}  // namespace featfuse
