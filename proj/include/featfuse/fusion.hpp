#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "featfuse/projection.hpp"
#include "featfuse/prompt_bank.hpp"
#include "featfuse/scene.hpp"

namespace featfuse {

enum class FusionMode { kPoint, kObject };

// How per-view contributions are weighted.
//   kUniform  object mode: 1 per valid view with Lambda_{v,n} > 0.  point mode: Lambda_{v,i}.
//   kLambda   object mode: mask pixel count Lambda_{v,n}.  point mode: Lambda_{v,i}.
//   kG        informativeness G (point mode still gated by Lambda_{v,i}).
//   kLambdaG  Lambda * G.
enum class Weighting { kUniform, kLambda, kG, kLambdaG };

FusionMode ParseFusionMode(const std::string& name);
Weighting ParseWeighting(const std::string& name);
std::string ToString(FusionMode m);
std::string ToString(Weighting w);
inline bool UsesInformativeness(Weighting w) { return w == Weighting::kG || w == Weighting::kLambdaG; }

// Patch-grid feature map of one view. Pixel (x, y) of a W x H image samples
// cell (x / (W / grid_width), y / (H / grid_height)).
struct DenseFeatureMap {
  int grid_width = 0;
  int grid_height = 0;
  int dim = 0;
  std::vector<float> data;  // grid_height x grid_width x dim

  DenseFeatureMap() = default;
  DenseFeatureMap(int gw, int gh, int c)
      : grid_width(gw), grid_height(gh), dim(c),
        data(static_cast<std::size_t>(gw) * gh * c, 0.0f) {}

  std::span<const float> cell(int gx, int gy) const {
    return {data.data() + (static_cast<std::size_t>(gy) * grid_width + gx) * dim, static_cast<std::size_t>(dim)};
  }
  std::span<float> cell(int gx, int gy) {
    return {data.data() + (static_cast<std::size_t>(gy) * grid_width + gx) * dim, static_cast<std::size_t>(dim)};
  }
  // Throws StructuralError unless the grid evenly divides the image.
  void CheckAgainst(const CameraIntrinsics& k) const;
  std::span<const float> Sample(Pixel px, const CameraIntrinsics& k) const;
};

// One embedding per (view, object) plus a validity bit; invalid rows are
// never read.
class ObjectFeatures {
 public:
  ObjectFeatures() = default;
  ObjectFeatures(int num_views, int num_objects, int dim)
      : num_views_(num_views), num_objects_(num_objects), dim_(dim),
        data_(static_cast<std::size_t>(num_views) * num_objects * dim, 0.0f),
        valid_(static_cast<std::size_t>(num_views) * num_objects, 0) {}

  int num_views() const { return num_views_; }
  int num_objects() const { return num_objects_; }
  int dim() const { return dim_; }

  bool valid(int v, int n) const { return valid_[Slot(v, n)] != 0; }
  std::span<const float> feature(int v, int n) const {
    return {data_.data() + Slot(v, n) * dim_, static_cast<std::size_t>(dim_)};
  }
  void Set(int v, int n, std::span<const float> feature);
  void Invalidate(int v, int n);

  const std::vector<float>& raw_data() const { return data_; }
  const std::vector<std::uint8_t>& raw_valid() const { return valid_; }

 private:
  std::size_t Slot(int v, int n) const;

  int num_views_ = 0;
  int num_objects_ = 0;
  int dim_ = 0;
  std::vector<float> data_;
  std::vector<std::uint8_t> valid_;
};

enum class Provenance { kFusedTarget, kExternalPrediction };

inline constexpr std::uint8_t kFlagUnfused = 1;  // row carries no feature (all zeros)

struct FeatureCloud {
  PointCloud cloud;
  int dim = 0;
  std::vector<float> features;      // M x dim
  std::vector<std::uint8_t> flags;  // M
  Provenance provenance = Provenance::kFusedTarget;

  FeatureCloud() = default;
  FeatureCloud(PointCloud c, int d, Provenance p = Provenance::kFusedTarget)
      : cloud(std::move(c)), dim(d),
        features(cloud.size() * static_cast<std::size_t>(d), 0.0f), flags(cloud.size(), 0), provenance(p) {}

  std::size_t size() const { return cloud.size(); }
  std::span<const float> row(std::size_t i) const { return {features.data() + i * dim, static_cast<std::size_t>(dim)}; }
  std::span<float> row(std::size_t i) { return {features.data() + i * dim, static_cast<std::size_t>(dim)}; }
  bool unfused(std::size_t i) const { return (flags[i] & kFlagUnfused) != 0; }
  void Validate() const;
};

// Scalar weight per (view, point) or (view, object), row-major by view.
struct FusionWeights {
  std::size_t num_views = 0;
  std::size_t num_targets = 0;
  std::vector<double> values;
  // Object mode only: 1 where every view clipped to G = 0 and the Lambda
  // fallback replaced the weights.
  std::vector<std::uint8_t> fallback;

  FusionWeights() = default;
  FusionWeights(std::size_t v, std::size_t t) : num_views(v), num_targets(t), values(v * t, 0.0) {}

  double at(std::size_t v, std::size_t t) const { return values[v * num_targets + t]; }
  double& at(std::size_t v, std::size_t t) { return values[v * num_targets + t]; }
};

// max(0, cos(z, q+) - reduce_{q in Q-} cos(z, q)). With no negatives the
// subtracted term is 0. Throws ParameterError for a zero-norm z.
double Informativeness(std::span<const float> feature, const QueryContext& ctx);
inline double PointInformativeness(std::span<const float> z, const QueryContext& ctx) { return Informativeness(z, ctx); }
inline double ObjectInformativeness(std::span<const float> z, const QueryContext& ctx) { return Informativeness(z, ctx); }

// contexts[n - 1] belongs to object n; required for the G weightings.
FusionWeights ComputePointWeights(const Scene& scene, std::span<const DenseFeatureMap> features,
                                  const VisibilityMap& vis, const Mask3D& labels, Weighting weighting,
                                  std::span<const QueryContext> contexts, int threads = 1);

// Weighted mean of sampled view features per point, L2-normalized. Points with
// zero total weight are left zero and flagged kFlagUnfused.
FeatureCloud FusePointwise(const Scene& scene, const PointCloud& cloud,
                           std::span<const DenseFeatureMap> features, const VisibilityMap& vis,
                           const FusionWeights& weights, int threads = 1);

// Applies the all-G-zero fallback to Lambda_{v,n}.
FusionWeights ComputeObjectWeights(const ObjectFeatures& features, const ObjectVisibility& objvis,
                                   Weighting weighting, std::span<const QueryContext> contexts);

struct ObjectFusionResult {
  int num_objects = 0;
  int dim = 0;
  std::vector<float> features;      // N x dim, row n - 1 for object n
  std::vector<std::uint8_t> fused;  // 1 if object n received a feature
  std::vector<std::string> errors;  // empty string when fused

  std::span<const float> feature(int n) const {
    return {features.data() + static_cast<std::size_t>(n - 1) * dim, static_cast<std::size_t>(dim)};
  }
};

// Objects with no valid view (or zero total weight) get an error entry;
// the remaining objects are still fused.
ObjectFusionResult FuseObjectwise(const ObjectFeatures& features, const FusionWeights& weights,
                                  int threads = 1);

// Copies each object's fused row onto its points. Label 0 and unfused objects
// yield zero, flagged rows.
FeatureCloud ScatterObjectFeatures(const ObjectFusionResult& objects, const PointCloud& cloud,
                                   const Mask3D& labels);

struct CropRegion {
  int view = 0;
  int object = 0;
  int x_min = 0;
  int y_min = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> mask;  // height x width, 1 inside the object

  bool inside(int x, int y) const { return mask[static_cast<std::size_t>(y - y_min) * width + (x - x_min)] != 0; }
};

// Tight box around object n's mask pixels in the view. Throws LookupError
// ("object not visible") when the mask is empty.
CropRegion ComputeCropRegion(const View& view, int object);

// Mean of 1 - cos over rows flagged in neither cloud.
double DistillLoss(const FeatureCloud& prediction, const FeatureCloud& target);

}  // namespace featfuse
