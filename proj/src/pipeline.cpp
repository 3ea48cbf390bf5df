#include "featfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "featfuse/error.hpp"
#include "featfuse/feature_io.hpp"
#include "featfuse/scene_io.hpp"

namespace featfuse {

SceneInputs LoadSceneInputs(const std::filesystem::path& manifest_or_dir, double coordinate_scale, bool load_dense) {
  SceneInputs in;
  in.scene = io::LoadScene(manifest_or_dir, coordinate_scale);
  if (in.scene.bank_path) in.bank = io::LoadPromptBank(*in.scene.bank_path);
  if (in.scene.object_features_path) {
    in.objects = io::ReadObjectFeatures(*in.scene.object_features_path);
    if (in.objects->num_views() != static_cast<int>(in.scene.views.size()) ||
        in.objects->num_objects() != in.scene.num_objects) {
      throw StructuralError("object feature payload does not match the scene");
    }
  }
  if (load_dense) {
    const bool any = std::any_of(in.scene.views.begin(), in.scene.views.end(),
                                 [](const View& v) { return v.dense_features_path.has_value(); });
    if (any) {
      for (const View& v : in.scene.views) {
        if (!v.dense_features_path) throw StructuralError("view " + std::to_string(v.id) + " has no dense features");
        in.dense.push_back(io::ReadDenseFeatures(*v.dense_features_path));
        in.dense.back().CheckAgainst(v.intrinsics);
      }
    }
  }
  return in;
}

PreparedCloud PrepareCloud(const Scene& scene, double voxel_size, int threads) {
  auto [cloud, labels] = AggregateCloud(scene, threads);
  auto [down, down_labels] = VoxelDownsample(cloud, labels, voxel_size);
  return {std::move(down), std::move(down_labels)};
}

std::vector<QueryContext> ObjectContexts(const Scene& scene, const PromptBank& bank, NegativeStrategy strategy,
                                         Reduction reduction) {
  std::vector<QueryContext> out;
  out.reserve(static_cast<std::size_t>(scene.num_objects));
  for (int n = 1; n <= scene.num_objects; ++n) {
    out.push_back(BuildContext(bank, scene.object_instance_ids, scene.catalog_instance(n), strategy, reduction));
  }
  return out;
}

void FuseOptions::Validate() const {
  projection.Validate();
  if (threads < 0) throw ParameterError("threads must be >= 0");
}

FuseOutput FuseScene(const Scene& scene, const PreparedCloud& prepared, const PromptBank* bank,
                     const ObjectFeatures* objects, std::span<const DenseFeatureMap> dense,
                     const FuseOptions& options) {
  options.Validate();
  std::vector<QueryContext> contexts;
  if (UsesInformativeness(options.weighting)) {
    if (bank == nullptr) throw ParameterError("informativeness weighting needs a prompt bank");
    contexts = ObjectContexts(scene, *bank, options.strategy, options.reduction);
  }

  FuseOutput out;
  if (options.mode == FusionMode::kObject) {
    if (objects == nullptr) throw ParameterError("object-wise fusion needs object-level view features");
    const ObjectVisibility objvis = ComputeObjectVisibility(scene);
    out.weights = ComputeObjectWeights(*objects, objvis, options.weighting, contexts);
    ObjectFusionResult fused = FuseObjectwise(*objects, out.weights, options.threads);
    out.cloud = ScatterObjectFeatures(fused, prepared.cloud, prepared.labels);
    out.object_errors = std::move(fused.errors);
  } else {
    if (dense.size() != scene.views.size()) throw ParameterError("point-wise fusion needs dense features for every view");
    VisibilityMap vis = BuildVisibility(scene, prepared.cloud, options.projection, options.threads);
    out.weights = ComputePointWeights(scene, dense, vis, prepared.labels, options.weighting, contexts, options.threads);
    out.cloud = FusePointwise(scene, prepared.cloud, dense, vis, out.weights, options.threads);
    out.visibility = std::move(vis);
  }
  return out;
}

SceneInputs SubsetViews(const SceneInputs& inputs, std::span<const int> view_indices) {
  const int V = static_cast<int>(inputs.scene.views.size());
  SceneInputs out;
  out.scene = inputs.scene;
  out.scene.views.clear();
  out.bank = inputs.bank;
  for (int idx : view_indices) {
    if (idx < 0 || idx >= V) throw LookupError("view index " + std::to_string(idx) + " out of range");
    out.scene.views.push_back(inputs.scene.views[static_cast<std::size_t>(idx)]);
    if (!inputs.dense.empty()) out.dense.push_back(inputs.dense[static_cast<std::size_t>(idx)]);
  }
  if (inputs.objects) {
    const ObjectFeatures& src = *inputs.objects;
    ObjectFeatures sub(static_cast<int>(view_indices.size()), src.num_objects(), src.dim());
    for (std::size_t k = 0; k < view_indices.size(); ++k) {
      for (int n = 1; n <= src.num_objects(); ++n) {
        if (src.valid(view_indices[k], n)) sub.Set(static_cast<int>(k), n, src.feature(view_indices[k], n));
      }
    }
    out.objects = std::move(sub);
  }
  return out;
}

namespace {

struct MaskPair {
  std::vector<std::uint8_t> pred;
  std::vector<std::uint8_t> gt;
};

MaskPair BuildMasks(std::span<const int> predicted, const Mask3D& gt, int object, bool exclude_table,
                    bool referring) {
  MaskPair m;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (exclude_table && gt.labels[i] == 0) continue;
    m.pred.push_back(referring ? static_cast<std::uint8_t>(predicted[i] != 0)
                               : static_cast<std::uint8_t>(predicted[i] == object));
    m.gt.push_back(static_cast<std::uint8_t>(gt.labels[i] == object));
  }
  return m;
}

void CheckShapes(const FeatureCloud& cloud, const Mask3D& gt) {
  if (cloud.size() != gt.size()) throw StructuralError("ground-truth labels do not match the cloud");
}

}  // namespace

std::vector<EvalRecord> EvaluateReferring(const FeatureCloud& cloud, const Mask3D& gt, const Scene& scene,
                                          const PromptBank& bank, const EvalOptions& options,
                                          const std::string& scene_tag) {
  CheckShapes(cloud, gt);
  options.grounding.Validate();
  std::vector<EvalRecord> records;
  for (int n = 1; n <= scene.num_objects; ++n) {
    const int instance = scene.catalog_instance(n);
    const QueryContext ctx =
        BuildContext(bank, scene.object_instance_ids, instance, options.strategy, options.reduction);
    const SegmentationResult seg = ReferSegment(cloud, ctx, options.grounding, options.threads);
    const MaskPair m = BuildMasks(seg.labels, gt, n, options.exclude_table, true);
    records.push_back(MakeRecord(scene_tag + "/object_" + std::to_string(n), instance, m.pred, m.gt));
  }
  return records;
}

std::vector<EvalRecord> EvaluateSemantic(const FeatureCloud& cloud, const Mask3D& gt, const Scene& scene,
                                         const PromptBank& bank, const EvalOptions& options,
                                         const std::string& scene_tag) {
  CheckShapes(cloud, gt);
  std::vector<Embedding> prompts;
  for (int n = 1; n <= scene.num_objects; ++n) prompts.push_back(bank.prompt(scene.catalog_instance(n)));
  const SegmentationResult seg = SemanticSegment(cloud, prompts, options.threads);
  std::vector<EvalRecord> records;
  for (int n = 1; n <= scene.num_objects; ++n) {
    const MaskPair m = BuildMasks(seg.labels, gt, n, options.exclude_table, false);
    records.push_back(MakeRecord(scene_tag + "/class_" + std::to_string(n), scene.catalog_instance(n), m.pred, m.gt));
  }
  return records;
}

InstanceEval EvaluateInstances(const FeatureCloud& cloud, const Mask3D& gt, const GroundingConfig& cfg) {
  CheckShapes(cloud, gt);
  InstanceEval out;
  out.labels = InstanceSegment(cloud, cfg).labels;
  out.clusters = out.labels.empty() ? 0 : *std::max_element(out.labels.begin(), out.labels.end());
  std::set<int> ids;
  for (int g : gt.labels) {
    if (g != 0) ids.insert(g);
  }
  out.gt_instances = static_cast<int>(ids.size());
  out.ap25 = Ap25(out.labels, gt.labels);
  return out;
}

std::array<std::uint8_t, 3> HeatColor(double score) {
  const double s = std::clamp(std::isfinite(score) ? score : 0.0, 0.0, 1.0);
  const auto r = static_cast<std::uint8_t>(std::lround(128.0 + 127.0 * s));
  const auto gb = static_cast<std::uint8_t>(std::lround(128.0 * (1.0 - s)));
  return {r, gb, gb};
}

void WriteHeatmapPly(const std::filesystem::path& path, const FeatureCloud& cloud, std::span<const double> scores,
                     std::span<const int> labels) {
  if (scores.size() != cloud.size()) throw StructuralError("one score per point required");
  if (!labels.empty() && labels.size() != cloud.size()) throw StructuralError("one label per point required");
  PointCloud kept;
  std::vector<std::array<std::uint8_t, 3>> colors;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (cloud.unfused(i) || (!labels.empty() && labels[i] == 0)) continue;
    kept.points.push_back(cloud.cloud.points[i]);
    colors.push_back(HeatColor(scores[i]));
  }
  io::WritePly(path, kept, colors);
}

std::vector<std::vector<int>> ViewAblationSubsets(int num_views, std::uint64_t seed) {
  if (num_views < 1) throw ParameterError("need at least one view");
  std::vector<int> order(static_cast<std::size_t>(num_views));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> out;
  for (int k = 2; k < num_views; k *= 2) out.emplace_back(order.begin(), order.begin() + k);
  out.emplace_back(order.begin(), order.end());
  return out;
}

}  // namespace featfuse
