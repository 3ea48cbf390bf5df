#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "featfuse/fusion.hpp"
#include "featfuse/grounding.hpp"
#include "featfuse/metrics.hpp"
#include "featfuse/projection.hpp"
#include "featfuse/prompt_bank.hpp"
#include "featfuse/scene.hpp"

// End-to-end composition of the modules: load, lift, fuse, ground, evaluate.
namespace featfuse {

struct SceneInputs {
  Scene scene;
  std::optional<PromptBank> bank;
  std::optional<ObjectFeatures> objects;
  std::vector<DenseFeatureMap> dense;  // empty or one per view
};

// Loads the manifest plus whichever payloads it references.
SceneInputs LoadSceneInputs(const std::filesystem::path& manifest_or_dir, double coordinate_scale = 1.0,
                            bool load_dense = true);

struct PreparedCloud {
  PointCloud cloud;
  Mask3D labels;
};

// Aggregate every view, then voxel-downsample.
PreparedCloud PrepareCloud(const Scene& scene, double voxel_size, int threads = 1);

// contexts[n - 1] for local object n.
std::vector<QueryContext> ObjectContexts(const Scene& scene, const PromptBank& bank, NegativeStrategy strategy,
                                         Reduction reduction);

struct FuseOptions {
  FusionMode mode = FusionMode::kObject;
  Weighting weighting = Weighting::kLambdaG;
  NegativeStrategy strategy = NegativeStrategy::kScene;
  Reduction reduction = Reduction::kMax;
  ProjectionConfig projection;
  int threads = 1;

  void Validate() const;
};

struct FuseOutput {
  FeatureCloud cloud;
  FusionWeights weights;
  std::vector<std::string> object_errors;  // object mode only
  std::optional<VisibilityMap> visibility;  // point mode only
};

// Fuses over the views of `scene` onto a prepared cloud. Object mode needs
// `objects`; point mode needs `dense`. Contexts (for G) come from `bank`.
FuseOutput FuseScene(const Scene& scene, const PreparedCloud& prepared, const PromptBank* bank,
                     const ObjectFeatures* objects, std::span<const DenseFeatureMap> dense,
                     const FuseOptions& options);

// Keeps the listed views (in the given order) of the scene and of its
// per-view payloads.
SceneInputs SubsetViews(const SceneInputs& inputs, std::span<const int> view_indices);

struct EvalOptions {
  GroundingConfig grounding;
  NegativeStrategy strategy = NegativeStrategy::kScene;
  Reduction reduction = Reduction::kMax;
  // Table points (ground-truth label 0) are left out of referring and
  // semantic IoU.
  bool exclude_table = true;
  int threads = 1;
};

// One record per scene object, querying its catalog prompt.
std::vector<EvalRecord> EvaluateReferring(const FeatureCloud& cloud, const Mask3D& gt, const Scene& scene,
                                          const PromptBank& bank, const EvalOptions& options,
                                          const std::string& scene_tag = "scene");

// Classes are the scene's catalog prompts; one record per object.
std::vector<EvalRecord> EvaluateSemantic(const FeatureCloud& cloud, const Mask3D& gt, const Scene& scene,
                                         const PromptBank& bank, const EvalOptions& options,
                                         const std::string& scene_tag = "scene");

struct InstanceEval {
  std::vector<int> labels;
  int clusters = 0;
  int gt_instances = 0;
  double ap25 = 0.0;
};

InstanceEval EvaluateInstances(const FeatureCloud& cloud, const Mask3D& gt, const GroundingConfig& cfg);

// Gray for score 0 rising to red for score 1 (clamped).
std::array<std::uint8_t, 3> HeatColor(double score);

// Fused rows only, colored by their score. When `labels` is given, rows
// labeled 0 (table) are left out as well.
void WriteHeatmapPly(const std::filesystem::path& path, const FeatureCloud& cloud, std::span<const double> scores,
                     std::span<const int> labels = {});

// Nested view prefixes of a seeded permutation: sizes 2, 4, 8, ... capped at V
// (V itself always included).
std::vector<std::vector<int>> ViewAblationSubsets(int num_views, std::uint64_t seed);

}  // namespace featfuse
