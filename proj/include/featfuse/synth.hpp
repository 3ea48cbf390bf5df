#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "featfuse/fusion.hpp"
#include "featfuse/prompt_bank.hpp"
#include "featfuse/scene.hpp"

// Procedural tabletop scenes with analytic depth/mask rendering and a
// prototype embedding space standing in for CLIP.
namespace featfuse::synth {

enum class PrimitiveKind { kSphere, kBox };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  int object_id = 0;  // local id n in [1..N]
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.0;                                     // sphere
  Eigen::Vector3d half_extents = Eigen::Vector3d::Zero();  // box (axis aligned)

  static Primitive Sphere(int id, const Eigen::Vector3d& center, double radius);
  static Primitive Box(int id, const Eigen::Vector3d& center, const Eigen::Vector3d& half_extents);

  // Smallest t > 0 with origin + t * dir on the surface.
  std::optional<double> Intersect(const Eigen::Vector3d& origin, const Eigen::Vector3d& dir) const;
  // Unsigned distance from p to the primitive's surface.
  double SurfaceDistance(const Eigen::Vector3d& p) const;
  Eigen::Vector3d aabb_min() const;
  Eigen::Vector3d aabb_max() const;
};

struct SynthConfig {
  std::uint64_t seed = 0;
  int num_objects = 6;    // [1..12]
  int num_views = 16;     // [1..73]
  int width = 96;
  int height = 72;
  double focal = 84.0;    // pixels, fx = fy
  double camera_radius = 0.9;
  double table_half_extent = 0.4;
  double placement_half_extent = 0.3;
  bool use_spheres = true;
  bool use_boxes = true;
  int dim = 32;
  int catalog_size = 24;
  int prompts_per_instance = 3;
  double text_noise = 0.05;
  double feature_noise = 0.1;
  double corruption = 0.0;
  int patch_size = 1;  // dense feature cell edge in pixels

  void Validate() const;
};

// Camera centers on a Fibonacci lattice over the upper hemisphere, every
// principal axis aimed at the world origin (table center).
std::vector<Pose> HemisphereRig(int num_views, double radius);
Pose LookAt(const Eigen::Vector3d& eye, const Eigen::Vector3d& target);
CameraIntrinsics MakeIntrinsics(const SynthConfig& cfg);

// Prototype unit vectors for catalog instances 1..K (pairwise cosine < 0.5),
// noisy prompt sets around them, a background distractor and four generic
// canonical vectors.
struct ConceptBank {
  int dim = 0;
  std::vector<Embedding> prototypes;  // prototypes[k - 1] for catalog instance k
  Embedding distractor;
  PromptBank bank;

  const Embedding& prototype(int instance) const;
};

inline constexpr double kPrototypeSeparation = 0.5;

ConceptBank MakeConceptBank(const SynthConfig& cfg);

struct SceneTruth {
  std::vector<Primitive> primitives;
  double table_half_extent = 0.0;
};

struct SynthScene {
  Scene scene;
  SceneTruth truth;
};

struct RenderedView {
  DepthMap depth;
  InstanceMask mask;
};

// Nearest hit among primitives and the finite table square z = 0.
RenderedView RenderView(const SceneTruth& truth, const CameraIntrinsics& intrinsics, const Pose& pose);

// Renders an explicit layout through the hemisphere rig of `cfg`.
Scene RenderScene(const SceneTruth& truth, const SynthConfig& cfg, std::vector<int> object_instance_ids,
                  int threads = 1);

// Random non-overlapping layout on the table; throws ParameterError
// ("scene too crowded") after 1000 rejected placements of one object.
SynthScene GenerateScene(const SynthConfig& cfg, const ConceptBank& concepts, int threads = 1);

struct SynthFeatures {
  ObjectFeatures objects;
  std::vector<DenseFeatureMap> dense;
  // Per (view, object-1): catalog instance whose prototype replaced the
  // object's feature, 0 when clean.
  std::vector<int> corruption_source;
  int num_objects = 0;

  bool corrupted(int v, int n) const {
    return corruption_source[static_cast<std::size_t>(v) * num_objects + static_cast<std::size_t>(n - 1)] != 0;
  }
};

// Object-level (and optionally dense) features per view. Each visible
// (v, n) is either the prototype of n plus Gaussian noise, or, with
// probability cfg.corruption, a feature built from another in-scene instance
// that is strictly closer to that instance's prompt than to n's.
SynthFeatures GenerateViewFeatures(const Scene& scene, const ConceptBank& concepts, const SynthConfig& cfg,
                                   bool dense = true);

// Writes a complete scene directory: scene.json, views/, features/, bank.json,
// truth.json.
void WriteSceneDirectory(const std::filesystem::path& dir, const SynthScene& synth, const ConceptBank& concepts,
                         const SynthFeatures& features, const SynthConfig& cfg);

// Independent reference for point-wise and object-wise fusion: plain loops
// over views and points with no code shared with the fusion engine.
struct OracleFusion {
  int dim = 0;
  std::vector<double> features;       // rows x dim
  std::vector<std::uint8_t> unfused;  // rows
};

struct OracleQuery {
  const PromptBank* bank = nullptr;
  NegativeStrategy strategy = NegativeStrategy::kScene;
  Reduction reduction = Reduction::kMax;
};

OracleFusion OraclePointFusion(const Scene& scene, const PointCloud& cloud, const Mask3D& labels,
                               const std::vector<DenseFeatureMap>& features, Weighting weighting,
                               double occlusion_threshold, const OracleQuery& query);

// Rows are objects 1..N (row n - 1).
OracleFusion OracleObjectFusion(const Scene& scene, const ObjectFeatures& features, Weighting weighting,
                                const OracleQuery& query);

}  // namespace featfuse::synth
