#include "featfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "featfuse/binary_io.hpp"
#include "featfuse/error.hpp"
#include "featfuse/feature_io.hpp"
#include "featfuse/parallel.hpp"
#include "featfuse/projection.hpp"
#include "featfuse/scene_io.hpp"

namespace featfuse::synth {

namespace fs = std::filesystem;
using Eigen::Vector3d;

namespace {

constexpr int kMaxPlacementRejections = 1000;
constexpr int kMaxFeatureRedraws = 64;
constexpr int kMaxPrototypeRejections = 100000;
constexpr double kPlacementGap = 0.02;

// Independent generator per purpose so adding draws in one stage never shifts
// another stage's stream.
std::mt19937_64 Substream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

enum : std::uint64_t { kStreamBank = 1, kStreamLayout = 2, kStreamViewFeatures = 3 };

Embedding RandomUnit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Embedding e(static_cast<std::size_t>(dim));
  for (;;) {
    for (auto& x : e) x = static_cast<float>(normal(rng));
    if (NormalizeInPlace(e)) return e;
  }
}

Embedding Perturb(const Embedding& base, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Embedding e = base;
    if (sigma > 0.0) {
      for (auto& x : e) x = static_cast<float>(x + sigma * normal(rng));
    }
    if (NormalizeInPlace(e)) return e;
  }
}

// Accepts a candidate only if it stays below the separation bound with
// every vector already accepted.
Embedding SeparatedUnit(std::mt19937_64& rng, int dim, const std::vector<Embedding>& accepted) {
  for (int attempt = 0; attempt < kMaxPrototypeRejections; ++attempt) {
    Embedding e = RandomUnit(rng, dim);
    bool ok = true;
    for (const auto& other : accepted) {
      if (Dot(e, other) >= kPrototypeSeparation) {
        ok = false;
        break;
      }
    }
    if (ok) return e;
  }
  throw ParameterError("cannot separate prototypes; increase the embedding dim or shrink the catalog");
}

bool FootprintsOverlap(const Primitive& a, const Primitive& b) {
  const Vector3d amin = a.aabb_min(), amax = a.aabb_max();
  const Vector3d bmin = b.aabb_min(), bmax = b.aabb_max();
  for (int k = 0; k < 3; ++k) {
    if (amax[k] + kPlacementGap <= bmin[k] || bmax[k] + kPlacementGap <= amin[k]) return false;
  }
  return true;
}

}  // namespace

Primitive Primitive::Sphere(int id, const Vector3d& center, double radius) {
  if (!(radius > 0.0)) throw ParameterError("sphere radius must be positive");
  Primitive p;
  p.kind = PrimitiveKind::kSphere;
  p.object_id = id;
  p.center = center;
  p.radius = radius;
  return p;
}

Primitive Primitive::Box(int id, const Vector3d& center, const Vector3d& half_extents) {
  if (!(half_extents.minCoeff() > 0.0)) throw ParameterError("box half extents must be positive");
  Primitive p;
  p.kind = PrimitiveKind::kBox;
  p.object_id = id;
  p.center = center;
  p.half_extents = half_extents;
  return p;
}

std::optional<double> Primitive::Intersect(const Vector3d& origin, const Vector3d& dir) const {
  if (kind == PrimitiveKind::kSphere) {
    const Vector3d oc = origin - center;
    const double a = dir.squaredNorm();
    const double b = oc.dot(dir);
    const double c = oc.squaredNorm() - radius * radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t0 = (-b - s) / a;
    if (t0 > 0.0) return t0;
    const double t1 = (-b + s) / a;
    if (t1 > 0.0) return t1;
    return std::nullopt;
  }
  // Slab test.
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  const Vector3d lo = aabb_min(), hi = aabb_max();
  for (int k = 0; k < 3; ++k) {
    if (dir[k] == 0.0) {
      if (origin[k] < lo[k] || origin[k] > hi[k]) return std::nullopt;
      continue;
    }
    double t1 = (lo[k] - origin[k]) / dir[k];
    double t2 = (hi[k] - origin[k]) / dir[k];
    if (t1 > t2) std::swap(t1, t2);
    t_near = std::max(t_near, t1);
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return std::nullopt;
  }
  if (t_near > 0.0) return t_near;
  if (t_far > 0.0) return t_far;
  return std::nullopt;
}

double Primitive::SurfaceDistance(const Vector3d& p) const {
  if (kind == PrimitiveKind::kSphere) return std::abs((p - center).norm() - radius);
  const Vector3d q = (p - center).cwiseAbs() - half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return std::abs(outside + inside);
}

Vector3d Primitive::aabb_min() const {
  return kind == PrimitiveKind::kSphere ? Vector3d(center.array() - radius) : Vector3d(center - half_extents);
}

Vector3d Primitive::aabb_max() const {
  return kind == PrimitiveKind::kSphere ? Vector3d(center.array() + radius) : Vector3d(center + half_extents);
}

void SynthConfig::Validate() const {
  if (num_objects < 1 || num_objects > 12) throw ParameterError("num_objects must be in [1, 12]");
  if (num_views < 1 || num_views > 73) throw ParameterError("num_views must be in [1, 73]");
  if (width <= 0 || height <= 0) throw ParameterError("image dims must be positive");
  if (!(focal > 0.0)) throw ParameterError("focal length must be positive");
  if (!(camera_radius > 0.0)) throw ParameterError("camera radius must be positive");
  if (!(table_half_extent > 0.0)) throw ParameterError("table half extent must be positive");
  if (!(placement_half_extent > 0.0) || placement_half_extent > table_half_extent) {
    throw ParameterError("placement half extent must be in (0, table half extent]");
  }
  if (!use_spheres && !use_boxes) throw ParameterError("primitive set is empty");
  if (dim < 2) throw ParameterError("embedding dim must be at least 2");
  if (catalog_size < num_objects) throw ParameterError("catalog is smaller than the object count");
  if (prompts_per_instance < 1) throw ParameterError("prompts_per_instance must be positive");
  if (!(text_noise >= 0.0) || !(feature_noise >= 0.0)) throw ParameterError("noise levels must be non-negative");
  if (!(corruption >= 0.0 && corruption <= 1.0)) throw ParameterError("corruption probability must be in [0, 1]");
  if (patch_size < 1 || width % patch_size != 0 || height % patch_size != 0) {
    throw ParameterError("patch size must divide the image dims");
  }
}

Pose LookAt(const Vector3d& eye, const Vector3d& target) {
  const Vector3d f = (target - eye).normalized();
  Vector3d up = Vector3d::UnitZ();
  if (std::abs(f.dot(up)) > 1.0 - 1e-9) up = Vector3d::UnitY();
  const Vector3d r = f.cross(up).normalized();
  const Vector3d d = f.cross(r);
  Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
  T.block<1, 3>(0, 0) = r.transpose();
  T.block<1, 3>(1, 0) = d.transpose();
  T.block<1, 3>(2, 0) = f.transpose();
  T.block<3, 1>(0, 3) = -(T.topLeftCorner<3, 3>() * eye);
  return Pose(T);
}

std::vector<Pose> HemisphereRig(int num_views, double radius) {
  if (num_views < 1) throw ParameterError("num_views must be positive");
  if (!(radius > 0.0)) throw ParameterError("camera radius must be positive");
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  std::vector<Pose> poses;
  poses.reserve(static_cast<std::size_t>(num_views));
  for (int i = 0; i < num_views; ++i) {
    const double z = 1.0 - (i + 0.5) / num_views;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    const Vector3d eye = radius * Vector3d(rho * std::cos(phi), rho * std::sin(phi), z);
    poses.push_back(LookAt(eye, Vector3d::Zero()));
  }
  return poses;
}

CameraIntrinsics MakeIntrinsics(const SynthConfig& cfg) {
  CameraIntrinsics k;
  k.fx = cfg.focal;
  k.fy = cfg.focal;
  k.cx = 0.5 * cfg.width - 0.5;
  k.cy = 0.5 * cfg.height - 0.5;
  k.width = cfg.width;
  k.height = cfg.height;
  return k;
}

const Embedding& ConceptBank::prototype(int instance) const {
  if (instance < 1 || instance > static_cast<int>(prototypes.size())) {
    throw LookupError("unknown synthetic instance " + std::to_string(instance));
  }
  return prototypes[static_cast<std::size_t>(instance - 1)];
}

ConceptBank MakeConceptBank(const SynthConfig& cfg) {
  cfg.Validate();
  auto rng = Substream(cfg.seed, kStreamBank);
  ConceptBank out;
  out.dim = cfg.dim;
  out.bank = PromptBank(cfg.dim);

  std::vector<Embedding> accepted;
  for (int k = 0; k < cfg.catalog_size; ++k) accepted.push_back(SeparatedUnit(rng, cfg.dim, accepted));
  out.prototypes = accepted;
  out.distractor = SeparatedUnit(rng, cfg.dim, accepted);

  for (int k = 1; k <= cfg.catalog_size; ++k) {
    std::vector<Embedding> prompts;
    std::vector<std::string> texts;
    for (int j = 0; j < cfg.prompts_per_instance; ++j) {
      prompts.push_back(Perturb(out.prototypes[static_cast<std::size_t>(k - 1)], cfg.text_noise, rng));
      texts.push_back("synthetic instance " + std::to_string(k) + " prompt " + std::to_string(j));
    }
    out.bank.AddInstance(k, std::move(prompts), std::move(texts));
  }
  std::vector<Embedding> canonical;
  for (std::size_t j = 0; j < kCanonicalPhrases.size(); ++j) canonical.push_back(RandomUnit(rng, cfg.dim));
  out.bank.SetCanonical(std::move(canonical));
  return out;
}

RenderedView RenderView(const SceneTruth& truth, const CameraIntrinsics& k, const Pose& pose) {
  k.Validate();
  RenderedView out{DepthMap(k.width, k.height, 0.0f), InstanceMask(k.width, k.height, 0)};
  const Eigen::Matrix3d Rt = pose.rotation().transpose();
  const Vector3d origin = pose.camera_center();
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      // Unit camera-frame z, so the hit parameter t is the depth value.
      const Vector3d dir = Rt * Vector3d((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int label = -1;
      if (dir.z() < 0.0) {
        const double t = -origin.z() / dir.z();
        const Vector3d hit = origin + t * dir;
        if (t > 0.0 && std::abs(hit.x()) <= truth.table_half_extent && std::abs(hit.y()) <= truth.table_half_extent) {
          best = t;
          label = 0;
        }
      }
      for (const Primitive& p : truth.primitives) {
        const auto t = p.Intersect(origin, dir);
        if (t && *t < best) {
          best = *t;
          label = p.object_id;
        }
      }
      if (label >= 0) {
        out.depth.at(x, y) = static_cast<float>(best);
        out.mask.at(x, y) = static_cast<std::uint16_t>(label);
      }
    }
  }
  return out;
}

Scene RenderScene(const SceneTruth& truth, const SynthConfig& cfg, std::vector<int> object_instance_ids,
                  int threads) {
  cfg.Validate();
  const auto poses = HemisphereRig(cfg.num_views, cfg.camera_radius);
  const CameraIntrinsics k = MakeIntrinsics(cfg);
  Scene scene;
  scene.num_objects = static_cast<int>(object_instance_ids.size());
  scene.object_instance_ids = std::move(object_instance_ids);
  scene.views.resize(poses.size());
  ParallelFor(poses.size(), threads, [&](std::size_t v) {
    RenderedView r = RenderView(truth, k, poses[v]);
    View& view = scene.views[v];
    view.id = static_cast<int>(v);
    view.intrinsics = k;
    view.pose = poses[v];
    view.depth = std::move(r.depth);
    view.mask = std::move(r.mask);
  });
  scene.Validate();
  return scene;
}

SynthScene GenerateScene(const SynthConfig& cfg, const ConceptBank& concepts, int threads) {
  cfg.Validate();
  if (static_cast<int>(concepts.prototypes.size()) < cfg.num_objects) {
    throw ParameterError("concept bank does not cover the object count");
  }
  auto rng = Substream(cfg.seed, kStreamLayout);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<int> catalog(concepts.prototypes.size());
  std::iota(catalog.begin(), catalog.end(), 1);
  std::shuffle(catalog.begin(), catalog.end(), rng);
  std::vector<int> instances(catalog.begin(), catalog.begin() + cfg.num_objects);

  SceneTruth truth;
  truth.table_half_extent = cfg.table_half_extent;
  const double P = cfg.placement_half_extent;
  for (int n = 1; n <= cfg.num_objects; ++n) {
    int rejections = 0;
    for (;;) {
      const bool sphere = cfg.use_spheres && (!cfg.use_boxes || unit(rng) < 0.5);
      Primitive candidate;
      double half_xy;
      if (sphere) {
        const double r = uniform(0.035, 0.07);
        half_xy = r;
        candidate = Primitive::Sphere(n, Vector3d::Zero(), r);
      } else {
        const Vector3d h(uniform(0.03, 0.07), uniform(0.03, 0.07), uniform(0.03, 0.08));
        half_xy = std::max(h.x(), h.y());
        candidate = Primitive::Box(n, Vector3d::Zero(), h);
      }
      const double lim = std::max(0.0, P - half_xy);
      const double height = sphere ? candidate.radius : candidate.half_extents.z();
      candidate.center = Vector3d(uniform(-lim, lim), uniform(-lim, lim), height);
      const bool clash = std::any_of(truth.primitives.begin(), truth.primitives.end(),
                                     [&](const Primitive& p) { return FootprintsOverlap(p, candidate); });
      if (!clash) {
        truth.primitives.push_back(candidate);
        break;
      }
      if (++rejections >= kMaxPlacementRejections) throw ParameterError("scene too crowded");
    }
  }

  SynthScene out;
  out.scene = RenderScene(truth, cfg, instances, threads);
  out.truth = std::move(truth);
  return out;
}

SynthFeatures GenerateViewFeatures(const Scene& scene, const ConceptBank& concepts, const SynthConfig& cfg,
                                   bool dense) {
  scene.Validate();
  const int N = scene.num_objects;
  const int V = static_cast<int>(scene.views.size());
  const int C = concepts.dim;
  for (int id : scene.object_instance_ids) {
    (void)concepts.prototype(id);
    if (!concepts.bank.contains(id)) throw LookupError("prompt bank misses instance " + std::to_string(id));
  }
  const ObjectVisibility objvis = ComputeObjectVisibility(scene);

  SynthFeatures out;
  out.num_objects = N;
  out.objects = ObjectFeatures(V, N, C);
  out.corruption_source.assign(static_cast<std::size_t>(V) * N, 0);

  for (int v = 0; v < V; ++v) {
    auto rng = Substream(cfg.seed, kStreamViewFeatures, static_cast<std::uint64_t>(scene.views[v].id));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int n = 1; n <= N; ++n) {
      if (objvis.count(v, n) == 0) continue;
      const int own = scene.catalog_instance(n);
      if (unit(rng) >= cfg.corruption) {
        out.objects.Set(v, n, Perturb(concepts.prototype(own), cfg.feature_noise, rng));
        continue;
      }
      std::vector<int> sources;
      for (int id : scene.object_instance_ids) {
        if (id != own && std::find(sources.begin(), sources.end(), id) == sources.end()) sources.push_back(id);
      }
      if (sources.empty()) {
        for (int id = 1; id <= static_cast<int>(concepts.prototypes.size()); ++id) {
          if (id != own) sources.push_back(id);
        }
      }
      std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
      const int src = sources[pick(rng)];
      const Embedding& q_src = concepts.bank.prompt(src);
      const Embedding& q_own = concepts.bank.prompt(own);
      // Strictly nearer the source prompt than its own, so any negative set
      // containing the source clips G to zero.
      Embedding z;
      bool ok = false;
      for (int attempt = 0; attempt < kMaxFeatureRedraws && !ok; ++attempt) {
        z = Perturb(concepts.prototype(src), cfg.feature_noise, rng);
        ok = Cosine(z, q_src) > Cosine(z, q_own);
      }
      if (!ok) {
        z = concepts.prototype(src);
        if (!(Cosine(z, q_src) > Cosine(z, q_own))) throw NumericalError("cannot build a corrupted feature");
      }
      out.objects.Set(v, n, z);
      out.corruption_source[static_cast<std::size_t>(v) * N + static_cast<std::size_t>(n - 1)] = src;
    }
  }

  if (dense) {
    for (int v = 0; v < V; ++v) {
      const View& view = scene.views[v];
      const int gw = view.intrinsics.width / cfg.patch_size;
      const int gh = view.intrinsics.height / cfg.patch_size;
      DenseFeatureMap map(gw, gh, C);
      for (int gy = 0; gy < gh; ++gy) {
        for (int gx = 0; gx < gw; ++gx) {
          // The patch takes the label under its center pixel.
          const int px = gx * cfg.patch_size + cfg.patch_size / 2;
          const int py = gy * cfg.patch_size + cfg.patch_size / 2;
          const int n = view.mask.at(px, py);
          std::span<const float> src = concepts.distractor;
          if (n > 0 && out.objects.valid(v, n)) src = out.objects.feature(v, n);
          std::copy(src.begin(), src.end(), map.cell(gx, gy).begin());
        }
      }
      out.dense.push_back(std::move(map));
    }
  }
  return out;
}

void WriteSceneDirectory(const fs::path& dir, const SynthScene& synth, const ConceptBank& concepts,
                         const SynthFeatures& features, const SynthConfig& cfg) {
  using nlohmann::ordered_json;
  Scene scene = synth.scene;
  scene.object_features_path = "features/objects.bin";
  scene.bank_path = "bank.json";
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    if (v < features.dense.size()) {
      char rel[48];
      std::snprintf(rel, sizeof(rel), "features/dense_%03d.bin", scene.views[v].id);
      scene.views[v].dense_features_path = rel;
      io::WriteDenseFeatures(dir / rel, features.dense[v]);
    }
  }
  io::WriteObjectFeatures(dir / *scene.object_features_path, features.objects);
  io::SavePromptBank(concepts.bank, dir / *scene.bank_path);
  io::SaveScene(scene, dir);

  ordered_json truth;
  truth["seed"] = cfg.seed;
  truth["table_half_extent"] = synth.truth.table_half_extent;
  truth["primitives"] = ordered_json::array();
  for (const Primitive& p : synth.truth.primitives) {
    ordered_json jp;
    jp["object"] = p.object_id;
    jp["kind"] = p.kind == PrimitiveKind::kSphere ? "sphere" : "box";
    jp["center"] = {p.center.x(), p.center.y(), p.center.z()};
    if (p.kind == PrimitiveKind::kSphere) {
      jp["radius"] = p.radius;
    } else {
      jp["half_extents"] = {p.half_extents.x(), p.half_extents.y(), p.half_extents.z()};
    }
    truth["primitives"].push_back(std::move(jp));
  }
  ordered_json log = ordered_json::array();
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    for (int n = 1; n <= features.num_objects; ++n) {
      const int src = features.corruption_source[v * features.num_objects + static_cast<std::size_t>(n - 1)];
      if (src != 0) log.push_back({{"view", scene.views[v].id}, {"object", n}, {"source_instance", src}});
    }
  }
  truth["corruptions"] = std::move(log);
  io::WriteText(dir / "truth.json", truth.dump(2) + "\n");
}

}  // namespace featfuse::synth
