// Naive reference fusion. Deliberately written with scalar loops and its own
// projection, similarity and context logic; nothing here calls into the
// fusion engine or projection module.
#include <algorithm>
#include <cmath>

#include "featfuse/error.hpp"
#include "featfuse/synth.hpp"

namespace featfuse::synth {

namespace {

double NaiveCos(const float* a, const float* b, int dim) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (int c = 0; c < dim; ++c) {
    ab += static_cast<double>(a[c]) * b[c];
    aa += static_cast<double>(a[c]) * a[c];
    bb += static_cast<double>(b[c]) * b[c];
  }
  if (aa == 0.0 || bb == 0.0) return 0.0;
  double r = ab / (std::sqrt(aa) * std::sqrt(bb));
  if (r > 1.0) r = 1.0;
  if (r < -1.0) r = -1.0;
  return r;
}

bool IsZero(const float* a, int dim) {
  for (int c = 0; c < dim; ++c) {
    if (a[c] != 0.0f) return false;
  }
  return true;
}

struct NaiveContext {
  const float* positive = nullptr;
  std::vector<const float*> negatives;
};

NaiveContext ContextOf(const Scene& scene, int n, const OracleQuery& q) {
  const int target = scene.object_instance_ids[static_cast<std::size_t>(n - 1)];
  NaiveContext ctx;
  ctx.positive = q.bank->prompt(target).data();
  std::vector<int> ids;
  if (q.strategy == NegativeStrategy::kScene) {
    ids = scene.object_instance_ids;
  } else if (q.strategy == NegativeStrategy::kAll) {
    for (const auto& [id, unused] : q.bank->instances()) ids.push_back(id);
  }
  std::vector<int> seen;
  for (int id : ids) {
    if (id == target) continue;
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) continue;
    seen.push_back(id);
    ctx.negatives.push_back(q.bank->prompt(id).data());
  }
  if (q.strategy == NegativeStrategy::kCanonical) {
    for (const auto& e : q.bank->canonical()) ctx.negatives.push_back(e.data());
  }
  return ctx;
}

double NaiveG(const float* z, int dim, const NaiveContext& ctx, Reduction reduction) {
  if (IsZero(z, dim)) return 0.0;
  double sub = 0.0;
  if (!ctx.negatives.empty()) {
    if (reduction == Reduction::kMax) {
      sub = -2.0;
      for (const float* q : ctx.negatives) sub = std::max(sub, NaiveCos(z, q, dim));
    } else {
      for (const float* q : ctx.negatives) sub += NaiveCos(z, q, dim);
      sub /= static_cast<double>(ctx.negatives.size());
    }
  }
  return std::max(0.0, NaiveCos(z, ctx.positive, dim) - sub);
}

void NormalizeRow(double* row, int dim) {
  double s = 0.0;
  for (int c = 0; c < dim; ++c) s += row[c] * row[c];
  s = std::sqrt(s);
  if (s == 0.0) return;
  for (int c = 0; c < dim; ++c) row[c] /= s;
}

bool UsesG(Weighting w) { return w == Weighting::kG || w == Weighting::kLambdaG; }

}  // namespace

OracleFusion OraclePointFusion(const Scene& scene, const PointCloud& cloud, const Mask3D& labels,
                               const std::vector<DenseFeatureMap>& features, Weighting weighting,
                               double occlusion_threshold, const OracleQuery& query) {
  if (features.size() != scene.views.size()) throw StructuralError("oracle: one feature map per view required");
  if (UsesG(weighting) && query.bank == nullptr) throw ParameterError("oracle: G weighting needs a prompt bank");
  const int dim = features.empty() ? 0 : features.front().dim;
  const std::size_t M = cloud.size();
  OracleFusion out;
  out.dim = dim;
  out.features.assign(M * static_cast<std::size_t>(dim), 0.0);
  out.unfused.assign(M, 1);

  std::vector<NaiveContext> contexts;
  if (UsesG(weighting)) {
    for (int n = 1; n <= scene.num_objects; ++n) contexts.push_back(ContextOf(scene, n, query));
  }

  for (std::size_t i = 0; i < M; ++i) {
    const double X = cloud.points[i].x(), Y = cloud.points[i].y(), Z = cloud.points[i].z();
    double total = 0.0;
    double* acc = out.features.data() + i * dim;
    for (std::size_t v = 0; v < scene.views.size(); ++v) {
      const View& view = scene.views[v];
      const auto T = view.pose.ToRowMajor();
      const double xc = T[0] * X + T[1] * Y + T[2] * Z + T[3];
      const double yc = T[4] * X + T[5] * Y + T[6] * Z + T[7];
      const double zc = T[8] * X + T[9] * Y + T[10] * Z + T[11];
      const auto& k = view.intrinsics;
      const double ux = k.fx * xc + k.cx * zc;
      const double uy = k.fy * yc + k.cy * zc;
      if (!(zc > 0.0)) continue;
      const double px = ux / zc, py = uy / zc;
      if (!(px >= 0.0 && px < k.width && py >= 0.0 && py < k.height)) continue;
      const int ix = std::min(static_cast<int>(std::floor(px + 0.5)), k.width - 1);
      const int iy = std::min(static_cast<int>(std::floor(py + 0.5)), k.height - 1);
      const double d = view.depth.at(ix, iy);
      if (d == 0.0 || std::abs(zc - d) > occlusion_threshold) continue;

      const DenseFeatureMap& map = features[v];
      const int gx = ix / (k.width / map.grid_width);
      const int gy = iy / (k.height / map.grid_height);
      const float* z = map.data.data() + (static_cast<std::size_t>(gy) * map.grid_width + gx) * dim;

      double w = 1.0;
      const int n = labels.labels[i];
      if (UsesG(weighting) && n != 0) w = NaiveG(z, dim, contexts[static_cast<std::size_t>(n - 1)], query.reduction);
      if (w == 0.0) continue;
      total += w;
      for (int c = 0; c < dim; ++c) acc[c] += w * z[c];
    }
    if (total > 0.0) {
      for (int c = 0; c < dim; ++c) acc[c] /= total;
      NormalizeRow(acc, dim);
      out.unfused[i] = 0;
    } else {
      std::fill(acc, acc + dim, 0.0);
    }
  }
  return out;
}

OracleFusion OracleObjectFusion(const Scene& scene, const ObjectFeatures& features, Weighting weighting,
                                const OracleQuery& query) {
  if (UsesG(weighting) && query.bank == nullptr) throw ParameterError("oracle: G weighting needs a prompt bank");
  const int N = features.num_objects();
  const int V = features.num_views();
  const int dim = features.dim();
  OracleFusion out;
  out.dim = dim;
  out.features.assign(static_cast<std::size_t>(N) * dim, 0.0);
  out.unfused.assign(static_cast<std::size_t>(N), 1);

  for (int n = 1; n <= N; ++n) {
    // Mask pixel count by direct scan.
    std::vector<double> lambda(static_cast<std::size_t>(V), 0.0);
    for (int v = 0; v < V; ++v) {
      const auto& mask = scene.views[static_cast<std::size_t>(v)].mask;
      for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
          if (mask.at(x, y) == n) lambda[static_cast<std::size_t>(v)] += 1.0;
        }
      }
    }
    NaiveContext ctx;
    if (UsesG(weighting)) ctx = ContextOf(scene, n, query);

    std::vector<double> w(static_cast<std::size_t>(V), 0.0);
    double total = 0.0;
    for (int v = 0; v < V; ++v) {
      if (!features.valid(v, n) || lambda[static_cast<std::size_t>(v)] == 0.0) continue;
      const float* z = features.feature(v, n).data();
      const double g = UsesG(weighting) ? NaiveG(z, dim, ctx, query.reduction) : 1.0;
      const double l = lambda[static_cast<std::size_t>(v)];
      double omega = 1.0;
      if (weighting == Weighting::kLambda) omega = l;
      if (weighting == Weighting::kG) omega = g;
      if (weighting == Weighting::kLambdaG) omega = l * g;
      w[static_cast<std::size_t>(v)] = omega;
      total += omega;
    }
    if (UsesG(weighting) && total == 0.0) {
      for (int v = 0; v < V; ++v) {
        w[static_cast<std::size_t>(v)] = features.valid(v, n) ? lambda[static_cast<std::size_t>(v)] : 0.0;
        total += w[static_cast<std::size_t>(v)];
      }
    }
    if (total == 0.0) continue;
    double* acc = out.features.data() + static_cast<std::size_t>(n - 1) * dim;
    for (int v = 0; v < V; ++v) {
      const double wv = w[static_cast<std::size_t>(v)];
      if (wv == 0.0) continue;
      const float* z = features.feature(v, n).data();
      for (int c = 0; c < dim; ++c) acc[c] += wv * z[c] / total;
    }
    NormalizeRow(acc, dim);
    out.unfused[static_cast<std::size_t>(n - 1)] = 0;
  }
  return out;
}

}  // namespace featfuse::synth
