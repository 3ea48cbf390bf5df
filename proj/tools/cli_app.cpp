#include "cli_app.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "featfuse/binary_io.hpp"
#include "featfuse/error.hpp"
#include "featfuse/feature_io.hpp"
#include "featfuse/fusion.hpp"
#include "featfuse/grounding.hpp"
#include "featfuse/metrics.hpp"
#include "featfuse/parallel.hpp"
#include "featfuse/pipeline.hpp"
#include "featfuse/scene_io.hpp"
#include "featfuse/synth.hpp"

namespace featfuse::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string EnvName(const std::string& option_name) {
  std::string out = kEnvPrefix;
  for (char c : option_name) out.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

// JSON config: top-level keys are subcommand names mapping to objects of
// long option names. Keys whose FEATFUSE_ variable is set are dropped so the
// environment wins over the file (command line > environment > file).
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    ordered_json j = ordered_json::object();
    for (const CLI::Option* opt : app->get_options()) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string& name = opt->get_lnames().front();
      if (opt->count() > 0) {
        j[name] = opt->results().size() == 1 ? ordered_json(opt->results().front()) : ordered_json(opt->results());
      } else if (default_also && !opt->get_default_str().empty()) {
        j[name] = opt->get_default_str();
      }
    }
    return j.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    ordered_json j;
    try {
      j = ordered_json::parse(input);
    } catch (const ordered_json::exception& e) {
      throw CLI::ConversionError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config root must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    Walk(j, {}, items);
    return items;
  }

 private:
  static void Walk(const ordered_json& j, const std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : j.items()) {
      if (value.is_object()) {
        auto next = parents;
        next.push_back(key);
        Walk(value, next, items);
        continue;
      }
      if (std::getenv(EnvName(key).c_str()) != nullptr) continue;
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(Scalar(v));
      } else {
        item.inputs.push_back(Scalar(value));
      }
      items.push_back(std::move(item));
    }
  }

  static std::string Scalar(const ordered_json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

std::string UtcNow() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Collects what a run read and wrote; serialized once the command finishes.
struct RunRecord {
  std::string command;
  std::vector<std::string> arguments;
  ordered_json config = ordered_json::object();
  ordered_json inputs = ordered_json::object();
  std::vector<std::string> outputs;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  std::string started_at;
  std::chrono::steady_clock::time_point start;

  void Write(const fs::path& out_dir) const {
    ordered_json j;
    j["command"] = command;
    j["artifact_version"] = kArtifactVersion;
    j["arguments"] = arguments;
    j["config"] = config;
    j["inputs"] = inputs;
    j["output_dir"] = out_dir.generic_string();
    j["outputs"] = outputs;
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    j["threads"] = threads;
    j["started_at"] = started_at;
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    io::WriteText(out_dir / kManifestName, j.dump(2) + "\n");
  }
};

ordered_json Snapshot(const CLI::App* sub) {
  ordered_json j = ordered_json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    if (opt->count() > 0) {
      const auto& r = opt->results();
      j[name] = r.size() == 1 ? ordered_json(r.front()) : ordered_json(r);
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

void Announce(const RunRecord& rec, const fs::path& out) {
  std::cerr << "featfuse " << rec.command << ": wrote " << out.generic_string() << "\n";
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::string out;
  synth::SynthConfig cfg;
  std::string primitives = "sphere,box";
  bool no_dense = false;
  int threads = 0;
};

void RunSynth(const SynthArgs& a, RunRecord& rec) {
  synth::SynthConfig cfg = a.cfg;
  cfg.use_spheres = a.primitives.find("sphere") != std::string::npos;
  cfg.use_boxes = a.primitives.find("box") != std::string::npos;
  cfg.Validate();
  rec.seed = cfg.seed;
  const fs::path out(a.out);
  const synth::ConceptBank concepts = synth::MakeConceptBank(cfg);
  const synth::SynthScene scene = synth::GenerateScene(cfg, concepts, rec.threads);
  const synth::SynthFeatures features = synth::GenerateViewFeatures(scene.scene, concepts, cfg, !a.no_dense);
  synth::WriteSceneDirectory(out, scene, concepts, features, cfg);
  rec.outputs = {"scene.json", "views/", "features/", "bank.json", "truth.json"};
  rec.Write(out);
  Announce(rec, out);
}

// ----------------------------------------------------------------- fuse

struct FuseArgs {
  std::string scene;
  std::string out;
  std::string mode = "object";
  std::string weighting = "lambda-g";
  std::string negatives = "scene";
  std::string reduction = "max";
  double voxel = kDefaultVoxelSize;
  double occlusion = kDefaultOcclusionThreshold;
  double scale = 1.0;
  std::vector<int> views;
  int threads = 0;
};

FuseOptions ToFuseOptions(const std::string& mode, const std::string& weighting, const std::string& negatives,
                          const std::string& reduction, double occlusion, int threads) {
  FuseOptions o;
  o.mode = ParseFusionMode(mode);
  o.weighting = ParseWeighting(weighting);
  o.strategy = ParseNegativeStrategy(negatives);
  o.reduction = ParseReduction(reduction);
  o.projection.occlusion_threshold = occlusion;
  o.threads = threads;
  return o;
}

void RunFuse(const FuseArgs& a, RunRecord& rec) {
  const FuseOptions opts = ToFuseOptions(a.mode, a.weighting, a.negatives, a.reduction, a.occlusion, rec.threads);
  opts.Validate();
  const fs::path out(a.out);
  rec.inputs["scene"] = a.scene;
  SceneInputs inputs = LoadSceneInputs(a.scene, a.scale, opts.mode == FusionMode::kPoint);
  // Geometry always comes from every view; a view subset only limits which
  // views contribute features.
  const PreparedCloud prepared = PrepareCloud(inputs.scene, a.voxel, rec.threads);
  if (!a.views.empty()) inputs = SubsetViews(inputs, a.views);

  const FuseOutput fused = FuseScene(inputs.scene, prepared, inputs.bank ? &*inputs.bank : nullptr,
                                     inputs.objects ? &*inputs.objects : nullptr, inputs.dense, opts);

  io::WriteFeatureCloud(out / "fused.bin", fused.cloud);
  io::WriteLabels(out / "gt_labels.u16", prepared.labels.labels);

  ordered_json report;
  report["mode"] = ToString(opts.mode);
  report["weighting"] = ToString(opts.weighting);
  report["negatives"] = ToString(opts.strategy);
  report["reduction"] = ToString(opts.reduction);
  report["voxel_size"] = a.voxel;
  report["views_used"] = inputs.scene.views.size();
  report["points"] = fused.cloud.size();
  std::size_t unfused = 0;
  for (std::size_t i = 0; i < fused.cloud.size(); ++i) unfused += fused.cloud.unfused(i) ? 1 : 0;
  report["unfused_points"] = unfused;
  if (opts.mode == FusionMode::kObject) {
    ordered_json objects = ordered_json::array();
    for (int n = 1; n <= inputs.scene.num_objects; ++n) {
      const std::size_t t = static_cast<std::size_t>(n - 1);
      ordered_json jo;
      jo["object"] = n;
      jo["instance"] = inputs.scene.catalog_instance(n);
      jo["fused"] = fused.object_errors[t].empty();
      jo["fallback"] = !fused.weights.fallback.empty() && fused.weights.fallback[t] != 0;
      if (!fused.object_errors[t].empty()) jo["error"] = fused.object_errors[t];
      objects.push_back(std::move(jo));
    }
    report["objects"] = std::move(objects);
  }
  io::WriteText(out / "fuse_report.json", report.dump(2) + "\n");
  rec.outputs = {"fused.bin", "gt_labels.u16", "fuse_report.json"};
  rec.Write(out);
  Announce(rec, out);
}

// --------------------------------------------------------------- ground

struct GroundingArgs {
  std::string rule = "threshold";
  std::optional<double> threshold;
  double temperature = kDefaultTemperature;
  std::string negatives = "scene";
  std::string reduction = "max";
  std::string provenance = "fused";
};

Provenance ParseProvenance(const std::string& name) {
  if (name == "fused") return Provenance::kFusedTarget;
  if (name == "prediction") return Provenance::kExternalPrediction;
  throw ParameterError("unknown provenance '" + name + "' (expected fused|prediction)");
}

GroundingConfig ToGroundingConfig(const GroundingArgs& g) {
  GroundingConfig cfg = GroundingConfig::ForProvenance(ParseProvenance(g.provenance));
  cfg.rule = ParseReferRule(g.rule);
  cfg.temperature = g.temperature;
  if (g.threshold) cfg.threshold = *g.threshold;
  cfg.Validate();
  return cfg;
}

struct GroundArgs {
  std::string cloud;
  std::string scene;
  std::string bank;
  std::optional<int> instance;
  std::string query;
  std::string gt_labels;
  std::string task = "refer";
  std::string heatmap_score = "rho";
  GroundingArgs grounding;
  std::string out;
  int threads = 0;
};

void RunGround(const GroundArgs& a, RunRecord& rec) {
  const GroundingConfig cfg = ToGroundingConfig(a.grounding);
  const NegativeStrategy strategy = ParseNegativeStrategy(a.grounding.negatives);
  const Reduction reduction = ParseReduction(a.grounding.reduction);
  const fs::path out(a.out);
  rec.inputs["cloud"] = a.cloud;
  rec.inputs["scene"] = a.scene;

  const FeatureCloud cloud = io::ReadFeatureCloud(a.cloud, ParseProvenance(a.grounding.provenance));
  const Scene scene = io::LoadScene(a.scene);
  std::string bank_path = a.bank;
  if (bank_path.empty()) {
    if (!scene.bank_path) throw ParameterError("scene has no prompt bank; pass --bank");
    bank_path = *scene.bank_path;
  }
  rec.inputs["bank"] = bank_path;
  const PromptBank bank = io::LoadPromptBank(bank_path);

  SegmentationResult seg;
  ordered_json report;
  report["task"] = a.task;
  if (a.task == "refer") {
    QueryContext ctx;
    if (a.instance) {
      ctx = BuildContext(bank, scene.object_instance_ids, *a.instance, strategy, reduction);
      report["instance"] = *a.instance;
    } else if (!a.query.empty()) {
      rec.inputs["query"] = a.query;
      ctx = BuildContextForQuery(bank, scene.object_instance_ids, io::ReadEmbedding(a.query, bank.dim()), strategy,
                                 reduction);
    } else {
      throw ParameterError("refer needs --instance or --query");
    }
    seg = ReferSegment(cloud, ctx, cfg, rec.threads);
    if (a.heatmap_score == "cosine") {
      // Raw cos(z, q+) instead of the softmax probability.
      seg.scores = ComputeReferProbabilities(cloud, ctx, cfg.temperature, rec.threads).positive_cosine;
    } else if (a.heatmap_score != "rho") {
      throw ParameterError("unknown heatmap score '" + a.heatmap_score + "' (expected rho|cosine)");
    }
    report["heatmap_score"] = a.heatmap_score;
    report["rule"] = ToString(cfg.rule);
    report["threshold"] = cfg.threshold;
    report["temperature"] = cfg.temperature;
    report["negatives"] = ctx.negatives.size();
  } else if (a.task == "semantic") {
    std::vector<Embedding> prompts;
    for (int n = 1; n <= scene.num_objects; ++n) prompts.push_back(bank.prompt(scene.catalog_instance(n)));
    seg = SemanticSegment(cloud, prompts, rec.threads);
    report["classes"] = scene.object_instance_ids;
  } else {
    throw ParameterError("unknown ground task '" + a.task + "' (expected refer|semantic)");
  }

  std::size_t positive = 0;
  for (int l : seg.labels) positive += l != 0 ? 1 : 0;
  report["points"] = cloud.size();
  report["labeled_points"] = positive;

  std::vector<float> scores(seg.scores.begin(), seg.scores.end());
  io::WriteLabels(out / "labels.u16", seg.labels);
  io::WriteRawArray<float>(out / "scores.f32", scores);
  std::vector<int> table_labels;
  if (!a.gt_labels.empty()) {
    rec.inputs["gt_labels"] = a.gt_labels;
    table_labels = io::ReadLabels(a.gt_labels);
  }
  WriteHeatmapPly(out / "heatmap.ply", cloud, seg.scores, table_labels);
  io::WriteText(out / "ground_report.json", report.dump(2) + "\n");
  rec.outputs = {"labels.u16", "scores.f32", "heatmap.ply", "ground_report.json"};
  rec.Write(out);
  Announce(rec, out);
}

// -------------------------------------------------------------- cluster

struct ClusterArgs {
  std::string cloud;
  std::string out;
  double eps = kDefaultClusterEps;
  int min_samples = kDefaultClusterMinSamples;
  bool remove_table = false;
  RansacConfig ransac;
  int threads = 0;
};

void RunCluster(const ClusterArgs& a, RunRecord& rec) {
  if (!(a.eps > 0.0)) throw ParameterError("eps must be positive");
  if (a.min_samples < 1) throw ParameterError("min_samples must be >= 1");
  const fs::path out(a.out);
  rec.inputs["cloud"] = a.cloud;
  const FeatureCloud cloud = io::ReadFeatureCloud(a.cloud);
  std::vector<std::uint8_t> exclude(cloud.size(), 0);
  for (std::size_t i = 0; i < cloud.size(); ++i) exclude[i] = cloud.unfused(i) ? 1 : 0;
  ordered_json report;
  if (a.remove_table) {
    a.ransac.Validate();
    rec.seed = a.ransac.seed;
    const TableRemoval table = RemoveTable(cloud.cloud, a.ransac);
    for (std::size_t i : table.inlier_indices) exclude[i] = 1;
    report["table_points_removed"] = table.inlier_count;
  }
  const std::vector<int> labels = Dbscan(cloud.features, cloud.size(), cloud.dim, a.eps, a.min_samples, exclude);
  const int clusters = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end());
  report["points"] = cloud.size();
  report["clusters"] = clusters;
  report["noise_points"] = std::count(labels.begin(), labels.end(), 0);
  report["eps"] = a.eps;
  report["min_samples"] = a.min_samples;
  io::WriteLabels(out / "instances.u16", labels);
  io::WriteText(out / "cluster_report.json", report.dump(2) + "\n");
  rec.outputs = {"instances.u16", "cluster_report.json"};
  rec.Write(out);
  Announce(rec, out);
}

// ----------------------------------------------------------------- eval

struct EvalArgs {
  std::string task = "referring";
  std::string pred;
  std::string scene;
  std::string out;
  GroundingArgs grounding;
  bool include_table = false;
  double eps = kDefaultClusterEps;
  int min_samples = kDefaultClusterMinSamples;
  // ablation
  std::string mode = "object";
  std::string weighting = "lambda-g";
  double voxel = kDefaultVoxelSize;
  double occlusion = kDefaultOcclusionThreshold;
  double scale = 1.0;
  std::uint64_t permutation_seed = 0;
  int threads = 0;
};

std::string Conventions() {
  ordered_json j;
  j["conventions"] = {{"precision", "Pr@X counts IoU strictly greater than X/100"},
                      {"mean_accuracy", "mAcc@X is Pr@X averaged per class id"},
                      {"table_points", "ground-truth label 0 excluded from referring and semantic IoU unless "
                                       "--include-table"}};
  return j.dump();
}

void RunEval(const EvalArgs& a, RunRecord& rec) {
  const fs::path out(a.out);
  rec.inputs["scene"] = a.scene;
  EvalOptions opts;
  opts.grounding = ToGroundingConfig(a.grounding);
  opts.grounding.cluster_eps = a.eps;
  opts.grounding.cluster_min_samples = a.min_samples;
  opts.strategy = ParseNegativeStrategy(a.grounding.negatives);
  opts.reduction = ParseReduction(a.grounding.reduction);
  opts.exclude_table = !a.include_table;
  opts.threads = rec.threads;

  if (a.task == "ablation") {
    FuseOptions fopts = ToFuseOptions(a.mode, a.weighting, a.grounding.negatives, a.grounding.reduction,
                                      a.occlusion, rec.threads);
    fopts.Validate();
    rec.seed = a.permutation_seed;
    const SceneInputs inputs = LoadSceneInputs(a.scene, a.scale, fopts.mode == FusionMode::kPoint);
    if (!inputs.bank) throw ParameterError("scene has no prompt bank");
    const PreparedCloud prepared = PrepareCloud(inputs.scene, a.voxel, rec.threads);
    std::vector<std::pair<std::string, MetricSummary>> rows;
    std::vector<EvalRecord> all;
    ordered_json sweep = ordered_json::array();
    for (const auto& subset : ViewAblationSubsets(static_cast<int>(inputs.scene.views.size()), a.permutation_seed)) {
      const SceneInputs sub = SubsetViews(inputs, subset);
      const FuseOutput fused = FuseScene(sub.scene, prepared, &*sub.bank, sub.objects ? &*sub.objects : nullptr,
                                         sub.dense, fopts);
      const std::string tag = "views_" + std::to_string(subset.size());
      auto records = EvaluateReferring(fused.cloud, prepared.labels, sub.scene, *sub.bank, opts, tag);
      const MetricSummary s = Summarize(records);
      rows.emplace_back(std::to_string(subset.size()), s);
      sweep.push_back({{"views", subset.size()}, {"view_indices", subset}, {"mIoU", s.miou}, {"Pr@25", s.pr25},
                       {"Pr@50", s.pr50}, {"Pr@75", s.pr75}});
      all.insert(all.end(), records.begin(), records.end());
    }
    io::WriteSummaryCsv(out / "ablation.csv", rows);
    ordered_json extra = ordered_json::parse(Conventions());
    extra["sweep"] = std::move(sweep);
    io::WriteEvalReport(out / "report.json", "views-ablation", all, Summarize(all), extra.dump());
    rec.outputs = {"ablation.csv", "report.json"};
    rec.Write(out);
    Announce(rec, out);
    return;
  }

  rec.inputs["pred"] = a.pred;
  const fs::path pred(a.pred);
  const FeatureCloud cloud = io::ReadFeatureCloud(pred / "fused.bin", ParseProvenance(a.grounding.provenance));
  Mask3D gt;
  gt.labels = io::ReadLabels(pred / "gt_labels.u16");
  const Scene scene = io::LoadScene(a.scene);
  if (!scene.bank_path) throw ParameterError("scene has no prompt bank");
  const PromptBank bank = io::LoadPromptBank(*scene.bank_path);

  if (a.task == "instance") {
    const InstanceEval ev = EvaluateInstances(cloud, gt, opts.grounding);
    ordered_json report;
    report["task"] = "instance";
    report["clusters"] = ev.clusters;
    report["gt_instances"] = ev.gt_instances;
    report["AP25"] = ev.ap25;
    report["eps"] = opts.grounding.cluster_eps;
    report["min_samples"] = opts.grounding.cluster_min_samples;
    io::WriteText(out / "report.json", report.dump(2) + "\n");
    io::WriteLabels(out / "instances.u16", ev.labels);
    rec.outputs = {"report.json", "instances.u16"};
  } else {
    std::vector<EvalRecord> records;
    if (a.task == "referring") {
      records = EvaluateReferring(cloud, gt, scene, bank, opts);
    } else if (a.task == "semantic") {
      records = EvaluateSemantic(cloud, gt, scene, bank, opts);
    } else {
      throw ParameterError("unknown eval task '" + a.task + "' (expected referring|semantic|instance|ablation)");
    }
    const MetricSummary s = Summarize(records);
    io::WriteEvalReport(out / "report.json", a.task, records, s, Conventions());
    const std::vector<std::pair<std::string, MetricSummary>> rows = {{a.task, s}};
    io::WriteSummaryCsv(out / "summary.csv", rows);
    rec.outputs = {"report.json", "summary.csv"};
  }
  rec.Write(out);
  Announce(rec, out);
}

// ----------------------------------------------------------- export-ply

struct ExportArgs {
  std::string cloud;
  std::string points;
  std::string scores;
  std::string out;
  int threads = 0;
};

void RunExport(const ExportArgs& a, RunRecord& rec) {
  const fs::path out(a.out);
  if (!a.cloud.empty() == !a.points.empty()) throw ParameterError("pass exactly one of --cloud or --points");
  if (!a.cloud.empty()) {
    rec.inputs["cloud"] = a.cloud;
    const FeatureCloud cloud = io::ReadFeatureCloud(a.cloud);
    if (!a.scores.empty()) {
      rec.inputs["scores"] = a.scores;
      const auto f = io::ReadRawArray<float>(a.scores, cloud.size());
      const std::vector<double> scores(f.begin(), f.end());
      WriteHeatmapPly(out / "cloud.ply", cloud, scores);
    } else {
      io::WritePly(out / "cloud.ply", cloud.cloud);
    }
  } else {
    rec.inputs["points"] = a.points;
    const PointCloud cloud = io::ReadPointsBinary(a.points);
    if (!a.scores.empty()) throw ParameterError("--scores needs --cloud (fused rows decide what is drawn)");
    io::WritePly(out / "cloud.ply", cloud);
  }
  rec.outputs = {"cloud.ply"};
  rec.Write(out);
  Announce(rec, out);
}

// ---------------------------------------------------------------- crops

struct CropsArgs {
  std::string scene;
  std::string out;
  int threads = 0;
};

void RunCrops(const CropsArgs& a, RunRecord& rec) {
  const fs::path out(a.out);
  rec.inputs["scene"] = a.scene;
  const Scene scene = io::LoadScene(a.scene);
  ordered_json crops = ordered_json::array();
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    const View& view = scene.views[v];
    for (int n = 1; n <= scene.num_objects; ++n) {
      const bool present = std::any_of(view.mask.data().begin(), view.mask.data().end(),
                                       [n](std::uint16_t m) { return m == n; });
      if (!present) continue;
      const CropRegion crop = ComputeCropRegion(view, n);
      char rel[64];
      std::snprintf(rel, sizeof(rel), "masks/v%03d_o%02d.u8", view.id, n);
      io::WriteRawArray<std::uint8_t>(out / rel, crop.mask);
      ordered_json jc;
      jc["view"] = view.id;
      jc["view_index"] = v;
      jc["object"] = n;
      jc["x_min"] = crop.x_min;
      jc["y_min"] = crop.y_min;
      jc["width"] = crop.width;
      jc["height"] = crop.height;
      jc["mask"] = rel;
      if (view.rgb_path) jc["rgb"] = *view.rgb_path;
      crops.push_back(std::move(jc));
    }
  }
  ordered_json j;
  j["num_views"] = scene.views.size();
  j["num_objects"] = scene.num_objects;
  j["crops"] = std::move(crops);
  io::WriteText(out / "crops.json", j.dump(2) + "\n");
  rec.outputs = {"crops.json", "masks/"};
  rec.Write(out);
  Announce(rec, out);
}

void AddThreads(CLI::App* sub, int& threads) {
  sub->add_option("--threads", threads, "Worker threads (0 = all cores)")->capture_default_str();
}

void AddGrounding(CLI::App* sub, GroundingArgs& g) {
  sub->add_option("--rule", g.rule, "threshold | pos-vs-neg")->capture_default_str();
  sub->add_option("--threshold", g.threshold, "Score threshold (default 0.95 fused, 0.7 prediction)");
  sub->add_option("--temperature", g.temperature, "Softmax temperature")->capture_default_str();
  sub->add_option("--negatives", g.negatives, "scene | all | canonical | none")->capture_default_str();
  sub->add_option("--reduction", g.reduction, "max | mean")->capture_default_str();
  sub->add_option("--provenance", g.provenance, "fused | prediction")->capture_default_str();
}

void BindEnvironment(CLI::App* sub) {
  for (CLI::Option* opt : sub->get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string& name = opt->get_lnames().front();
    if (name == "help") continue;
    opt->envname(EnvName(name));
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args) {
  CLI::App app{"Multi-view object-centric feature fusion and open-vocabulary grounding"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON config file: {\"<subcommand>\": {\"<option>\": value}}");
  app.require_subcommand(1);
  app.fallthrough();

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic scene directory");
  synth->add_option("--out", synth_args.out, "Output scene directory")->required();
  synth->add_option("--seed", synth_args.cfg.seed, "Generator seed")->capture_default_str();
  synth->add_option("--objects", synth_args.cfg.num_objects, "Objects N in [1, 12]")->capture_default_str();
  synth->add_option("--views", synth_args.cfg.num_views, "Views V in [1, 73]")->capture_default_str();
  synth->add_option("--corruption", synth_args.cfg.corruption, "Per-view corruption probability")->capture_default_str();
  synth->add_option("--feature-noise", synth_args.cfg.feature_noise, "Gaussian std of view features")->capture_default_str();
  synth->add_option("--text-noise", synth_args.cfg.text_noise, "Gaussian std of prompt embeddings")->capture_default_str();
  synth->add_option("--dim", synth_args.cfg.dim, "Embedding dim C")->capture_default_str();
  synth->add_option("--catalog", synth_args.cfg.catalog_size, "Catalog instances")->capture_default_str();
  synth->add_option("--prompts", synth_args.cfg.prompts_per_instance, "Prompts per instance")->capture_default_str();
  synth->add_option("--width", synth_args.cfg.width, "Image width")->capture_default_str();
  synth->add_option("--height", synth_args.cfg.height, "Image height")->capture_default_str();
  synth->add_option("--focal", synth_args.cfg.focal, "Focal length in pixels")->capture_default_str();
  synth->add_option("--patch", synth_args.cfg.patch_size, "Dense feature patch edge in pixels")->capture_default_str();
  synth->add_option("--table", synth_args.cfg.table_half_extent, "Table half extent (m)")->capture_default_str();
  synth->add_option("--placement", synth_args.cfg.placement_half_extent, "Placement half extent (m)")->capture_default_str();
  synth->add_option("--camera-radius", synth_args.cfg.camera_radius, "Camera rig radius (m)")->capture_default_str();
  synth->add_option("--primitives", synth_args.primitives, "Comma list of sphere, box")->capture_default_str();
  synth->add_flag("--no-dense", synth_args.no_dense, "Skip dense feature maps");
  AddThreads(synth, synth_args.threads);

  FuseArgs fuse_args;
  CLI::App* fuse = app.add_subcommand("fuse", "Fuse view features into a 3D feature cloud");
  fuse->add_option("--scene", fuse_args.scene, "Scene directory or manifest")->required();
  fuse->add_option("--out", fuse_args.out, "Output directory")->required();
  fuse->add_option("--mode", fuse_args.mode, "object | point")->capture_default_str();
  fuse->add_option("--weighting", fuse_args.weighting, "uniform | lambda | g | lambda-g")->capture_default_str();
  fuse->add_option("--negatives", fuse_args.negatives, "scene | all | canonical | none")->capture_default_str();
  fuse->add_option("--reduction", fuse_args.reduction, "max | mean")->capture_default_str();
  fuse->add_option("--voxel", fuse_args.voxel, "Voxel size (m)")->capture_default_str();
  fuse->add_option("--occlusion", fuse_args.occlusion, "Occlusion threshold (m)")->capture_default_str();
  fuse->add_option("--scale", fuse_args.scale, "Coordinate scale applied on load")->capture_default_str();
  fuse->add_option("--view-subset", fuse_args.views, "View indices contributing features")->delimiter(',');
  AddThreads(fuse, fuse_args.threads);

  GroundArgs ground_args;
  CLI::App* ground = app.add_subcommand("ground", "Semantic or referring segmentation of a feature cloud");
  ground->add_option("--cloud", ground_args.cloud, "Feature cloud file")->required();
  ground->add_option("--scene", ground_args.scene, "Scene directory (instances and bank)")->required();
  ground->add_option("--bank", ground_args.bank, "Prompt bank header overriding the scene's");
  ground->add_option("--instance", ground_args.instance, "Catalog instance to query");
  ground->add_option("--query", ground_args.query, "Raw float32 query embedding");
  ground->add_option("--gt-labels", ground_args.gt_labels, "Per-point labels; label 0 is left out of the heatmap");
  ground->add_option("--task", ground_args.task, "refer | semantic")->capture_default_str();
  ground->add_option("--heatmap-score", ground_args.heatmap_score, "Refer scores to write and draw: rho | cosine")
      ->capture_default_str();
  AddGrounding(ground, ground_args.grounding);
  ground->add_option("--out", ground_args.out, "Output directory")->required();
  AddThreads(ground, ground_args.threads);

  ClusterArgs cluster_args;
  CLI::App* cluster = app.add_subcommand("cluster", "DBSCAN instance segmentation in feature space");
  cluster->add_option("--cloud", cluster_args.cloud, "Feature cloud file")->required();
  cluster->add_option("--out", cluster_args.out, "Output directory")->required();
  cluster->add_option("--eps", cluster_args.eps, "Neighborhood radius")->capture_default_str();
  cluster->add_option("--min-samples", cluster_args.min_samples, "Core point size")->capture_default_str();
  cluster->add_flag("--remove-table", cluster_args.remove_table, "Drop the RANSAC plane before clustering");
  cluster->add_option("--ransac-threshold", cluster_args.ransac.distance_threshold, "Plane inlier distance")
      ->capture_default_str();
  cluster->add_option("--ransac-iterations", cluster_args.ransac.iterations, "RANSAC iterations")->capture_default_str();
  cluster->add_option("--ransac-seed", cluster_args.ransac.seed, "RANSAC seed")->capture_default_str();
  AddThreads(cluster, cluster_args.threads);

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate fused clouds against ground truth");
  eval->add_option("--task", eval_args.task, "referring | semantic | instance | ablation")->capture_default_str();
  eval->add_option("--pred", eval_args.pred, "Fuse output directory (not used by ablation)");
  eval->add_option("--scene", eval_args.scene, "Scene directory with ground truth")->required();
  eval->add_option("--out", eval_args.out, "Output directory")->required();
  AddGrounding(eval, eval_args.grounding);
  eval->add_flag("--include-table", eval_args.include_table, "Count table points in referring/semantic IoU");
  eval->add_option("--eps", eval_args.eps, "DBSCAN radius (instance)")->capture_default_str();
  eval->add_option("--min-samples", eval_args.min_samples, "DBSCAN core size (instance)")->capture_default_str();
  eval->add_option("--mode", eval_args.mode, "Fusion mode (ablation)")->capture_default_str();
  eval->add_option("--weighting", eval_args.weighting, "Fusion weighting (ablation)")->capture_default_str();
  eval->add_option("--voxel", eval_args.voxel, "Voxel size (ablation)")->capture_default_str();
  eval->add_option("--occlusion", eval_args.occlusion, "Occlusion threshold (ablation)")->capture_default_str();
  eval->add_option("--scale", eval_args.scale, "Coordinate scale (ablation)")->capture_default_str();
  eval->add_option("--permutation-seed", eval_args.permutation_seed, "View order seed (ablation)")
      ->capture_default_str();
  AddThreads(eval, eval_args.threads);

  ExportArgs export_args;
  CLI::App* exporter = app.add_subcommand("export-ply", "Write a point cloud or score heatmap as PLY");
  exporter->add_option("--cloud", export_args.cloud, "Feature cloud file");
  exporter->add_option("--points", export_args.points, "Raw M x 3 float32 points");
  exporter->add_option("--scores", export_args.scores, "Per-point float32 scores for coloring");
  exporter->add_option("--out", export_args.out, "Output directory")->required();
  AddThreads(exporter, export_args.threads);

  CropsArgs crops_args;
  CLI::App* crops = app.add_subcommand("crops", "Per (view, object) crop boxes and masks for an encoder");
  crops->add_option("--scene", crops_args.scene, "Scene directory")->required();
  crops->add_option("--out", crops_args.out, "Output directory")->required();
  AddThreads(crops, crops_args.threads);

  for (CLI::App* sub : {synth, fuse, ground, cluster, eval, exporter, crops}) BindEnvironment(sub);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::FileError& e) {
    std::cerr << "featfuse: " << e.what() << "\n";
    return kExitIo;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  CLI::App* selected = app.get_subcommands().front();
  RunRecord rec;
  rec.command = selected->get_name();
  rec.arguments = args;
  rec.config = Snapshot(selected);
  rec.started_at = UtcNow();
  rec.start = std::chrono::steady_clock::now();

  try {
    auto threads_of = [&](int requested) {
      if (requested < 0) throw ParameterError("--threads must be >= 0");
      return ResolveThreads(requested);
    };
    if (selected == synth) {
      rec.threads = threads_of(synth_args.threads);
      RunSynth(synth_args, rec);
    } else if (selected == fuse) {
      rec.threads = threads_of(fuse_args.threads);
      RunFuse(fuse_args, rec);
    } else if (selected == ground) {
      rec.threads = threads_of(ground_args.threads);
      RunGround(ground_args, rec);
    } else if (selected == cluster) {
      rec.threads = threads_of(cluster_args.threads);
      RunCluster(cluster_args, rec);
    } else if (selected == eval) {
      rec.threads = threads_of(eval_args.threads);
      RunEval(eval_args, rec);
    } else if (selected == exporter) {
      rec.threads = threads_of(export_args.threads);
      RunExport(export_args, rec);
    } else if (selected == crops) {
      rec.threads = threads_of(crops_args.threads);
      RunCrops(crops_args, rec);
    }
  } catch (const IoError& e) {
    std::cerr << "featfuse " << rec.command << ": I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "featfuse " << rec.command << ": I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "featfuse " << rec.command << ": malformed JSON: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "featfuse " << rec.command << ": invalid input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "featfuse " << rec.command << ": numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "featfuse " << rec.command << ": internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

int RunCli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return RunCli(args);
}

}  // namespace featfuse::cli
