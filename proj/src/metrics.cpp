#include "featfuse/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "featfuse/binary_io.hpp"
#include "featfuse/error.hpp"

namespace featfuse {

double Iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  if (pred.size() != gt.size()) throw StructuralError("IoU masks differ in length");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    inter += (pred[i] != 0) && (gt[i] != 0);
    uni += (pred[i] != 0) || (gt[i] != 0);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

EvalRecord MakeRecord(std::string query_id, int class_id, std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt) {
  EvalRecord r;
  r.query_id = std::move(query_id);
  r.class_id = class_id;
  r.iou = Iou(pred, gt);
  r.predicted_count = static_cast<std::size_t>(std::count_if(pred.begin(), pred.end(), [](auto v) { return v != 0; }));
  r.gt_count = static_cast<std::size_t>(std::count_if(gt.begin(), gt.end(), [](auto v) { return v != 0; }));
  return r;
}

namespace {
void RequireRecords(std::span<const EvalRecord> records) {
  if (records.empty()) throw ParameterError("no evaluation records");
}
}  // namespace

double MeanIou(std::span<const EvalRecord> records) {
  RequireRecords(records);
  double sum = 0.0;
  for (const auto& r : records) sum += r.iou;
  return sum / static_cast<double>(records.size());
}

double PrecisionAt(std::span<const EvalRecord> records, int x) {
  RequireRecords(records);
  const double cut = x / 100.0;
  std::size_t hits = 0;
  for (const auto& r : records) hits += r.iou > cut;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double MeanAccuracyAt(std::span<const EvalRecord> records, int x) {
  RequireRecords(records);
  std::map<int, std::vector<EvalRecord>> by_class;
  for (const auto& r : records) by_class[r.class_id].push_back(r);
  double sum = 0.0;
  for (const auto& [_, group] : by_class) sum += PrecisionAt(group, x);
  return sum / static_cast<double>(by_class.size());
}

double InstanceApAt(std::span<const int> pred, std::span<const int> gt, double iou_threshold) {
  if (pred.size() != gt.size()) throw StructuralError("instance labelings differ in length");
  std::map<int, std::size_t> pred_size, gt_size;
  // First point index of each cluster: a label-free tie-break key.
  std::map<int, std::size_t> pred_first, gt_first;
  std::map<std::pair<int, int>, std::size_t> overlap;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] != 0 && ++pred_size[pred[i]] == 1) pred_first[pred[i]] = i;
    if (gt[i] != 0 && ++gt_size[gt[i]] == 1) gt_first[gt[i]] = i;
    if (pred[i] != 0 && gt[i] != 0) ++overlap[{pred[i], gt[i]}];
  }
  const std::size_t denom = std::max(pred_size.size(), gt_size.size());
  if (denom == 0) return 1.0;

  struct Pair {
    double iou;
    int p, g;
    std::size_t p_first, g_first;
  };
  std::vector<Pair> pairs;
  for (const auto& [key, inter] : overlap) {
    const double uni = static_cast<double>(pred_size[key.first] + gt_size[key.second] - inter);
    pairs.push_back({static_cast<double>(inter) / uni, key.first, key.second, pred_first[key.first],
                     gt_first[key.second]});
  }
  // Descending IoU. Ties go by where each cluster first appears rather than
  // by its id, so renumbering clusters cannot change the matching.
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    if (a.p_first != b.p_first) return a.p_first < b.p_first;
    return a.g_first < b.g_first;
  });
  std::set<int> used_p, used_g;
  std::size_t matched = 0;
  for (const auto& pr : pairs) {
    if (used_p.count(pr.p) || used_g.count(pr.g)) continue;
    used_p.insert(pr.p);
    used_g.insert(pr.g);
    if (pr.iou >= iou_threshold) ++matched;
  }
  return static_cast<double>(matched) / static_cast<double>(denom);
}

double Ap25(std::span<const int> pred, std::span<const int> gt) { return InstanceApAt(pred, gt, 0.25); }

MetricSummary Summarize(std::span<const EvalRecord> records) {
  MetricSummary s;
  s.queries = records.size();
  s.miou = MeanIou(records);
  s.pr25 = PrecisionAt(records, 25);
  s.pr50 = PrecisionAt(records, 50);
  s.pr75 = PrecisionAt(records, 75);
  s.macc25 = MeanAccuracyAt(records, 25);
  s.macc50 = MeanAccuracyAt(records, 50);
  s.macc75 = MeanAccuracyAt(records, 75);
  return s;
}

namespace io {

using nlohmann::ordered_json;

void WriteEvalReport(const std::filesystem::path& path, const std::string& task,
                     std::span<const EvalRecord> records, const MetricSummary& summary,
                     const std::string& extra_json) {
  ordered_json j;
  j["task"] = task;
  j["aggregates"] = {{"mIoU", summary.miou},     {"Pr@25", summary.pr25},     {"Pr@50", summary.pr50},
                     {"Pr@75", summary.pr75},    {"mAcc@25", summary.macc25}, {"mAcc@50", summary.macc50},
                     {"mAcc@75", summary.macc75}, {"queries", summary.queries}};
  j["conventions"] = {{"pr_at", "IoU > X/100 (strict)"}, {"macc_at", "class-balanced Pr@X"}};
  j["records"] = ordered_json::array();
  for (const auto& r : records) {
    j["records"].push_back({{"query", r.query_id}, {"class", r.class_id}, {"iou", r.iou},
                            {"predicted", r.predicted_count}, {"gt", r.gt_count}});
  }
  const auto extra = ordered_json::parse(extra_json, nullptr, false);
  if (extra.is_object()) {
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  }
  WriteText(path, j.dump(2) + "\n");
}

void WriteSummaryCsv(const std::filesystem::path& path,
                     std::span<const std::pair<std::string, MetricSummary>> rows) {
  std::ostringstream out;
  out << "name,mIoU,Pr@25,Pr@50,Pr@75\n";
  char buf[160];
  for (const auto& [name, s] : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.2f,%.2f,%.2f,%.2f\n", name.c_str(), 100.0 * s.miou, 100.0 * s.pr25,
                  100.0 * s.pr50, 100.0 * s.pr75);
    out << buf;
  }
  WriteText(path, out.str());
}

}  // namespace io

}  // namespace featfuse
