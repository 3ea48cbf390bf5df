#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace featfuse {

// One evaluated query (a referring expression or a semantic class).
struct EvalRecord {
  std::string query_id;
  int class_id = 0;  // groups records for class-balanced accuracy
  double iou = 0.0;
  std::size_t predicted_count = 0;
  std::size_t gt_count = 0;
};

// |pred & gt| / |pred | gt|; 1 when both are empty, 0 when only one is.
double Iou(std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);
EvalRecord MakeRecord(std::string query_id, int class_id, std::span<const std::uint8_t> pred, std::span<const std::uint8_t> gt);

double MeanIou(std::span<const EvalRecord> records);
// Fraction of records with IoU strictly above X / 100.
double PrecisionAt(std::span<const EvalRecord> records, int x);
// Class-balanced PrecisionAt: mean over distinct class_id values.
double MeanAccuracyAt(std::span<const EvalRecord> records, int x);

// Unscored instance AP: greedy one-to-one matching by descending IoU; matches
// with IoU >= 0.25 over max(#predicted clusters, #gt instances). Label 0 is
// noise in `pred` and background in `gt`. Equal IoUs are ordered by each
// cluster's first point index, which keeps the score independent of ids.
double Ap25(std::span<const int> pred, std::span<const int> gt);
double InstanceApAt(std::span<const int> pred, std::span<const int> gt, double iou_threshold);

struct MetricSummary {
  double miou = 0.0;
  double pr25 = 0.0;
  double pr50 = 0.0;
  double pr75 = 0.0;
  double macc25 = 0.0;
  double macc50 = 0.0;
  double macc75 = 0.0;
  std::size_t queries = 0;
};

MetricSummary Summarize(std::span<const EvalRecord> records);

namespace io {
// JSON report with per-query records and aggregates; `extra` is merged into
// the top-level object when it is a valid JSON object string.
void WriteEvalReport(const std::filesystem::path& path, const std::string& task,
                     std::span<const EvalRecord> records, const MetricSummary& summary,
                     const std::string& extra_json = "{}");
// "name,mIoU,Pr@25,Pr@50,Pr@75" rows, values in percent.
void WriteSummaryCsv(const std::filesystem::path& path,
                     std::span<const std::pair<std::string, MetricSummary>> rows);
}  // namespace io

}  // namespace featfuse
