#include "featfuse/prompt_bank.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "featfuse/binary_io.hpp"
#include "featfuse/error.hpp"

namespace featfuse {

namespace {
constexpr double kDegenerateNorm = 1e-6;
}

double Dot(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ParameterError("embedding dimensions differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

double Norm(std::span<const float> a) {
  double s = 0.0;
  for (float x : a) s += static_cast<double>(x) * x;
  return std::sqrt(s);
}

double Cosine(std::span<const float> a, std::span<const float> b) {
  const double dot = Dot(a, b);
  const double na = Norm(a);
  const double nb = Norm(b);
  if (na == 0.0 || nb == 0.0) throw ParameterError("cosine of a zero vector");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

bool NormalizeInPlace(std::span<float> v) {
  const double n = Norm(v);
  if (n == 0.0) return false;
  for (float& x : v) x = static_cast<float>(x / n);
  return true;
}

Embedding ObjectPrompt(std::span<const Embedding> prompts) {
  if (prompts.empty()) throw ParameterError("prompt set is empty");
  const std::size_t dim = prompts.front().size();
  std::vector<double> sum(dim, 0.0);
  for (const auto& p : prompts) {
    if (p.size() != dim) throw ParameterError("prompt dimensions differ");
    for (std::size_t c = 0; c < dim; ++c) sum[c] += p[c];
  }
  double norm = 0.0;
  for (double& s : sum) {
    s /= static_cast<double>(prompts.size());
    norm += s * s;
  }
  norm = std::sqrt(norm);
  if (norm < kDegenerateNorm) throw NumericalError("degenerate prompt set");
  Embedding out(dim);
  for (std::size_t c = 0; c < dim; ++c) out[c] = static_cast<float>(sum[c] / norm);
  return out;
}

void PromptBank::CheckDim(const Embedding& e) const {
  if (static_cast<int>(e.size()) != dim_) {
    throw StructuralError("embedding has dim " + std::to_string(e.size()) + ", bank expects " +
                          std::to_string(dim_));
  }
}

void PromptBank::AddInstance(int id, std::vector<Embedding> prompts, std::vector<std::string> texts) {
  for (const auto& p : prompts) CheckDim(p);
  if (!texts.empty() && texts.size() != prompts.size()) {
    throw StructuralError("prompt text count differs from embedding count");
  }
  InstancePrompts entry;
  entry.mean = ObjectPrompt(prompts);
  entry.prompts = std::move(prompts);
  entry.texts = std::move(texts);
  instances_[id] = std::move(entry);
}

void PromptBank::SetCanonical(std::vector<Embedding> embeddings, std::vector<std::string> texts) {
  for (const auto& e : embeddings) CheckDim(e);
  if (texts.size() != embeddings.size()) throw StructuralError("canonical text count differs");
  canonical_ = std::move(embeddings);
  canonical_texts_ = std::move(texts);
}

const InstancePrompts& PromptBank::instance(int id) const {
  auto it = instances_.find(id);
  if (it == instances_.end()) throw LookupError("unknown catalog instance " + std::to_string(id));
  return it->second;
}

std::vector<int> PromptBank::instance_ids() const {
  std::vector<int> ids;
  ids.reserve(instances_.size());
  for (const auto& [id, _] : instances_) ids.push_back(id);
  return ids;
}

NegativeStrategy ParseNegativeStrategy(const std::string& name) {
  if (name == "scene") return NegativeStrategy::kScene;
  if (name == "all") return NegativeStrategy::kAll;
  if (name == "canonical") return NegativeStrategy::kCanonical;
  if (name == "none") return NegativeStrategy::kNone;
  throw ParameterError("unknown negative strategy '" + name + "'");
}

Reduction ParseReduction(const std::string& name) {
  if (name == "max") return Reduction::kMax;
  if (name == "mean") return Reduction::kMean;
  throw ParameterError("unknown reduction '" + name + "'");
}

std::string ToString(NegativeStrategy s) {
  switch (s) {
    case NegativeStrategy::kScene: return "scene";
    case NegativeStrategy::kAll: return "all";
    case NegativeStrategy::kCanonical: return "canonical";
    case NegativeStrategy::kNone: return "none";
  }
  return "?";
}

std::string ToString(Reduction r) { return r == Reduction::kMax ? "max" : "mean"; }

QueryContext BuildContext(const PromptBank& bank, std::span<const int> scene_instances,
                          int target_instance, NegativeStrategy strategy, Reduction reduction) {
  if (std::find(scene_instances.begin(), scene_instances.end(), target_instance) == scene_instances.end()) {
    throw LookupError("instance " + std::to_string(target_instance) + " is not in the scene");
  }
  QueryContext ctx;
  ctx.positive = bank.prompt(target_instance);
  ctx.strategy = strategy;
  ctx.reduction = reduction;
  switch (strategy) {
    case NegativeStrategy::kScene: {
      std::vector<int> seen;
      for (int k : scene_instances) {
        if (k == target_instance || std::find(seen.begin(), seen.end(), k) != seen.end()) continue;
        seen.push_back(k);
        ctx.negatives.push_back(bank.prompt(k));
      }
      break;
    }
    case NegativeStrategy::kAll:
      for (const auto& [k, entry] : bank.instances()) {
        if (k != target_instance) ctx.negatives.push_back(entry.mean);
      }
      break;
    case NegativeStrategy::kCanonical:
      if (!bank.has_canonical()) throw LookupError("prompt bank has no canonical phrases");
      ctx.negatives = bank.canonical();
      break;
    case NegativeStrategy::kNone:
      break;
  }
  return ctx;
}

QueryContext BuildContextForQuery(const PromptBank& bank, std::span<const int> scene_instances,
                                  Embedding query, NegativeStrategy strategy, Reduction reduction) {
  if (static_cast<int>(query.size()) != bank.dim()) throw StructuralError("query dimension differs from bank");
  QueryContext ctx;
  ctx.strategy = strategy;
  ctx.reduction = reduction;
  auto is_query = [&](const Embedding& e) { return Cosine(e, query) > 1.0 - 1e-6; };
  switch (strategy) {
    case NegativeStrategy::kScene:
      for (int k : scene_instances) {
        const Embedding& e = bank.prompt(k);
        if (!is_query(e)) ctx.negatives.push_back(e);
      }
      break;
    case NegativeStrategy::kAll:
      for (const auto& [k, entry] : bank.instances()) {
        if (!is_query(entry.mean)) ctx.negatives.push_back(entry.mean);
      }
      break;
    case NegativeStrategy::kCanonical:
      if (!bank.has_canonical()) throw LookupError("prompt bank has no canonical phrases");
      ctx.negatives = bank.canonical();
      break;
    case NegativeStrategy::kNone:
      break;
  }
  ctx.positive = std::move(query);
  return ctx;
}

namespace io {

namespace fs = std::filesystem;
using nlohmann::json;

void SavePromptBank(const PromptBank& bank, const fs::path& header_path) {
  const fs::path data_path = fs::path(header_path).replace_extension(".bin");
  json j;
  j["dim"] = bank.dim();
  j["data"] = data_path.filename().string();
  j["instances"] = json::array();
  ByteWriter writer;
  for (const auto& [id, entry] : bank.instances()) {
    j["instances"].push_back({{"id", id}, {"count", entry.prompts.size()}, {"texts", entry.texts}});
    for (const auto& p : entry.prompts) writer.PutArray<float>(p);
  }
  if (bank.has_canonical()) {
    j["canonical"] = {{"count", bank.canonical().size()}, {"texts", bank.canonical_texts()}};
    for (const auto& e : bank.canonical()) writer.PutArray<float>(e);
  }
  WriteText(header_path, j.dump(2) + "\n");
  WriteBytes(data_path, writer.bytes());
}

PromptBank LoadPromptBank(const fs::path& header_path) {
  json j;
  try {
    j = json::parse(ReadText(header_path));
  } catch (const json::exception& e) {
    throw IoError(header_path.string() + ": " + e.what());
  }
  try {
    const int dim = j.at("dim").get<int>();
    if (dim < 1) throw ValidationError("bank dim must be >= 1");
    const auto bytes = ReadBytes(header_path.parent_path() / j.at("data").get<std::string>());
    ByteReader reader(bytes, header_path.string());
    PromptBank bank(dim);
    for (const json& ji : j.at("instances")) {
      const auto count = ji.at("count").get<std::size_t>();
      std::vector<Embedding> prompts;
      for (std::size_t p = 0; p < count; ++p) prompts.push_back(reader.GetArray<float>(static_cast<std::size_t>(dim)));
      std::vector<std::string> texts;
      if (ji.contains("texts")) texts = ji["texts"].get<std::vector<std::string>>();
      bank.AddInstance(ji.at("id").get<int>(), std::move(prompts), std::move(texts));
    }
    if (j.contains("canonical")) {
      const auto count = j["canonical"].at("count").get<std::size_t>();
      std::vector<Embedding> canon;
      for (std::size_t p = 0; p < count; ++p) canon.push_back(reader.GetArray<float>(static_cast<std::size_t>(dim)));
      auto texts = j["canonical"].value("texts", std::vector<std::string>(count, ""));
      bank.SetCanonical(std::move(canon), std::move(texts));
    }
    reader.ExpectEnd();
    return bank;
  } catch (const json::exception& e) {
    throw ValidationError(header_path.string() + ": " + e.what());
  }
}

Embedding ReadEmbedding(const fs::path& path, int dim) {
  return ReadRawArray<float>(path, static_cast<std::size_t>(dim));
}

void WriteEmbedding(const fs::path& path, std::span<const float> e) { WriteRawArray<float>(path, e); }

}  // namespace io

}  // namespace featfuse
