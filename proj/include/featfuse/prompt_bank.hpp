#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace featfuse {

// CLIP ViT-L/14 embedding width; synthetic suites use smaller dims.
inline constexpr int kDefaultEmbeddingDim = 768;

using Embedding = std::vector<float>;

double Dot(std::span<const float> a, std::span<const float> b);
double Norm(std::span<const float> a);

// Cosine similarity in double precision. Throws ParameterError on a zero
// vector or a dimension mismatch.
double Cosine(std::span<const float> a, std::span<const float> b);

// In-place L2 normalization; returns false (and leaves v untouched) when the
// norm is zero.
bool NormalizeInPlace(std::span<float> v);

// Mean of a prompt set renormalized to unit length. Inputs are expected to be
// unit norm. Throws ParameterError for an empty set and NumericalError when
// the mean vanishes ("degenerate prompt set").
Embedding ObjectPrompt(std::span<const Embedding> prompts);

struct InstancePrompts {
  std::vector<std::string> texts;  // provenance only; may be empty
  std::vector<Embedding> prompts;
  Embedding mean;
};

inline const std::vector<std::string> kCanonicalPhrases = {"object", "thing", "texture", "stuff"};

class PromptBank {
 public:
  explicit PromptBank(int dim = kDefaultEmbeddingDim) : dim_(dim) {}

  int dim() const { return dim_; }

  // Computes and stores the mean prompt of instance `id`.
  void AddInstance(int id, std::vector<Embedding> prompts, std::vector<std::string> texts = {});
  void SetCanonical(std::vector<Embedding> embeddings, std::vector<std::string> texts = kCanonicalPhrases);

  bool contains(int id) const { return instances_.count(id) != 0; }
  const InstancePrompts& instance(int id) const;
  const Embedding& prompt(int id) const { return instance(id).mean; }
  const std::map<int, InstancePrompts>& instances() const { return instances_; }
  std::vector<int> instance_ids() const;

  bool has_canonical() const { return !canonical_.empty(); }
  const std::vector<Embedding>& canonical() const { return canonical_; }
  const std::vector<std::string>& canonical_texts() const { return canonical_texts_; }

 private:
  void CheckDim(const Embedding& e) const;

  int dim_;
  std::map<int, InstancePrompts> instances_;
  std::vector<Embedding> canonical_;
  std::vector<std::string> canonical_texts_;
};

enum class NegativeStrategy { kScene, kAll, kCanonical, kNone };
enum class Reduction { kMax, kMean };

NegativeStrategy ParseNegativeStrategy(const std::string& name);
Reduction ParseReduction(const std::string& name);
std::string ToString(NegativeStrategy s);
std::string ToString(Reduction r);

struct QueryContext {
  Embedding positive;
  std::vector<Embedding> negatives;
  NegativeStrategy strategy = NegativeStrategy::kScene;
  Reduction reduction = Reduction::kMax;
};

// Positive and negative prompts for `target_instance` (a catalog id that must
// appear in `scene_instances`). kScene uses the other in-scene instances, kAll
// every other catalog instance, kCanonical the four generic phrases, kNone
// nothing. Instances sharing the target's catalog id are never negatives.
QueryContext BuildContext(const PromptBank& bank, std::span<const int> scene_instances,
                          int target_instance, NegativeStrategy strategy,
                          Reduction reduction = Reduction::kMax);

// Context for an arbitrary query embedding (free-form text prompt).
QueryContext BuildContextForQuery(const PromptBank& bank, std::span<const int> scene_instances,
                                  Embedding query, NegativeStrategy strategy,
                                  Reduction reduction = Reduction::kMax);

namespace io {

// <path> is a JSON header; float32 vectors live in the sibling file named by
// its "data" field, in header order (instances, then canonical phrases).
void SavePromptBank(const PromptBank& bank, const std::filesystem::path& header_path);
PromptBank LoadPromptBank(const std::filesystem::path& header_path);

// Headerless float32 vector of length dim.
Embedding ReadEmbedding(const std::filesystem::path& path, int dim);
void WriteEmbedding(const std::filesystem::path& path, std::span<const float> e);

}  // namespace io

}  // namespace featfuse
