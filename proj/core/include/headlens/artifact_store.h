#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "headlens/head_id.h"
#include "headlens/tensor_io.h"

namespace headlens {

using MatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr char kRemainderTensor[] = "remainder";
inline constexpr char kTotalTensor[] = "total";
inline constexpr char kCandidatesTensor[] = "candidates";

// Logical tensor name of a head's contribution matrix, e.g. "head/L8.H11".
std::string contribution_tensor_name(HeadId head);

struct CandidateSpan {
  std::string id;
  std::string text;
};

struct PromptEntry {
  std::string text;
  std::string label;
};

// A named set of text prompts embedded one row per prompt. For zero-shot
// classification the classes are the distinct labels in first-seen order and
// image_labels holds the ground truth per image (may be empty for prompt sets
// that are only used for ranking, e.g. occupation prompts).
struct PromptSet {
  std::string tensor;
  std::vector<PromptEntry> prompts;
  std::vector<std::string> image_labels;
};

// Text queries against the manifest's image gallery. targets are image ids.
struct RetrievalQuery {
  std::string text;
  std::vector<std::string> targets;
};

struct RetrievalSet {
  std::string tensor;
  std::vector<RetrievalQuery> queries;
};

struct Manifest {
  std::string model_name;
  int embed_dim = 0;
  int num_layers = 0;
  int heads_per_layer = 0;
  std::vector<int> window;
  std::vector<std::string> image_ids;
  std::vector<CandidateSpan> candidate_span_ids;
  std::map<std::string, PromptSet> class_prompt_sets;
  std::map<std::string, RetrievalSet> retrieval_sets;
  std::map<std::string, std::string> files;
  std::vector<std::string> attribute_tables;

  // Window heads ordered by (layer, head).
  std::vector<HeadId> window_heads() const;
  bool in_window(HeadId head) const;
};

// Throws FormatError(kBadManifest) for missing or ill-typed fields.
Manifest manifest_from_json(const nlohmann::json& doc);
nlohmann::json manifest_to_json(const Manifest& manifest);
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Per-image categorical attributes, loaded from CSV files with the header
// `image_id,attribute,value`.
class AttributeTable {
 public:
  void set(const std::string& image_id, const std::string& attribute, const std::string& value);
  // Throws MetricError when the image has no value for the attribute.
  const std::string& value(const std::string& image_id, const std::string& attribute) const;
  bool has(const std::string& image_id, const std::string& attribute) const;
  std::vector<std::string> attributes() const;
  bool empty() const { return values_.empty(); }

  static AttributeTable load_csv(const std::filesystem::path& path);
  void merge_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

struct LoadOptions {
  // Images checked for reconstruction. All images are checked when N is at
  // most this many; otherwise a seeded sample of this size.
  std::size_t reconstruction_sample = 4096;
  std::uint64_t sample_seed = 0;
  double reconstruction_tolerance = 1e-4;
  double unit_norm_tolerance = 1e-4;
};

struct ReconstructionReport {
  std::size_t images_checked = 0;
  double max_relative_residual = 0.0;
  std::string worst_image;
};

// An export loaded into memory and validated. Immutable after construction.
class Bundle {
 public:
  const Manifest& manifest() const { return manifest_; }
  const std::filesystem::path& root() const { return root_; }
  std::size_t num_images() const { return manifest_.image_ids.size(); }
  int embed_dim() const { return manifest_.embed_dim; }

  const MatrixF& contribution(HeadId head) const;
  const MatrixF& remainder() const { return remainder_; }
  const MatrixF& total() const { return total_; }
  const MatrixF& candidates() const { return candidates_; }
  // Text embeddings of a class prompt set or retrieval set, by set name.
  const MatrixF& prompt_embeddings(const std::string& set_name) const;
  const MatrixF& retrieval_embeddings(const std::string& set_name) const;
  const AttributeTable& attributes() const { return attributes_; }
  const ReconstructionReport& reconstruction() const { return reconstruction_; }

  std::optional<std::size_t> image_index(const std::string& image_id) const;

 private:
  friend Bundle load_bundle(const std::filesystem::path&, const LoadOptions&);

  Manifest manifest_;
  std::filesystem::path root_;
  std::map<HeadId, MatrixF> contributions_;
  MatrixF remainder_;
  MatrixF total_;
  MatrixF candidates_;
  std::map<std::string, MatrixF> prompt_embeddings_;
  std::map<std::string, MatrixF> retrieval_embeddings_;
  std::map<std::string, std::size_t> image_index_;
  AttributeTable attributes_;
  ReconstructionReport reconstruction_;
};

// Loads a manifest and every tensor it references, and checks all manifest
// invariants eagerly. Throws IoError / FormatError for unreadable input,
// InvariantError for missing tensors and shape or normalization problems,
// ReconstructionError when an image's decomposition does not sum to its
// total representation.
Bundle load_bundle(const std::filesystem::path& manifest_path, const LoadOptions& options = {});

// Row-major f32 conversions between tensors and matrices.
MatrixF to_matrix(const TensorRecord& record);
TensorRecord to_tensor(const MatrixF& matrix);

}  // namespace headlens
