#include "headlens/artifact_store.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "headlens/errors.h"
#include "headlens/sampling.h"

namespace headlens {

using nlohmann::json;

std::string contribution_tensor_name(HeadId head) { return "head/" + to_string(head); }

std::vector<HeadId> Manifest::window_heads() const {
  std::vector<int> layers = window;
  std::sort(layers.begin(), layers.end());
  std::vector<HeadId> heads;
  heads.reserve(layers.size() * static_cast<std::size_t>(std::max(heads_per_layer, 0)));
  for (const int layer : layers) {
    for (int h = 0; h < heads_per_layer; ++h) heads.push_back({layer, h});
  }
  return heads;
}

bool Manifest::in_window(HeadId head) const {
  return head.head >= 0 && head.head < heads_per_layer &&
         std::find(window.begin(), window.end(), head.layer) != window.end();
}

// ---------------------------------------------------------------------------
// Manifest JSON

namespace {

[[noreturn]] void bad_manifest(const std::string& what) {
  throw FormatError(FormatError::Kind::kBadManifest, "manifest: " + what);
}

template <typename T>
T required(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) bad_manifest(std::string("missing field '") + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    bad_manifest(std::string("field '") + key + "': " + e.what());
  }
}

template <typename T>
T optional_field(const json& doc, const char* key, T fallback) {
  if (!doc.contains(key) || doc.at(key).is_null()) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const json::exception& e) {
    bad_manifest(std::string("field '") + key + "': " + e.what());
  }
}

}  // namespace

Manifest manifest_from_json(const json& doc) {
  if (!doc.is_object()) bad_manifest("document is not a JSON object");
  Manifest m;
  m.model_name = required<std::string>(doc, "model_name");
  m.embed_dim = required<int>(doc, "embed_dim");
  m.num_layers = required<int>(doc, "num_layers");
  m.heads_per_layer = required<int>(doc, "heads_per_layer");
  m.window = required<std::vector<int>>(doc, "window");
  m.image_ids = required<std::vector<std::string>>(doc, "image_ids");
  const json candidates = required<json>(doc, "candidate_span_ids");
  for (const auto& entry : candidates) {
    m.candidate_span_ids.push_back({required<std::string>(entry, "id"), required<std::string>(entry, "text")});
  }
  const json prompt_sets = optional_field<json>(doc, "class_prompt_sets", json::object());
  for (const auto& [name, entry] : prompt_sets.items()) {
    PromptSet set;
    set.tensor = required<std::string>(entry, "tensor");
    const json prompts = required<json>(entry, "prompts");
    for (const auto& p : prompts) {
      set.prompts.push_back({required<std::string>(p, "text"), required<std::string>(p, "label")});
    }
    set.image_labels = optional_field<std::vector<std::string>>(entry, "image_labels", {});
    m.class_prompt_sets.emplace(name, std::move(set));
  }
  const json retrieval_sets = optional_field<json>(doc, "retrieval_sets", json::object());
  for (const auto& [name, entry] : retrieval_sets.items()) {
    RetrievalSet set;
    set.tensor = required<std::string>(entry, "tensor");
    const json queries = required<json>(entry, "queries");
    for (const auto& q : queries) {
      set.queries.push_back(
          {required<std::string>(q, "text"), required<std::vector<std::string>>(q, "targets")});
    }
    m.retrieval_sets.emplace(name, std::move(set));
  }
  m.files = required<std::map<std::string, std::string>>(doc, "files");
  m.attribute_tables = optional_field<std::vector<std::string>>(doc, "attribute_tables", {});
  return m;
}

json manifest_to_json(const Manifest& m) {
  json doc;
  doc["model_name"] = m.model_name;
  doc["embed_dim"] = m.embed_dim;
  doc["num_layers"] = m.num_layers;
  doc["heads_per_layer"] = m.heads_per_layer;
  doc["window"] = m.window;
  doc["image_ids"] = m.image_ids;
  doc["candidate_span_ids"] = json::array();
  for (const auto& c : m.candidate_span_ids) doc["candidate_span_ids"].push_back({{"id", c.id}, {"text", c.text}});
  doc["class_prompt_sets"] = json::object();
  for (const auto& [name, set] : m.class_prompt_sets) {
    json prompts = json::array();
    for (const auto& p : set.prompts) prompts.push_back({{"text", p.text}, {"label", p.label}});
    json entry = {{"tensor", set.tensor}, {"prompts", prompts}};
    if (!set.image_labels.empty()) entry["image_labels"] = set.image_labels;
    doc["class_prompt_sets"][name] = entry;
  }
  if (!m.retrieval_sets.empty()) {
    for (const auto& [name, set] : m.retrieval_sets) {
      json queries = json::array();
      for (const auto& q : set.queries) queries.push_back({{"text", q.text}, {"targets", q.targets}});
      doc["retrieval_sets"][name] = {{"tensor", set.tensor}, {"queries", queries}};
    }
  }
  doc["files"] = m.files;
  if (!m.attribute_tables.empty()) doc["attribute_tables"] = m.attribute_tables;
  return doc;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << manifest_to_json(manifest).dump(2) << '\n';
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Attribute tables

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (const char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

void AttributeTable::set(const std::string& image_id, const std::string& attribute, const std::string& value) {
  values_[image_id][attribute] = value;
}

bool AttributeTable::has(const std::string& image_id, const std::string& attribute) const {
  const auto it = values_.find(image_id);
  return it != values_.end() && it->second.count(attribute) > 0;
}

const std::string& AttributeTable::value(const std::string& image_id, const std::string& attribute) const {
  const auto it = values_.find(image_id);
  if (it != values_.end()) {
    const auto jt = it->second.find(attribute);
    if (jt != it->second.end()) return jt->second;
  }
  throw MetricError("no '" + attribute + "' attribute for image '" + image_id + "'");
}

std::vector<std::string> AttributeTable::attributes() const {
  std::set<std::string> names;
  for (const auto& [_, row] : values_) {
    for (const auto& [attr, __] : row) names.insert(attr);
  }
  return {names.begin(), names.end()};
}

void AttributeTable::merge_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open attribute table '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) != std::vector<std::string>{"image_id", "attribute", "value"}) {
    throw FormatError(FormatError::Kind::kBadManifest,
                      path.string() + ": attribute table header must be image_id,attribute,value");
  }
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 3) {
      throw FormatError(FormatError::Kind::kBadManifest,
                        path.string() + ":" + std::to_string(line_no) + ": expected 3 fields");
    }
    set(fields[0], fields[1], fields[2]);
  }
}

AttributeTable AttributeTable::load_csv(const std::filesystem::path& path) {
  AttributeTable table;
  table.merge_csv(path);
  return table;
}

void AttributeTable::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << "image_id,attribute,value\n";
  for (const auto& [image, row] : values_) {
    for (const auto& [attr, value] : row) {
      out << csv_field(image) << ',' << csv_field(attr) << ',' << csv_field(value) << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Bundle

MatrixF to_matrix(const TensorRecord& record) {
  if (record.shape.size() != 2) {
    throw InvariantError("expected a rank-2 tensor, got rank " + std::to_string(record.shape.size()));
  }
  const auto rows = static_cast<Eigen::Index>(record.shape[0]);
  const auto cols = static_cast<Eigen::Index>(record.shape[1]);
  return Eigen::Map<const MatrixF>(record.data.data(), rows, cols);
}

TensorRecord to_tensor(const MatrixF& matrix) {
  TensorRecord record;
  record.shape = {static_cast<std::uint64_t>(matrix.rows()), static_cast<std::uint64_t>(matrix.cols())};
  record.data.assign(matrix.data(), matrix.data() + matrix.size());
  return record;
}

const MatrixF& Bundle::contribution(HeadId head) const {
  const auto it = contributions_.find(head);
  if (it == contributions_.end()) throw InvariantError("head " + to_string(head) + " is outside the analysis window");
  return it->second;
}

const MatrixF& Bundle::prompt_embeddings(const std::string& set_name) const {
  const auto it = prompt_embeddings_.find(set_name);
  if (it == prompt_embeddings_.end()) throw ConfigError("unknown class prompt set '" + set_name + "'");
  return it->second;
}

const MatrixF& Bundle::retrieval_embeddings(const std::string& set_name) const {
  const auto it = retrieval_embeddings_.find(set_name);
  if (it == retrieval_embeddings_.end()) throw ConfigError("unknown retrieval set '" + set_name + "'");
  return it->second;
}

std::optional<std::size_t> Bundle::image_index(const std::string& image_id) const {
  const auto it = image_index_.find(image_id);
  if (it == image_index_.end()) return std::nullopt;
  return it->second;
}

namespace {

std::string shape_string(const std::vector<std::uint64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

MatrixF load_matrix(const Manifest& m, const std::filesystem::path& root, const std::string& name,
                    std::size_t expected_rows) {
  const auto it = m.files.find(name);
  if (it == m.files.end()) throw InvariantError("missing tensor '" + name + "' in manifest file table");
  const auto path = root / it->second;
  if (!std::filesystem::exists(path)) throw IoError("missing tensor file '" + path.string() + "' for '" + name + "'");
  auto record = read_tensor(path);
  const std::vector<std::uint64_t> expected = {expected_rows, static_cast<std::uint64_t>(m.embed_dim)};
  if (record.shape != expected) {
    throw InvariantError("dimension mismatch for '" + name + "': got " + shape_string(record.shape) + ", expected " +
                         shape_string(expected));
  }
  return to_matrix(record);
}

void check_unit_rows(const MatrixF& mat, const std::string& name, double tolerance) {
  for (Eigen::Index r = 0; r < mat.rows(); ++r) {
    const double norm = mat.row(r).cast<double>().norm();
    if (std::abs(norm - 1.0) > tolerance) {
      throw InvariantError("text embedding '" + name + "' row " + std::to_string(r) + " has norm " +
                           std::to_string(norm) + " (expected unit norm)");
    }
  }
}

void check_structure(const Manifest& m) {
  if (m.embed_dim <= 0) throw InvariantError("embed_dim must be positive");
  if (m.num_layers <= 0 || m.heads_per_layer <= 0) throw InvariantError("num_layers and heads_per_layer must be positive");
  if (m.window.empty()) throw InvariantError("analysis window is empty");
  std::set<int> seen;
  for (const int layer : m.window) {
    if (layer < 0 || layer >= m.num_layers) {
      throw InvariantError("window layer " + std::to_string(layer) + " outside [0, " + std::to_string(m.num_layers) + ")");
    }
    if (!seen.insert(layer).second) throw InvariantError("window layer " + std::to_string(layer) + " repeated");
  }
  if (m.image_ids.empty()) throw InvariantError("manifest has no images");
  std::set<std::string> ids(m.image_ids.begin(), m.image_ids.end());
  if (ids.size() != m.image_ids.size()) throw InvariantError("duplicate image ids");
  std::set<std::string> spans;
  for (const auto& c : m.candidate_span_ids) {
    if (!spans.insert(c.id).second) throw InvariantError("duplicate candidate span id '" + c.id + "'");
  }
}

}  // namespace

Bundle load_bundle(const std::filesystem::path& manifest_path, const LoadOptions& options) {
  std::ifstream in(manifest_path);
  if (!in) throw IoError("cannot open manifest '" + manifest_path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(FormatError::Kind::kBadManifest, manifest_path.string() + ": " + e.what());
  }

  Bundle b;
  b.manifest_ = manifest_from_json(doc);
  b.root_ = manifest_path.parent_path();
  const Manifest& m = b.manifest_;
  check_structure(m);

  const std::size_t n = m.image_ids.size();
  for (std::size_t i = 0; i < n; ++i) b.image_index_.emplace(m.image_ids[i], i);

  for (const auto head : m.window_heads()) {
    b.contributions_.emplace(head, load_matrix(m, b.root_, contribution_tensor_name(head), n));
  }
  b.remainder_ = load_matrix(m, b.root_, kRemainderTensor, n);
  b.total_ = load_matrix(m, b.root_, kTotalTensor, n);
  b.candidates_ = load_matrix(m, b.root_, kCandidatesTensor, m.candidate_span_ids.size());
  check_unit_rows(b.candidates_, kCandidatesTensor, options.unit_norm_tolerance);

  for (const auto& [name, set] : m.class_prompt_sets) {
    auto mat = load_matrix(m, b.root_, set.tensor, set.prompts.size());
    check_unit_rows(mat, set.tensor, options.unit_norm_tolerance);
    if (!set.image_labels.empty() && set.image_labels.size() != n) {
      throw InvariantError("prompt set '" + name + "' has " + std::to_string(set.image_labels.size()) +
                           " image labels for " + std::to_string(n) + " images");
    }
    b.prompt_embeddings_.emplace(name, std::move(mat));
  }
  for (const auto& [name, set] : m.retrieval_sets) {
    auto mat = load_matrix(m, b.root_, set.tensor, set.queries.size());
    check_unit_rows(mat, set.tensor, options.unit_norm_tolerance);
    for (const auto& q : set.queries) {
      for (const auto& t : q.targets) {
        if (!b.image_index_.count(t)) throw InvariantError("retrieval set '" + name + "' targets unknown image '" + t + "'");
      }
    }
    b.retrieval_embeddings_.emplace(name, std::move(mat));
  }
  for (const auto& table : m.attribute_tables) b.attributes_.merge_csv(b.root_ / table);

  // Reconstruction: total == sum of window-head contributions + remainder.
  std::vector<std::size_t> sample;
  if (n <= options.reconstruction_sample) {
    sample.resize(n);
    for (std::size_t i = 0; i < n; ++i) sample[i] = i;
  } else {
    sample = sample_without_replacement(n, options.reconstruction_sample, options.sample_seed);
    std::sort(sample.begin(), sample.end());
  }
  ReconstructionReport report;
  report.images_checked = sample.size();
  for (const std::size_t i : sample) {
    const auto row = static_cast<Eigen::Index>(i);
    Eigen::RowVectorXd sum = b.remainder_.row(row).cast<double>();
    for (const auto& [_, contrib] : b.contributions_) sum += contrib.row(row).cast<double>();
    const Eigen::RowVectorXd total = b.total_.row(row).cast<double>();
    const double total_norm = total.norm();
    const double residual = (total - sum).norm() / (total_norm > 0.0 ? total_norm : 1.0);
    if (residual > report.max_relative_residual || report.worst_image.empty()) {
      report.max_relative_residual = residual;
      report.worst_image = m.image_ids[i];
    }
  }
  if (report.max_relative_residual > options.reconstruction_tolerance) {
    std::ostringstream os;
    os << "reconstruction residual " << report.max_relative_residual << " exceeds tolerance "
       << options.reconstruction_tolerance << " at image '" << report.worst_image << "'";
    throw ReconstructionError(report.worst_image, report.max_relative_residual, os.str());
  }
  b.reconstruction_ = report;
  return b;
}

}  // namespace headlens
