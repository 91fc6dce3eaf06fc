#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "headlens/endpoint.h"
#include "headlens/lexicon.h"

namespace headlens {

inline constexpr std::string_view kJudgePromptTemplate =
    "You are judging concept alignment. Concept: \"{concept}\". Description: \"{span}\". "
    "Does the description align with the concept? Answer YES or NO.";

std::string render_judge_prompt(std::string_view span_text, std::string_view concept_label);

// Hash of kJudgePromptTemplate; part of every cache key.
const std::string& judge_template_hash();

// First standalone YES or NO token, case-insensitive. nullopt when the
// response contains neither.
std::optional<bool> parse_judge_response(std::string_view response);

struct Verdict {
  std::string judge_id;
  std::string span_id;
  std::string concept_label;
  bool aligned = false;
  std::string raw_response;

  bool operator==(const Verdict&) const = default;
};

struct ConsensusVerdict {
  std::string span_id;
  std::string concept_label;
  std::array<Verdict, 3> per_judge;
  bool consistent = false;

  bool operator==(const ConsensusVerdict&) const = default;
};

nlohmann::json verdict_to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& doc);
nlohmann::json consensus_to_json(const ConsensusVerdict& c);
ConsensusVerdict consensus_from_json(const nlohmann::json& doc);

class Judge {
 public:
  virtual ~Judge() = default;
  virtual const std::string& id() const = 0;
  // Identifies everything besides the inputs that determines a verdict
  // (prompt template, lexicon contents). Part of the cache key.
  virtual const std::string& cache_tag() const = 0;
  virtual Verdict judge(const std::string& span_id, const std::string& span_text,
                        const std::string& concept_label) = 0;
};

// Offline judge: aligned iff one of the concept's lexicon keywords occurs in
// the span text. Throws JudgeError(kConfig) for concepts missing from the
// lexicon.
Verdict lexical_judge(std::string_view span_text, std::string_view concept_label, const Lexicon& lexicon);

class LexicalJudge : public Judge {
 public:
  LexicalJudge(std::string id, std::shared_ptr<const Lexicon> lexicon);

  const std::string& id() const override { return id_; }
  const std::string& cache_tag() const override { return tag_; }
  Verdict judge(const std::string& span_id, const std::string& span_text, const std::string& concept_label) override;

 private:
  std::string id_;
  std::shared_ptr<const Lexicon> lexicon_;
  std::string tag_;
};

// Sends the fixed prompt template to a hosted model. Unparseable replies are
// errors (JudgeError::kUnparseable), never a silent "no".
Verdict remote_judge(std::string_view span_text, std::string_view concept_label, const EndpointConfig& endpoint);

class RemoteJudge : public Judge {
 public:
  explicit RemoteJudge(EndpointConfig endpoint) : endpoint_(std::move(endpoint)) {}

  const std::string& id() const override { return endpoint_.id; }
  const std::string& cache_tag() const override { return judge_template_hash(); }
  Verdict judge(const std::string& span_id, const std::string& span_text, const std::string& concept_label) override;

 private:
  EndpointConfig endpoint_;
};

// Verdict store keyed by (judge id, span id, normalized concept, cache tag).
// Backed by an append-only JSON-lines file when constructed with a path; one
// line is flushed per verdict so an interrupted run keeps everything judged so
// far. Safe for concurrent use from multiple threads of one process.
class VerdictCache {
 public:
  VerdictCache() = default;
  explicit VerdictCache(const std::filesystem::path& file);

  std::optional<Verdict> find(const std::string& judge_id, const std::string& span_id,
                              const std::string& concept_label, const std::string& tag) const;
  void put(const Verdict& verdict, const std::string& tag);

  std::size_t size() const;
  std::size_t hits() const;
  std::size_t misses() const;
  // Lines in the backing file that could not be parsed (e.g. a torn write).
  std::size_t skipped_lines() const { return skipped_; }

 private:
  static std::string key(const std::string& judge_id, const std::string& span_id, const std::string& concept_label,
                         const std::string& tag);

  mutable std::mutex mu_;
  std::map<std::string, Verdict> entries_;
  std::ofstream out_;
  mutable std::size_t hits_ = 0;
  mutable std::size_t misses_ = 0;
  std::size_t skipped_ = 0;
};

// Asks three distinct judges whether the span matches the concept; consistent
// only when all three say yes. Verdicts already in `cache` are reused and new
// ones are stored before the next judge is asked, so a judge failure leaves
// the earlier verdicts cached.
ConsensusVerdict consensus(const std::string& span_id, const std::string& span_text, const std::string& concept_label,
                           std::span<Judge* const> judges, VerdictCache* cache = nullptr);

}  // namespace headlens
