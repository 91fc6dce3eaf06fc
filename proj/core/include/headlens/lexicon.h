#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace headlens {

// Concept labels compare case-insensitively after trimming whitespace.
std::string normalize_label(std::string_view label);

// Lowercase alphanumeric tokens; everything else separates.
std::vector<std::string> tokenize(std::string_view text);

// A token matches a keyword when equal to it or to its plural ("s"/"es").
bool token_matches(std::string_view token, std::string_view keyword);

// Concept -> keywords used by the offline judge and labeler.
class Lexicon {
 public:
  void add(const std::string& concept_label, std::vector<std::string> keywords);

  bool contains(std::string_view concept_label) const;
  // Display names, sorted.
  std::vector<std::string> concepts() const;
  // Canonical display name of a concept, nullopt if unknown.
  std::optional<std::string> display_name(std::string_view concept_label) const;

  // First keyword of the concept found in the text (multi-word keywords must
  // match consecutive tokens). Throws JudgeError(kConfig) for unknown concepts.
  std::optional<std::string> first_match(std::string_view text, std::string_view concept_label) const;

  // {"Animals": ["penguin", "donkey"], ...}
  static Lexicon from_json(const nlohmann::json& doc);
  static Lexicon load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

 private:
  struct Entry {
    std::string display;
    std::vector<std::vector<std::string>> keywords;  // tokenized
    std::vector<std::string> raw;
  };
  std::map<std::string, Entry> entries_;
};

}  // namespace headlens
