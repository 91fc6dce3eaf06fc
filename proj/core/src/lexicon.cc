#include "headlens/lexicon.h"

#include <algorithm>
#include <cctype>
#include <fstream>

#include "headlens/errors.h"

namespace headlens {

std::string normalize_label(std::string_view label) {
  const auto first = label.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = label.find_last_not_of(" \t\r\n");
  std::string out(label.substr(first, last - first + 1));
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

bool token_matches(std::string_view token, std::string_view keyword) {
  if (keyword.empty() || token.size() < keyword.size() || token.substr(0, keyword.size()) != keyword) return false;
  const auto suffix = token.substr(keyword.size());
  return suffix.empty() || suffix == "s" || suffix == "es";
}

void Lexicon::add(const std::string& concept_label, std::vector<std::string> keywords) {
  auto& entry = entries_[normalize_label(concept_label)];
  if (entry.display.empty()) entry.display = concept_label;
  for (auto& k : keywords) {
    auto tokens = tokenize(k);
    if (tokens.empty()) continue;
    entry.keywords.push_back(std::move(tokens));
    entry.raw.push_back(std::move(k));
  }
}

bool Lexicon::contains(std::string_view concept_label) const {
  return entries_.count(normalize_label(concept_label)) > 0;
}

std::vector<std::string> Lexicon::concepts() const {
  std::vector<std::string> out;
  for (const auto& [_, e] : entries_) out.push_back(e.display);
  std::sort(out.begin(), out.end());
  return out;
}

std::optional<std::string> Lexicon::display_name(std::string_view concept_label) const {
  const auto it = entries_.find(normalize_label(concept_label));
  if (it == entries_.end()) return std::nullopt;
  return it->second.display;
}

std::optional<std::string> Lexicon::first_match(std::string_view text, std::string_view concept_label) const {
  const auto it = entries_.find(normalize_label(concept_label));
  if (it == entries_.end()) {
    throw JudgeError(JudgeError::Kind::kConfig, "concept '" + std::string(concept_label) + "' is not in the lexicon");
  }
  const auto tokens = tokenize(text);
  const auto& entry = it->second;
  for (std::size_t k = 0; k < entry.keywords.size(); ++k) {
    const auto& phrase = entry.keywords[k];
    for (std::size_t start = 0; start + phrase.size() <= tokens.size(); ++start) {
      bool hit = true;
      for (std::size_t j = 0; j < phrase.size() && hit; ++j) hit = token_matches(tokens[start + j], phrase[j]);
      if (hit) return entry.raw[k];
    }
  }
  return std::nullopt;
}

Lexicon Lexicon::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("lexicon must be a JSON object of concept -> keyword list");
  Lexicon lex;
  for (const auto& [concept_label, words] : doc.items()) {
    try {
      lex.add(concept_label, words.get<std::vector<std::string>>());
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("lexicon concept '" + concept_label + "' must map to a list of strings");
    }
  }
  return lex;
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon '" + path.string() + "'");
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

nlohmann::json Lexicon::to_json() const {
  nlohmann::json doc = nlohmann::json::object();
  for (const auto& [_, e] : entries_) doc[e.display] = e.raw;
  return doc;
}

}  // namespace headlens
