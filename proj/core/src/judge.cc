#include "headlens/judge.h"

#include <chrono>
#include <ctime>
#include <regex>
#include <set>

#include "headlens/digest.h"
#include "headlens/errors.h"

namespace headlens {

using nlohmann::json;

namespace {

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::string render_judge_prompt(std::string_view span_text, std::string_view concept_label) {
  std::string prompt(kJudgePromptTemplate);
  replace_all(prompt, "{concept}", concept_label);
  replace_all(prompt, "{span}", span_text);
  return prompt;
}

const std::string& judge_template_hash() {
  static const std::string hash = hex_digest(kJudgePromptTemplate);
  return hash;
}

std::optional<bool> parse_judge_response(std::string_view response) {
  static const std::regex pattern(R"(\b(YES|NO)\b)", std::regex::icase);
  std::match_results<std::string_view::const_iterator> match;
  if (!std::regex_search(response.begin(), response.end(), match, pattern)) return std::nullopt;
  const auto token = normalize_label(match[1].str());
  return token == "yes";
}

json verdict_to_json(const Verdict& v) {
  return {{"judge_id", v.judge_id},
          {"span_id", v.span_id},
          {"concept", v.concept_label},
          {"aligned", v.aligned},
          {"raw_response", v.raw_response}};
}

Verdict verdict_from_json(const json& doc) {
  Verdict v;
  v.judge_id = doc.at("judge_id").get<std::string>();
  v.span_id = doc.at("span_id").get<std::string>();
  v.concept_label = doc.at("concept").get<std::string>();
  v.aligned = doc.at("aligned").get<bool>();
  v.raw_response = doc.at("raw_response").get<std::string>();
  return v;
}

json consensus_to_json(const ConsensusVerdict& c) {
  json judges = json::array();
  for (const auto& v : c.per_judge) judges.push_back(verdict_to_json(v));
  return {{"span_id", c.span_id}, {"concept", c.concept_label}, {"per_judge", judges}, {"consistent", c.consistent}};
}

ConsensusVerdict consensus_from_json(const json& doc) {
  ConsensusVerdict c;
  c.span_id = doc.at("span_id").get<std::string>();
  c.concept_label = doc.at("concept").get<std::string>();
  const auto& judges = doc.at("per_judge");
  if (judges.size() != 3) throw FormatError(FormatError::Kind::kBadManifest, "consensus verdict needs 3 judges");
  for (std::size_t i = 0; i < 3; ++i) c.per_judge[i] = verdict_from_json(judges.at(i));
  c.consistent = doc.at("consistent").get<bool>();
  return c;
}

// ---------------------------------------------------------------------------
// Lexical judge

Verdict lexical_judge(std::string_view span_text, std::string_view concept_label, const Lexicon& lexicon) {
  Verdict v;
  v.judge_id = "lexical";
  v.concept_label = std::string(concept_label);
  const auto hit = lexicon.first_match(span_text, concept_label);
  v.aligned = hit.has_value();
  v.raw_response = hit ? "YES (keyword: " + *hit + ")" : "NO";
  return v;
}

LexicalJudge::LexicalJudge(std::string id, std::shared_ptr<const Lexicon> lexicon)
    : id_(std::move(id)), lexicon_(std::move(lexicon)) {
  if (!lexicon_) throw JudgeError(JudgeError::Kind::kConfig, "lexical judge '" + id_ + "' has no lexicon");
  tag_ = hex_digest(std::string(kJudgePromptTemplate) + "\n" + lexicon_->to_json().dump());
}

Verdict LexicalJudge::judge(const std::string& span_id, const std::string& span_text, const std::string& concept_label) {
  auto v = lexical_judge(span_text, concept_label, *lexicon_);
  v.judge_id = id_;
  v.span_id = span_id;
  return v;
}

// ---------------------------------------------------------------------------
// Remote judge

Verdict remote_judge(std::string_view span_text, std::string_view concept_label, const EndpointConfig& endpoint) {
  Verdict v;
  v.judge_id = endpoint.id;
  v.concept_label = std::string(concept_label);
  v.raw_response = complete(endpoint, render_judge_prompt(span_text, concept_label));
  const auto parsed = parse_judge_response(v.raw_response);
  if (!parsed) {
    throw JudgeError(JudgeError::Kind::kUnparseable,
                     "judge '" + endpoint.id + "' gave no YES/NO answer: \"" + v.raw_response + "\"");
  }
  v.aligned = *parsed;
  return v;
}

Verdict RemoteJudge::judge(const std::string& span_id, const std::string& span_text, const std::string& concept_label) {
  auto v = remote_judge(span_text, concept_label, endpoint_);
  v.span_id = span_id;
  return v;
}

// ---------------------------------------------------------------------------
// Cache

std::string VerdictCache::key(const std::string& judge_id, const std::string& span_id,
                              const std::string& concept_label, const std::string& tag) {
  std::string k = judge_id;
  k += '\x1f';
  k += span_id;
  k += '\x1f';
  k += normalize_label(concept_label);
  k += '\x1f';
  k += tag;
  return k;
}

VerdictCache::VerdictCache(const std::filesystem::path& file) {
  if (std::filesystem::exists(file)) {
    std::ifstream in(file);
    if (!in) throw IoError("cannot read judge cache '" + file.string() + "'");
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      try {
        const auto doc = json::parse(line);
        auto v = verdict_from_json(doc);
        const auto tag = doc.at("template_hash").get<std::string>();
        entries_[key(v.judge_id, v.span_id, v.concept_label, tag)] = std::move(v);
      } catch (const json::exception&) {
        ++skipped_;
      }
    }
  }
  out_.open(file, std::ios::app);
  if (!out_) throw IoError("cannot open judge cache '" + file.string() + "' for appending");
}

std::optional<Verdict> VerdictCache::find(const std::string& judge_id, const std::string& span_id,
                                          const std::string& concept_label, const std::string& tag) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(key(judge_id, span_id, concept_label, tag));
  if (it == entries_.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void VerdictCache::put(const Verdict& verdict, const std::string& tag) {
  std::lock_guard lock(mu_);
  entries_[key(verdict.judge_id, verdict.span_id, verdict.concept_label, tag)] = verdict;
  if (out_.is_open()) {
    auto line = verdict_to_json(verdict);
    line["template_hash"] = tag;
    line["timestamp"] = utc_timestamp();
    out_ << line.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("failed appending to judge cache");
  }
}

std::size_t VerdictCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::size_t VerdictCache::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

std::size_t VerdictCache::misses() const {
  std::lock_guard lock(mu_);
  return misses_;
}

// ---------------------------------------------------------------------------

ConsensusVerdict consensus(const std::string& span_id, const std::string& span_text, const std::string& concept_label,
                           std::span<Judge* const> judges, VerdictCache* cache) {
  if (judges.size() != 3) {
    throw JudgeError(JudgeError::Kind::kConfig, "consensus needs exactly 3 judges, got " + std::to_string(judges.size()));
  }
  std::set<std::string> ids;
  for (const auto* j : judges) {
    if (j == nullptr || !ids.insert(j->id()).second) {
      throw JudgeError(JudgeError::Kind::kConfig, "consensus needs three distinct judges");
    }
  }

  ConsensusVerdict out;
  out.span_id = span_id;
  out.concept_label = concept_label;
  out.consistent = true;
  for (std::size_t i = 0; i < 3; ++i) {
    Judge& judge = *judges[i];
    std::optional<Verdict> v;
    if (cache) v = cache->find(judge.id(), span_id, concept_label, judge.cache_tag());
    if (!v) {
      v = judge.judge(span_id, span_text, concept_label);
      if (cache) cache->put(*v, judge.cache_tag());
    }
    out.consistent = out.consistent && v->aligned;
    out.per_judge[i] = std::move(*v);
  }
  return out;
}

}  // namespace headlens
