#include "synthetic_export.h"

#include <algorithm>
#include <cmath>
#include <map>
#include <fstream>
#include <random>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "headlens/artifact_store.h"
#include "headlens/errors.h"
#include "headlens/tensor_io.h"

namespace headlens::synthetic {
namespace {

using nlohmann::json;

struct ConceptSpans {
  std::string name;
  std::vector<std::string> keywords;
  std::vector<std::string> spans;
};

const std::vector<ConceptSpans>& concept_table() {
  static const std::vector<ConceptSpans> table = {
      {"Animals",
       {"penguin", "donkey", "leopard", "reptile", "grouse", "animal", "cat", "dog", "bird"},
       {"Image showing prairie grouse", "Image with a donkey", "Image with a penguin",
        "Image with leopard print patterns", "detailed reptile close-up"}},
      {"Colors",
       {"red", "blue", "green", "yellow", "orange", "purple", "pink", "color", "colour", "turquoise"},
       {"Vibrant red tones", "A photo with blue hues", "Lush green palette", "Image with yellow accents",
        "Soft pink and purple gradient"}},
      {"Locations",
       {"andorra", "fiji", "paris", "monument valley", "city", "beach", "mountain", "tokyo", "desert"},
       {"Photo taken in Monument Valley", "An image of Andorra", "An image of Fiji", "Street view of Paris",
        "Aerial photo of Tokyo"}},
  };
  return table;
}

// One on-concept span followed by four off-concept spans per noise head.
const std::vector<std::vector<std::string>>& noise_spans() {
  static const std::vector<std::vector<std::string>> spans = {
      {"Serene beach sunset", "A photo with the letter J", "Minimalist white backdrop", "thrilling motorsport race",
       "Inviting reading nook"},
      {"Photo of a furry animal", "A photo with the letter K", "Contemplative monochrome portrait",
       "Urban street fashion", "Nighttime illumination"},
      {"Orange glow at dusk", "A photo with the letter C", "Intricate wood carving",
       "Image with shattered glass reflections", "A smoky plume"},
  };
  return spans;
}

const std::vector<std::string>& distractor_spans() {
  static const std::vector<std::string> spans = {
      "A meadow",          "Flowing water bodies", "Playful siblings",   "A photo of food",
      "Graceful wings in motion", "colorful procession", "awe-inspiring sky", "A swirling eddy",
      "Closeup of textured synthetic fabric", "Photo taken in the Italian pizzerias"};
  return spans;
}

const std::vector<std::string>& occupation_names() {
  static const std::vector<std::string> names = {"biologist", "composer", "economist", "mathematician",
                                                 "poet",      "reporter", "architect", "pilot"};
  return names;
}

const std::vector<std::string>& prompt_templates() {
  static const std::vector<std::string> templates = {"A {}", "A photo of {}", "A picture of {}", "An image of {}"};
  return templates;
}

std::string fill(const std::string& tmpl, const std::string& word) {
  auto out = tmpl;
  out.replace(out.find("{}"), 2, word);
  return out;
}

void write(const std::filesystem::path& root, Manifest& m, const std::string& name, const MatrixF& mat) {
  std::string stem = name;
  std::replace(stem.begin(), stem.end(), '/', '_');
  const std::string file = "tensors/" + stem + ".hlns";
  write_tensor(to_tensor(mat), root / file);
  m.files[name] = file;
}

}  // namespace

std::vector<HeadId> planted_heads() { return {{2, 0}, {2, 2}, {3, 1}}; }
std::vector<HeadId> noise_heads() { return {{2, 1}, {3, 0}, {3, 2}}; }
HeadId bias_head() { return {2, 2}; }
std::vector<std::string> planted_concepts() { return {"Animals", "Colors", "Locations"}; }

FixturePaths write_planted_fixture(const std::filesystem::path& dir, const PlantedOptions& opt) {
  const int d = opt.embed_dim;
  const auto n = static_cast<Eigen::Index>(opt.images);
  const auto& concepts = concept_table();
  const std::size_t occupations = std::min(opt.occupations, occupation_names().size());
  const int needed = 15 + 15 + opt.classes + 1 + static_cast<int>(occupations) + 4;
  if (d < needed) throw ConfigError("synthetic fixture needs embed_dim >= " + std::to_string(needed));
  if (opt.images < 8 || opt.classes < 2) throw ConfigError("synthetic fixture needs >= 8 images and >= 2 classes");

  std::filesystem::create_directories(dir / "tensors");
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd g(rows, cols);
    for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);
    return g;
  };

  // Orthonormal basis; columns are handed out to the roles below.
  const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(gaussian(d, d)).householderQ();
  int next_col = 0;
  auto take = [&]() -> Eigen::VectorXd { return basis.col(next_col++); };

  std::vector<std::vector<Eigen::VectorXd>> concept_dirs(3), noise_dirs(3);
  for (auto& dirs : concept_dirs) {
    for (int j = 0; j < 5; ++j) dirs.push_back(take());
  }
  for (auto& dirs : noise_dirs) {
    for (int j = 0; j < 5; ++j) dirs.push_back(take());
  }
  std::vector<Eigen::VectorXd> class_dirs;
  for (int c = 0; c < opt.classes; ++c) class_dirs.push_back(take());
  const Eigen::VectorXd attribute_dir = take();
  std::vector<Eigen::VectorXd> occupation_dirs;
  for (std::size_t o = 0; o < occupations; ++o) occupation_dirs.push_back(take());
  std::vector<Eigen::VectorXd> template_dirs;
  for (std::size_t t = 0; t < prompt_templates().size(); ++t) template_dirs.push_back(take());

  // Candidate pool: concept spans, noise-head spans, then random distractors.
  Manifest m;
  m.model_name = "synthetic-planted";
  m.embed_dim = d;
  m.num_layers = 4;
  m.heads_per_layer = 3;
  m.window = {2, 3};
  std::vector<Eigen::VectorXd> candidate_rows;
  auto add_candidate = [&](const std::string& text, const Eigen::VectorXd& dir) {
    m.candidate_span_ids.push_back({"span" + std::to_string(candidate_rows.size()), text});
    candidate_rows.push_back(dir.normalized());
  };
  for (std::size_t c = 0; c < 3; ++c) {
    for (int j = 0; j < 5; ++j) add_candidate(concepts[c].spans[j], concept_dirs[c][j]);
  }
  for (std::size_t h = 0; h < 3; ++h) {
    for (int j = 0; j < 5; ++j) add_candidate(noise_spans()[h][j], noise_dirs[h][j]);
  }
  for (const auto& text : distractor_spans()) add_candidate(text, gaussian(d, 1).col(0));

  // Image-side decomposition.
  std::vector<int> labels(opt.images);
  std::vector<int> gender(opt.images);
  std::vector<int> race(opt.images);
  for (std::size_t i = 0; i < opt.images; ++i) {
    labels[i] = static_cast<int>(i % static_cast<std::size_t>(opt.classes));
    gender[i] = static_cast<int>(rng() % 2);
    race[i] = static_cast<int>(rng() % 3);
    m.image_ids.push_back("img" + std::to_string(i));
  }
  Eigen::MatrixXd class_signal(n, d);
  for (Eigen::Index i = 0; i < n; ++i) class_signal.row(i) = class_dirs[static_cast<std::size_t>(labels[i])].transpose();

  const std::vector<double> planted_sd = {2.0, 1.87, 1.73, 1.58, 1.41};
  const std::vector<double> noise_sd = {1.0, 1.73, 1.58, 1.41, 1.22};
  auto head_matrix = [&](const std::vector<Eigen::VectorXd>& dirs, const std::vector<double>& sd, double class_gain) {
    Eigen::MatrixXd out = class_gain * class_signal + opt.head_noise * gaussian(n, d);
    for (std::size_t j = 0; j < dirs.size(); ++j) {
      const Eigen::VectorXd z = gaussian(n, 1).col(0);
      out += sd[j] * z * dirs[j].transpose();
    }
    return out;
  };

  std::map<HeadId, Eigen::MatrixXd> heads;
  const auto planted = planted_heads();
  const auto noisy = noise_heads();
  for (std::size_t c = 0; c < planted.size(); ++c) {
    heads[planted[c]] = head_matrix(concept_dirs[c], planted_sd, opt.planted_class_signal);
  }
  for (std::size_t h = 0; h < noisy.size(); ++h) {
    heads[noisy[h]] = head_matrix(noise_dirs[h], noise_sd, opt.noise_class_signal);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sign = gender[static_cast<std::size_t>(i)] == 1 ? 1.0 : -1.0;
    heads[bias_head()].row(i) += opt.attribute_signal * sign * attribute_dir.transpose();
  }

  const Eigen::RowVectorXd offset = 0.5 * gaussian(1, d);
  Eigen::MatrixXd remainder = opt.remainder_class_signal * class_signal + opt.image_noise * gaussian(n, d);
  remainder.rowwise() += offset;

  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(n, d);
  for (auto& [head, mat] : heads) {
    const MatrixF stored = mat.cast<float>();
    write(dir, m, contribution_tensor_name(head), stored);
    total += stored.cast<double>();
  }
  const MatrixF remainder_f = remainder.cast<float>();
  write(dir, m, kRemainderTensor, remainder_f);
  total += remainder_f.cast<double>();
  write(dir, m, kTotalTensor, total.cast<float>());

  MatrixF candidates(static_cast<Eigen::Index>(candidate_rows.size()), d);
  for (std::size_t r = 0; r < candidate_rows.size(); ++r) {
    candidates.row(static_cast<Eigen::Index>(r)) = candidate_rows[r].cast<float>().transpose();
  }
  write(dir, m, kCandidatesTensor, candidates);

  // Classification prompts: one per class, labeled by class name.
  {
    PromptSet set;
    set.tensor = "class/classes";
    MatrixF protos(opt.classes, d);
    for (int c = 0; c < opt.classes; ++c) {
      const std::string name = "class" + std::to_string(c);
      set.prompts.push_back({"A photo of a " + name, name});
      protos.row(c) = class_dirs[static_cast<std::size_t>(c)].normalized().cast<float>().transpose();
    }
    for (const int y : labels) set.image_labels.push_back("class" + std::to_string(y));
    write(dir, m, set.tensor, protos);
    m.class_prompt_sets["classes"] = set;
  }
  // Occupation prompts tilted towards the attribute direction.
  {
    PromptSet set;
    set.tensor = "class/occupations";
    const auto& templates = prompt_templates();
    MatrixF prompts(static_cast<Eigen::Index>(occupations * templates.size()), d);
    Eigen::Index row = 0;
    for (std::size_t o = 0; o < occupations; ++o) {
      for (std::size_t t = 0; t < templates.size(); ++t) {
        set.prompts.push_back({fill(templates[t], occupation_names()[o]), occupation_names()[o]});
        const Eigen::VectorXd v =
            occupation_dirs[o] + opt.prompt_attribute_tilt * attribute_dir + 0.1 * template_dirs[t];
        prompts.row(row++) = v.normalized().cast<float>().transpose();
      }
    }
    write(dir, m, set.tensor, prompts);
    m.class_prompt_sets["occupations"] = set;
  }
  // Caption-style retrieval queries: a noisy copy of one image's representation.
  {
    RetrievalSet set;
    set.tensor = "retrieval/captions";
    const std::size_t q = std::min(opt.retrieval_queries, opt.images);
    MatrixF queries(static_cast<Eigen::Index>(q), d);
    for (std::size_t i = 0; i < q; ++i) {
      const auto target = static_cast<Eigen::Index>((i * 7) % opt.images);
      const Eigen::VectorXd v = total.row(target).transpose() + 3.0 * gaussian(d, 1).col(0);
      queries.row(static_cast<Eigen::Index>(i)) = v.normalized().cast<float>().transpose();
      set.queries.push_back({"caption of " + m.image_ids[static_cast<std::size_t>(target)],
                             {m.image_ids[static_cast<std::size_t>(target)]}});
    }
    write(dir, m, set.tensor, queries);
    m.retrieval_sets["captions"] = set;
  }

  AttributeTable attributes;
  static const char* kRace[] = {"groupA", "groupB", "groupC"};
  for (std::size_t i = 0; i < opt.images; ++i) {
    attributes.set(m.image_ids[i], "gender", gender[i] == 1 ? "female" : "male");
    attributes.set(m.image_ids[i], "race", kRace[race[i]]);
  }
  FixturePaths paths;
  paths.attributes = dir / "attributes.csv";
  attributes.save_csv(paths.attributes);
  m.attribute_tables = {"attributes.csv"};

  paths.manifest = dir / "manifest.json";
  save_manifest(m, paths.manifest);

  json lexicon = json::object();
  for (const auto& c : concepts) lexicon[c.name] = c.keywords;
  paths.lexicon = dir / "lexicon.json";
  std::ofstream(paths.lexicon) << lexicon.dump(2) << '\n';

  json config = {
      {"manifest", "manifest.json"},
      {"k", 5},
      {"judges", {{"mode", "lexical"}, {"lexicon", "lexicon.json"}}},
      {"labeler", {{"mode", "lexicon"}, {"lexicon", "lexicon.json"}}},
      {"prune",
       json::array({{{"name", "HighCCS"}, {"strategy", "high_ccs"}},
                    {{"name", "LowCCS"}, {"strategy", "low_ccs"}},
                    {{"name", "Random"}, {"strategy", "random"}, {"replicates", 5}}})},
      {"datasets",
       {{"classification", json::array({{{"set", "classes"}}})},
        {"retrieval", json::array({{{"set", "captions"}, {"k", json::array({1, 5, 10})}}})},
        {"bias", json::array({{{"set", "occupations"}, {"k", opt.bias_k}, {"attributes", {"gender", "race"}}}})}}},
      {"output_dir", "out"},
      {"seed", 0},
  };
  paths.config = dir / "experiment.json";
  std::ofstream(paths.config) << config.dump(2) << '\n';
  return paths;
}

FixturePaths write_tiny_fixture(const std::filesystem::path& dir, float perturbation) {
  constexpr int n = 3, d = 4;
  std::filesystem::create_directories(dir / "tensors");
  Manifest m;
  m.model_name = "tiny";
  m.embed_dim = d;
  m.num_layers = 2;
  m.heads_per_layer = 2;
  m.window = {0, 1};
  m.image_ids = {"img0", "img1", "img2"};
  const std::vector<std::string> spans = {"A red apple", "A blue car", "A quiet street", "An old photograph"};
  for (std::size_t c = 0; c < spans.size(); ++c) m.candidate_span_ids.push_back({"s" + std::to_string(c), spans[c]});

  MatrixF total = MatrixF::Zero(n, d);
  std::map<HeadId, MatrixF> heads;
  int h = 0;
  for (const auto head : m.window_heads()) {
    MatrixF c(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) c(i, j) = 0.25f * static_cast<float>((h + 1) * (i + 1) + ((j + h) % d) * (i % 2 ? -1 : 1));
    }
    total += c;
    heads[head] = c;
    ++h;
  }
  MatrixF remainder(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) remainder(i, j) = 0.5f * static_cast<float>(j - i);
  }
  total += remainder;
  heads[{0, 1}](1, 2) += perturbation;

  for (const auto& [head, c] : heads) write(dir, m, contribution_tensor_name(head), c);
  write(dir, m, kRemainderTensor, remainder);
  write(dir, m, kTotalTensor, total);
  write(dir, m, kCandidatesTensor, MatrixF::Identity(d, d));

  PromptSet toy;
  toy.tensor = "class/toy";
  toy.prompts = {{"a photo of a fruit", "fruit"}, {"a photo of a vehicle", "vehicle"}};
  toy.image_labels = {"fruit", "vehicle", "fruit"};
  write(dir, m, toy.tensor, MatrixF::Identity(2, d));
  m.class_prompt_sets["toy"] = toy;

  FixturePaths paths;
  paths.manifest = dir / "manifest.json";
  save_manifest(m, paths.manifest);
  paths.lexicon = dir / "lexicon.json";
  std::ofstream(paths.lexicon) << json{{"Colors", {"red", "blue"}}}.dump(2) << '\n';
  paths.config = dir / "experiment.json";
  const json config = {{"manifest", "manifest.json"},
                       {"k", 2},
                       {"judges", {{"mode", "lexical"}, {"lexicon", "lexicon.json"}}},
                       {"datasets", {{"classification", json::array({{{"set", "toy"}}})}}}};
  std::ofstream(paths.config) << config.dump(2) << '\n';
  return paths;
}

}  // namespace headlens::synthetic
