#include "headlens/artifact_store.h"

#include <fstream>

#include <gtest/gtest.h>

#include "headlens/errors.h"
#include "synthetic/synthetic_export.h"
#include "test_support.h"

namespace headlens {
namespace {

using nlohmann::json;
using testing::TempDir;

json read_json(const std::filesystem::path& p) { return json::parse(std::ifstream(p)); }

void write_json(const std::filesystem::path& p, const json& doc) { std::ofstream(p) << doc.dump(2); }

TEST(LoadBundle, ExactTinyFixture) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path());
  const auto bundle = load_bundle(paths.manifest);
  EXPECT_EQ(bundle.num_images(), 3u);
  EXPECT_EQ(bundle.embed_dim(), 4);
  EXPECT_EQ(bundle.manifest().window_heads().size(), 4u);
  EXPECT_EQ(bundle.reconstruction().images_checked, 3u);
  EXPECT_EQ(bundle.reconstruction().max_relative_residual, 0.0);
  EXPECT_EQ(bundle.candidates().rows(), 4);
  EXPECT_EQ(bundle.prompt_embeddings("toy").rows(), 2);
  EXPECT_EQ(bundle.image_index("img2"), 2u);
  EXPECT_FALSE(bundle.image_index("img9").has_value());
}

TEST(LoadBundle, PerturbedContributionNamesTheImage) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path(), 1e-2f);
  try {
    load_bundle(paths.manifest);
    FAIL() << "expected a reconstruction error";
  } catch (const ReconstructionError& e) {
    EXPECT_EQ(e.image_id(), "img1");
    EXPECT_GT(e.residual(), 1e-4);
    EXPECT_NE(std::string(e.what()).find("img1"), std::string::npos);
  }
}

TEST(LoadBundle, ToleranceIsConfigurable) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path(), 1e-2f);
  LoadOptions loose;
  loose.reconstruction_tolerance = 1e-2;
  EXPECT_EQ(load_bundle(paths.manifest, loose).reconstruction().worst_image, "img1");
}

TEST(LoadBundle, MissingTensorEntry) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path());
  auto doc = read_json(paths.manifest);
  doc["files"].erase("head/L1.H0");
  write_json(paths.manifest, doc);
  EXPECT_THROW(load_bundle(paths.manifest), InvariantError);
}

TEST(LoadBundle, MissingTensorFile) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path());
  std::filesystem::remove(dir / "tensors/remainder.hlns");
  EXPECT_THROW(load_bundle(paths.manifest), IoError);
}

TEST(LoadBundle, DimensionMismatch) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path());
  write_tensor(to_tensor(MatrixF::Zero(3, 5)), dir / "tensors/head_L0.H0.hlns");
  EXPECT_THROW(load_bundle(paths.manifest), InvariantError);
}

TEST(LoadBundle, TextEmbeddingsMustBeUnitNorm) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path());
  MatrixF cands = MatrixF::Identity(4, 4);
  cands(2, 2) = 1.01f;
  write_tensor(to_tensor(cands), dir / "tensors/candidates.hlns");
  EXPECT_THROW(load_bundle(paths.manifest), InvariantError);
}

TEST(LoadBundle, StructuralChecks) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path());
  const auto original = read_json(paths.manifest);

  auto doc = original;
  doc["window"] = {0, 2};
  write_json(paths.manifest, doc);
  EXPECT_THROW(load_bundle(paths.manifest), InvariantError);

  doc = original;
  doc["image_ids"] = {"img0", "img0", "img2"};
  write_json(paths.manifest, doc);
  EXPECT_THROW(load_bundle(paths.manifest), InvariantError);

  doc = original;
  doc["class_prompt_sets"]["toy"]["image_labels"] = {"fruit"};
  write_json(paths.manifest, doc);
  EXPECT_THROW(load_bundle(paths.manifest), InvariantError);

  doc = original;
  doc.erase("embed_dim");
  write_json(paths.manifest, doc);
  EXPECT_THROW(load_bundle(paths.manifest), FormatError);

  std::ofstream(paths.manifest) << "{ not json";
  EXPECT_THROW(load_bundle(paths.manifest), FormatError);
  EXPECT_THROW(load_bundle(dir / "absent.json"), IoError);
}

TEST(LoadBundle, SampledReconstructionCheck) {
  TempDir dir;
  const auto paths = synthetic::write_tiny_fixture(dir.path());
  LoadOptions options;
  options.reconstruction_sample = 2;
  options.sample_seed = 5;
  EXPECT_EQ(load_bundle(paths.manifest, options).reconstruction().images_checked, 2u);
}

TEST(LoadBundle, ContributionOutsideWindow) {
  TempDir dir;
  const auto bundle = load_bundle(synthetic::write_tiny_fixture(dir.path()).manifest);
  EXPECT_THROW(bundle.contribution({5, 0}), InvariantError);
  EXPECT_THROW(bundle.prompt_embeddings("nope"), ConfigError);
}

TEST(Manifest, JsonRoundTrip) {
  TempDir dir;
  const auto paths = synthetic::write_planted_fixture(dir.path());
  const auto doc = read_json(paths.manifest);
  EXPECT_EQ(manifest_to_json(manifest_from_json(doc)), doc);
}

TEST(Manifest, WindowHeadsAreOrdered) {
  Manifest m;
  m.num_layers = 12;
  m.heads_per_layer = 2;
  m.window = {11, 8};
  const std::vector<HeadId> expected = {{8, 0}, {8, 1}, {11, 0}, {11, 1}};
  EXPECT_EQ(m.window_heads(), expected);
  EXPECT_TRUE(m.in_window({11, 1}));
  EXPECT_FALSE(m.in_window({9, 0}));
  EXPECT_FALSE(m.in_window({8, 2}));
}

TEST(AttributeTable, CsvRoundTripWithQuoting) {
  TempDir dir;
  AttributeTable t;
  t.set("img0", "gender", "female");
  t.set("img,1", "race", "group \"A\"");
  t.save_csv(dir / "a.csv");
  const auto back = AttributeTable::load_csv(dir / "a.csv");
  EXPECT_EQ(back.value("img,1", "race"), "group \"A\"");
  EXPECT_EQ(back.value("img0", "gender"), "female");
  EXPECT_FALSE(back.has("img0", "race"));
  EXPECT_THROW(back.value("img0", "race"), MetricError);
  EXPECT_EQ(back.attributes(), (std::vector<std::string>{"gender", "race"}));
}

TEST(AttributeTable, RejectsBadHeader) {
  TempDir dir;
  std::ofstream(dir / "bad.csv") << "id,attr,val\nimg0,gender,male\n";
  EXPECT_THROW(AttributeTable::load_csv(dir / "bad.csv"), FormatError);
  std::ofstream(dir / "short.csv") << "image_id,attribute,value\nimg0,gender\n";
  EXPECT_THROW(AttributeTable::load_csv(dir / "short.csv"), FormatError);
}

TEST(HeadId, Parsing) {
  EXPECT_EQ(parse_head_id("L8.H11"), (HeadId{8, 11}));
  EXPECT_EQ(parse_head_id("l22.h10"), (HeadId{22, 10}));
  EXPECT_EQ(to_string(HeadId{8, 11}), "L8.H11");
  EXPECT_THROW(parse_head_id("L8H11"), ConfigError);
  EXPECT_THROW(parse_head_id("L8.H"), ConfigError);
  EXPECT_THROW(parse_head_id("L-1.H2"), ConfigError);
}

}  // namespace
}  // namespace headlens
