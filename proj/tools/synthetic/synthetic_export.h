#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "headlens/head_id.h"

namespace headlens::synthetic {

// A small export with a two-layer window of three heads each. Three "planted"
// heads vary along the text directions of one lexicon concept each and carry
// most of the class signal; three "noise" heads vary along mostly off-concept
// text directions and carry a little class signal. One planted head
// (bias_head()) also encodes a binary gender attribute that occupation prompts
// are tilted towards.
struct PlantedOptions {
  std::size_t images = 240;
  int classes = 4;
  int embed_dim = 64;
  std::uint64_t seed = 7;
  double planted_class_signal = 1.0;
  double noise_class_signal = 0.3;
  double remainder_class_signal = 0.5;
  double image_noise = 1.0;
  double head_noise = 0.1;
  double attribute_signal = 2.0;
  double prompt_attribute_tilt = 0.35;
  std::size_t occupations = 6;
  std::size_t retrieval_queries = 24;
  std::size_t bias_k = 60;
};

struct FixturePaths {
  std::filesystem::path manifest;
  std::filesystem::path lexicon;
  std::filesystem::path attributes;
  std::filesystem::path config;
};

std::vector<HeadId> planted_heads();
std::vector<HeadId> noise_heads();
HeadId bias_head();
// Concept of each planted head, aligned with planted_heads().
std::vector<std::string> planted_concepts();

// 2 layers x 2 heads, N=3 images, d=4, every value a multiple of 1/4 so the
// reconstruction is exact in f32. A nonzero `perturbation` is added to one
// element of head L0.H1 for image "img1" after the total is formed. The
// returned config uses a lexicon with one concept and no datasets.
FixturePaths write_tiny_fixture(const std::filesystem::path& dir, float perturbation = 0.0f);

// Writes manifest.json, tensors/*.hlns, lexicon.json, attributes.csv and
// experiment.json into `dir` (created if needed).
FixturePaths write_planted_fixture(const std::filesystem::path& dir, const PlantedOptions& options = {});

}  // namespace headlens::synthetic
