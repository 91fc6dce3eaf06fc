// Writes the planted-concept synthetic export used by the tests and the demo.
#include <iostream>

#include <CLI11.hpp>

#include "headlens/errors.h"
#include "synthetic/synthetic_export.h"

int main(int argc, char** argv) {
  CLI::App app{"Write a synthetic planted-concept export"};
  std::string dir;
  headlens::synthetic::PlantedOptions options;
  app.add_option("dir", dir, "output directory")->required();
  app.add_option("--seed", options.seed, "generator seed");
  app.add_option("--images", options.images, "number of images");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto paths = headlens::synthetic::write_planted_fixture(dir, options);
    std::cout << paths.config.string() << '\n';
  } catch (const headlens::Error& e) {
    std::cerr << e.what() << '\n';
    return 2;
  }
  return 0;
}
