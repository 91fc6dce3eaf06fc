#include "headlens/sampling.h"

#include <limits>
#include <numeric>
#include <utility>

#include "headlens/errors.h"

namespace headlens {

std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) throw MetricError("bounded_draw: empty range");
  // Reject the top partial block so every residue is equally likely.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    std::uint64_t seed) {
  if (count > population) {
    throw MetricError("cannot sample " + std::to_string(count) + " of " + std::to_string(population));
  }
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + static_cast<std::size_t>(bounded_draw(rng, population - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace headlens
