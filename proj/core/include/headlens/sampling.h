#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace headlens {

// Unbiased draw from [0, bound). Uses only the raw mt19937_64 stream (whose
// output is fixed by the standard), so results match across standard
// libraries, unlike std::uniform_int_distribution.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound);

// `count` distinct indices from [0, population), in draw order.
std::vector<std::size_t> sample_without_replacement(std::size_t population, std::size_t count,
                                                    std::uint64_t seed);

}  // namespace headlens
