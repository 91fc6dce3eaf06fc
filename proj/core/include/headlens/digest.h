#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace headlens {

// 64-bit FNV-1a. Stable across platforms, used for cache keys and artifact
// digests; not a cryptographic hash.
std::uint64_t fnv1a64(std::string_view bytes);

// 16 lowercase hex digits of fnv1a64(bytes).
std::string hex_digest(std::string_view bytes);

}  // namespace headlens
