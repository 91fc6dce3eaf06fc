#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace headlens {

// One attention head: 0-based layer index and 0-based head index within it.
struct HeadId {
  int layer = 0;
  int head = 0;

  auto operator<=>(const HeadId&) const = default;
};

// "L8.H11"
std::string to_string(HeadId id);

// Accepts "L8.H11" (case-insensitive). Throws ConfigError otherwise.
HeadId parse_head_id(std::string_view text);

}  // namespace headlens
