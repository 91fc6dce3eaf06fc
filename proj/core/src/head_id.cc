#include "headlens/head_id.h"

#include <charconv>

#include "headlens/errors.h"

namespace headlens {

std::string to_string(HeadId id) {
  return "L" + std::to_string(id.layer) + ".H" + std::to_string(id.head);
}

namespace {

bool parse_index(std::string_view text, int& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end && out >= 0;
}

}  // namespace

HeadId parse_head_id(std::string_view text) {
  const auto dot = text.find('.');
  HeadId id;
  if (text.size() < 4 || (text[0] != 'L' && text[0] != 'l') || dot == std::string_view::npos ||
      dot + 1 >= text.size() || (text[dot + 1] != 'H' && text[dot + 1] != 'h') ||
      !parse_index(text.substr(1, dot - 1), id.layer) || !parse_index(text.substr(dot + 2), id.head)) {
    throw ConfigError("invalid head id '" + std::string(text) + "' (expected L<layer>.H<head>)");
  }
  return id;
}

}  // namespace headlens
