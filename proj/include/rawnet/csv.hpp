#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace rawnet::csv {

/// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
/// Throws ParseError (with `line_no` in the message) on an unterminated quote.
std::vector<std::string> split_record(std::string_view line, std::size_t line_no);

/// Quotes a field only when it contains a comma, quote or line break.
std::string escape_field(std::string_view field);

/// Strips a trailing '\r' (CRLF files).
inline std::string_view chomp(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace rawnet::csv
