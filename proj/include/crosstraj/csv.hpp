#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace crosstraj::csv {

// Splits one CSV record. Double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split(std::string_view line);

// Quotes a field only when it needs it.
std::string escape(std::string_view field);

// Strips a trailing '\r' left by CRLF files.
inline std::string_view chomp(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

}  // namespace crosstraj::csv
