#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace canontab::strutil {

// Decodes one UTF-8 codepoint starting at `pos`; advances `pos` past it.
// Invalid bytes are consumed one at a time and returned as their byte value.
std::uint32_t decode_utf8(std::string_view s, std::size_t& pos);
void encode_utf8(std::uint32_t cp, std::string& out);

bool is_unicode_space(std::uint32_t cp);

// Leading/trailing Unicode whitespace removed; interior untouched.
std::string trim_unicode(std::string_view s);
// ASCII-only trim.
std::string trim_ascii(std::string_view s);

// Number of codepoints (invalid bytes count as one each).
std::size_t codepoint_count(std::string_view s);

std::string to_lower_ascii(std::string_view s);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

std::vector<std::string> split(std::string_view s, char sep);

// Full-string strict numeric parses (optional sign, no commas, no padding).
std::optional<std::int64_t> parse_integer(std::string_view s);
std::optional<double> parse_float(std::string_view s);

// Lowercase, non-alphanumerics -> '_', runs collapsed, edges trimmed,
// "c_" prefixed when the result starts with a digit, "col" when empty.
std::string sanitize_identifier(std::string_view name);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace canontab::strutil
