#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "canontab/cell.hpp"

namespace canontab {

// Free-text date recognition used by the date-parsing operator.
//
// Built-in patterns, tried in order: ISO (2018-01-05), "Month D, YYYY"
// (Jan 5, 2018), "D Month YYYY" including ordinal suffixes (11th October
// 2020), and slash dates (05/01/2018). Slash dates are ambiguous, so the
// operator resolves day-first vs month-first once per column: day-first only
// when some cell in the column forces it (first component > 12).
//
// Explicit format strings support %Y %m %d %b %B plus literal characters.

// Non-slash built-ins only; slash dates need the column-level decision.
std::optional<CalDate> parse_date_builtin(std::string_view text);

// Slash date with an explicit component order.
std::optional<CalDate> parse_date_slash(std::string_view text, bool day_first);

// True when the text is a slash date whose first component exceeds 12
// (forcing day-first interpretation).
bool slash_date_forces_day_first(std::string_view text);

// Explicit-format parse; the format must consume the whole (trimmed) text.
std::optional<CalDate> parse_date_format(std::string_view text, std::string_view format);

// Full recognizer: explicit formats in order, then built-ins, then slash
// dates with the supplied column-level orientation.
std::optional<CalDate> parse_date_text(std::string_view text,
                                       const std::vector<std::string>& formats,
                                       bool day_first);

}  // namespace canontab
