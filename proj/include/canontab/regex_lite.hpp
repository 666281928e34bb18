#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace canontab::rx {

// Byte span [begin, end) into the searched text.
struct Span {
    std::size_t begin = 0;
    std::size_t end = 0;
};

struct MatchResult {
    Span whole;
    // groups[i] is capture group i+1; unset when the group did not participate.
    std::vector<std::optional<Span>> groups;
};

// Non-backtracking regular expression engine (Thompson NFA executed as a
// Pike VM). Linear time in input length, leftmost-first greedy semantics.
//
// Dialect: literals, '.', '|', '(..)' and '(?:..)', '[..]' classes with
// ranges and negation, escapes (\d \D \w \W \s \S \t \n \r plus escaped
// metacharacters), anchors '^' '$', quantifiers * + ? {m} {m,} {m,n} and
// their lazy '?' variants. Matching is byte-wise over UTF-8 text.
// Backreferences, lookaround, and named groups are rejected at compile time.
class Regex {
public:
    static Regex compile(const std::string& pattern);  // throws ParseError

    std::size_t group_count() const { return ngroups_; }
    const std::string& pattern() const { return pattern_; }

    // Leftmost-first match anywhere in the text.
    std::optional<MatchResult> search(std::string_view text) const;

    // All non-overlapping matches, left to right.
    std::vector<MatchResult> find_all(std::string_view text) const;

    // Every match replaced with the literal replacement text.
    std::string replace_all(std::string_view text, std::string_view replacement) const;

    struct Program;

private:
    Regex() = default;
    std::string pattern_;
    std::size_t ngroups_ = 0;
    std::shared_ptr<const Program> prog_;
};

// Template piece used to reconstruct a source cell from extracted groups:
// either a fixed literal or the content of capture group `group`.
struct TemplatePart {
    std::string literal;  // used when group == 0
    std::size_t group = 0;
};

// When the pattern is a plain concatenation of literal characters and capture
// groups (anchors allowed at the ends), returns the corresponding template.
// Patterns with top-level quantifiers, classes, or alternation return nullopt.
std::optional<std::vector<TemplatePart>> decompose_literal_groups(const std::string& pattern);

// True when the pattern contains a digit-covering construct ([0-9], \d, or a
// class containing the full 0-9 range) whose class does not also admit ','.
// Unparseable patterns return false.
bool has_comma_less_numeric_class(const std::string& pattern);

}  // namespace canontab::rx
