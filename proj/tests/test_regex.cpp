#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>

#include "canontab/errors.hpp"
#include "canontab/regex_lite.hpp"

using namespace canontab;
using rx::Regex;

namespace {
std::string group_text(std::string_view text, const rx::MatchResult& m, std::size_t g) {
    REQUIRE(g >= 1);
    REQUIRE(g <= m.groups.size());
    REQUIRE(m.groups[g - 1].has_value());
    auto sp = *m.groups[g - 1];
    return std::string(text.substr(sp.begin, sp.end - sp.begin));
}
std::string whole_text(std::string_view text, const rx::MatchResult& m) {
    return std::string(text.substr(m.whole.begin, m.whole.end - m.whole.begin));
}
}  // namespace

TEST_CASE("literal and class search") {
    auto re = Regex::compile("[0-9,]+(\\.[0-9]+)?");
    auto m = re.search("about 240,928.5 units");
    REQUIRE(m);
    CHECK(whole_text("about 240,928.5 units", *m) == "240,928.5");
    CHECK(group_text("about 240,928.5 units", *m, 1) == ".5");

    CHECK_FALSE(Regex::compile("\\d+").search("no digits here").has_value());
}

TEST_CASE("leftmost-first semantics") {
    auto re = Regex::compile("a|ab");
    auto m = re.search("xxab");
    REQUIRE(m);
    CHECK(m->whole.begin == 2);
    CHECK(whole_text("xxab", *m) == "a");  // first alternative wins

    auto greedy = Regex::compile("a+").search("caaat");
    REQUIRE(greedy);
    CHECK(whole_text("caaat", *greedy) == "aaa");

    auto lazy = Regex::compile("a+?").search("caaat");
    REQUIRE(lazy);
    CHECK(whole_text("caaat", *lazy) == "a");
}

TEST_CASE("anchors") {
    CHECK(Regex::compile("^abc$").search("abc").has_value());
    CHECK_FALSE(Regex::compile("^abc$").search("xabc").has_value());
    CHECK_FALSE(Regex::compile("^abc$").search("abcx").has_value());
    auto m = Regex::compile("c$").search("abc");
    REQUIRE(m);
    CHECK(m->whole.begin == 2);
}

TEST_CASE("counted repetition") {
    CHECK(Regex::compile("\\d{4}").search("year 2021!").has_value());
    CHECK_FALSE(Regex::compile("^\\d{4}$").search("123").has_value());
    CHECK_FALSE(Regex::compile("^\\d{4}$").search("12345").has_value());
    auto m = Regex::compile("a{2,3}").search("aaaa");
    REQUIRE(m);
    CHECK(whole_text("aaaa", *m) == "aaa");
    CHECK(Regex::compile("x{2,}").search("axxx").has_value());
    CHECK_FALSE(Regex::compile("x{2,}").search("ax").has_value());
}

TEST_CASE("capture groups across alternation") {
    auto re = Regex::compile("(\\d{4})(?:[-–](\\d{4}))?");
    std::string s = "1994-1998";
    auto m = re.search(s);
    REQUIRE(m);
    CHECK(group_text(s, *m, 1) == "1994");
    CHECK(group_text(s, *m, 2) == "1998");

    std::string single = "2005 only";
    auto m2 = re.search(single);
    REQUIRE(m2);
    CHECK(group_text(single, *m2, 1) == "2005");
    CHECK_FALSE(m2->groups[1].has_value());
}

TEST_CASE("find_all and replace_all") {
    auto re = Regex::compile("\\d+");
    auto all = re.find_all("a1 b22 c333");
    REQUIRE(all.size() == 3);
    CHECK(whole_text("a1 b22 c333", all[2]) == "333");

    CHECK(Regex::compile(",").replace_all("1,234,567", "") == "1234567");
    CHECK(Regex::compile("\\s+").replace_all("a  b\tc", " ") == "a b c");
    // zero-width matches must not loop forever
    CHECK(Regex::compile("x*").replace_all("ab", "-") == "-a-b-");
}

TEST_CASE("pathological backtracking patterns run in linear time") {
    // A backtracking engine would take exponential time here.
    std::string input(64, 'a');
    auto re = Regex::compile("(a+)+b");
    CHECK_FALSE(re.search(input).has_value());
}

TEST_CASE("unsupported constructs are rejected") {
    CHECK_THROWS_AS(Regex::compile("(?=x)"), ParseError);
    CHECK_THROWS_AS(Regex::compile("(?<name>x)"), ParseError);
    CHECK_THROWS_AS(Regex::compile("(a)\\1"), ParseError);
    CHECK_THROWS_AS(Regex::compile("a{3,1}"), ParseError);
    CHECK_THROWS_AS(Regex::compile("*a"), ParseError);
    CHECK_THROWS_AS(Regex::compile("(a"), ParseError);
    CHECK_THROWS_AS(Regex::compile("a)"), ParseError);
}

TEST_CASE("class edge cases") {
    CHECK(Regex::compile("[]a]").search("]").has_value());   // ']' literal when first
    CHECK(Regex::compile("[-a]").search("-").has_value());   // '-' literal at edge
    CHECK(Regex::compile("[a-]").search("-").has_value());
    CHECK(Regex::compile("[^0-9]").search("q").has_value());
    CHECK_FALSE(Regex::compile("[^0-9]").search("7").has_value());
    CHECK(Regex::compile("[\\]]").search("]").has_value());
    CHECK(Regex::compile("[\\d\\s]").search(" ").has_value());
}

TEST_CASE("dot does not cross newlines") {
    auto m = Regex::compile("a.c").search("a\nc abc");
    REQUIRE(m);
    CHECK(m->whole.begin == 4);
}

TEST_CASE("literal-group decomposition") {
    auto parts = rx::decompose_literal_groups("\\((\\d{3})\\)");
    REQUIRE(parts);
    REQUIRE(parts->size() == 3);
    CHECK((*parts)[0].literal == "(");
    CHECK((*parts)[1].group == 1);
    CHECK((*parts)[2].literal == ")");

    auto anchored = rx::decompose_literal_groups("^(\\d+) kg$");
    REQUIRE(anchored);
    REQUIRE(anchored->size() == 2);
    CHECK((*anchored)[0].group == 1);
    CHECK((*anchored)[1].literal == " kg");

    CHECK_FALSE(rx::decompose_literal_groups("a+(b)").has_value());
    CHECK_FALSE(rx::decompose_literal_groups("(a)|(b)").has_value());
    CHECK_FALSE(rx::decompose_literal_groups("[ab](c)").has_value());
}

TEST_CASE("comma-less numeric class detection") {
    CHECK(rx::has_comma_less_numeric_class("[0-9]+"));
    CHECK(rx::has_comma_less_numeric_class("\\d+"));
    CHECK(rx::has_comma_less_numeric_class("x([0-9]{2})y"));
    CHECK_FALSE(rx::has_comma_less_numeric_class("[0-9,]+"));
    CHECK_FALSE(rx::has_comma_less_numeric_class("[a-z]+"));
    CHECK_FALSE(rx::has_comma_less_numeric_class("[^0-9]"));
    CHECK_FALSE(rx::has_comma_less_numeric_class("plain text"));
}
