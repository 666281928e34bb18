#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "canontab/dates.hpp"
#include "canontab/errors.hpp"
#include "canontab/exprs.hpp"
#include "canontab/table.hpp"

using namespace canontab;

static std::string iso(const std::optional<CalDate>& d) {
    return d ? d->to_iso() : std::string("<none>");
}

TEST_CASE("built-in date formats") {
    CHECK(iso(parse_date_builtin("2018-01-05")) == "2018-01-05");
    CHECK(iso(parse_date_builtin("Jan 5, 2018")) == "2018-01-05");
    CHECK(iso(parse_date_builtin("January 5 2018")) == "2018-01-05");
    CHECK(iso(parse_date_builtin("11th October 2020")) == "2020-10-11");
    CHECK(iso(parse_date_builtin("3 Sept 1999")) == "1999-09-03");
    CHECK(iso(parse_date_builtin("  2020-02-29 ")) == "2020-02-29");
    CHECK_FALSE(parse_date_builtin("2019-02-29").has_value());
    CHECK_FALSE(parse_date_builtin("not a date").has_value());
    CHECK_FALSE(parse_date_builtin("13/05/2020").has_value());
}

TEST_CASE("slash dates and disambiguation") {
    CHECK(iso(parse_date_slash("05/13/2020", false)) == "2020-05-13");
    CHECK(iso(parse_date_slash("13/05/2020", true)) == "2020-05-13");
    CHECK_FALSE(parse_date_slash("13/05/2020", false).has_value());

    CHECK(slash_date_forces_day_first("13/05/2020"));
    CHECK_FALSE(slash_date_forces_day_first("05/13/2020"));
    CHECK_FALSE(slash_date_forces_day_first("1/2/2020"));
    CHECK_FALSE(slash_date_forces_day_first("13/05/20"));  // needs 4-digit year

    // column-global decision: one >12 first component flips the whole column
    std::vector<std::string> col{"01/02/2020", "25/12/2020"};
    bool day_first = false;
    for (const auto& s : col) day_first = day_first || slash_date_forces_day_first(s);
    CHECK(day_first);
    CHECK(iso(parse_date_slash(col[0], day_first)) == "2020-02-01");
}

TEST_CASE("explicit format strings") {
    CHECK(iso(parse_date_format("2020.07.04", "%Y.%m.%d")) == "2020-07-04");
    CHECK(iso(parse_date_format("4th of July 2020", "%d of %B %Y")) == "2020-07-04");
    CHECK(iso(parse_date_format("Jul 4 20", "%b %d %Y")) == "0020-07-04");
    CHECK_FALSE(parse_date_format("2020.07.04", "%Y-%m-%d").has_value());
    CHECK_FALSE(parse_date_format("2020.07.04 extra", "%Y.%m.%d").has_value());

    CHECK(iso(parse_date_text("07|04|2020", {"%m|%d|%Y"}, false)) == "2020-07-04");
    // explicit formats run before built-ins but don't block them
    CHECK(iso(parse_date_text("2018-01-05", {"%m|%d|%Y"}, false)) == "2018-01-05");
}

namespace {
Table sample_table() {
    std::vector<Column> cols{{"name", ColumnRole::Canonical, std::nullopt},
                             {"score", ColumnRole::Canonical, std::nullopt},
                             {"when", ColumnRole::Canonical, CellKind::Date}};
    return Table("t", "", cols,
                 {{CellValue::text("alpha"), CellValue::integer(10), CellValue::date({2020, 5, 1})},
                  {CellValue::text("beta"), CellValue::text("7.5"), CellValue::date({2021, 1, 2})},
                  {CellValue::text("gamma"), CellValue::text("n/a"), CellValue::null()},
                  {CellValue::null(), CellValue::null(), CellValue::null()}});
}
}  // namespace

TEST_CASE("condition expressions") {
    Table t = sample_table();

    ConditionExpr gt = ConditionExpr::parse("score > 5");
    CHECK(gt.evaluate(t, 0));       // 10 > 5
    CHECK(gt.evaluate(t, 1));       // "7.5" parses
    CHECK_FALSE(gt.evaluate(t, 2)); // "n/a" is not numeric -> false, not an error
    CHECK_FALSE(gt.evaluate(t, 3)); // null -> false

    ConditionExpr eq = ConditionExpr::parse("name == 'beta'");
    CHECK_FALSE(eq.evaluate(t, 0));
    CHECK(eq.evaluate(t, 1));

    ConditionExpr has = ConditionExpr::parse("name contains 'am'");
    CHECK(has.evaluate(t, 2));
    CHECK_FALSE(has.evaluate(t, 0));
    CHECK_FALSE(has.evaluate(t, 3));

    ConditionExpr ne = ConditionExpr::parse("score != 10");
    CHECK_FALSE(ne.evaluate(t, 0));
    CHECK(ne.evaluate(t, 1));
    CHECK_FALSE(ne.evaluate(t, 3));  // null never satisfies

    CHECK(ConditionExpr::parse("score <= 10").evaluate(t, 0));
    CHECK(ConditionExpr::parse("name == 'has == inside'").column() == "name");

    CHECK_THROWS_AS(ConditionExpr::parse("score >"), ValidationError);
    CHECK_THROWS_AS(ConditionExpr::parse("no comparator here"), ValidationError);
    CHECK_THROWS_WITH_AS(ConditionExpr::parse("a > b"),
                         doctest::Contains("b"), ValidationError);
}

TEST_CASE("math expressions") {
    std::vector<Column> cols{{"a", ColumnRole::Canonical, std::nullopt},
                             {"b", ColumnRole::Canonical, std::nullopt},
                             {"s", ColumnRole::Canonical, std::nullopt},
                             {"d", ColumnRole::Canonical, CellKind::Date}};
    Table t("t", "", cols,
            {{CellValue::integer(7), CellValue::integer(2), CellValue::text("héllo"),
              CellValue::date({2020, 5, 1})},
             {CellValue::floating(1.5), CellValue::integer(0), CellValue::null(),
              CellValue::null()}});

    CHECK(MathExpr::parse("a + b * 2").evaluate(t, 0) == CellValue::integer(11));
    CHECK(MathExpr::parse("(a + b) * 2").evaluate(t, 0) == CellValue::integer(18));
    CHECK(MathExpr::parse("a - b").evaluate(t, 0) == CellValue::integer(5));
    CHECK(MathExpr::parse("a / b").evaluate(t, 0) == CellValue::floating(3.5));
    CHECK(MathExpr::parse("a / b").evaluate(t, 1).is_null());  // divide by zero
    CHECK(MathExpr::parse("a + 0.5").evaluate(t, 1) == CellValue::floating(2.0));
    CHECK(MathExpr::parse("a + s").evaluate(t, 1).is_null());  // null operand

    CHECK(MathExpr::parse("len(s)").evaluate(t, 0) == CellValue::integer(5));  // codepoints
    CHECK(MathExpr::parse("len(s)").evaluate(t, 1).is_null());
    CHECK(MathExpr::parse("year(d)").evaluate(t, 0) == CellValue::integer(2020));
    CHECK(MathExpr::parse("month(d)").evaluate(t, 0) == CellValue::integer(5));
    CHECK(MathExpr::parse("day(d)").evaluate(t, 0) == CellValue::integer(1));
    CHECK(MathExpr::parse("year(a)").evaluate(t, 0).is_null());  // not a date

    // integer arithmetic stays exact; overflow promotes to float
    CHECK(MathExpr::parse("a * 3000000000000000000").evaluate(t, 0).kind() == CellKind::Float);
    CHECK(MathExpr::parse("a * 1000000000000000000").evaluate(t, 0) ==
          CellValue::integer(7000000000000000000LL));

    auto refs = MathExpr::parse("a + b * len(s)").referenced_columns();
    CHECK(refs == std::vector<std::string>{"a", "b", "s"});

    CHECK_THROWS_AS(MathExpr::parse("a +"), ValidationError);
    CHECK_THROWS_AS(MathExpr::parse("nosuchfn(a)"), ValidationError);
    CHECK_THROWS_AS(MathExpr::parse(""), ValidationError);
}
