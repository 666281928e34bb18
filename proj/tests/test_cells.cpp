#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "canontab/cell.hpp"
#include "canontab/errors.hpp"
#include "canontab/strutil.hpp"
#include "canontab/table.hpp"

using namespace canontab;

TEST_CASE("cell kinds and canonical text") {
    CHECK(CellValue::null().is_null());
    CHECK(CellValue::null().to_text() == "");
    CHECK(CellValue::boolean(true).to_text() == "true");
    CHECK(CellValue::boolean(false).to_text() == "false");
    CHECK(CellValue::integer(-42).to_text() == "-42");
    CHECK(CellValue::floating(2.5).to_text() == "2.5");
    CHECK(CellValue::floating(0.1).to_text() == "0.1");
    CHECK(CellValue::text("  raw ").to_text() == "  raw ");
    CHECK(CellValue::date({2020, 3, 7}).to_text() == "2020-03-07");
}

TEST_CASE("non-finite floats and invalid dates collapse to null") {
    CHECK(CellValue::floating(std::numeric_limits<double>::quiet_NaN()).is_null());
    CHECK(CellValue::floating(std::numeric_limits<double>::infinity()).is_null());
    CHECK(CellValue::date({2021, 2, 29}).is_null());
    CHECK_FALSE(CellValue::date({2020, 2, 29}).is_null());
    CHECK(CellValue::date({2020, 13, 1}).is_null());
}

TEST_CASE("strict equality distinguishes integer from float") {
    CHECK(CellValue::integer(1) == CellValue::integer(1));
    CHECK_FALSE(CellValue::integer(1) == CellValue::floating(1.0));
    CHECK_FALSE(CellValue::text("1") == CellValue::integer(1));
    CHECK(CellValue::null() == CellValue::null());
}

TEST_CASE("sort order ranks kinds and unifies numerics") {
    auto lt = [](const CellValue& a, const CellValue& b) { return CellValue::compare(a, b) < 0; };
    CHECK(lt(CellValue::null(), CellValue::boolean(false)));
    CHECK(lt(CellValue::boolean(true), CellValue::integer(0)));
    CHECK(lt(CellValue::integer(2), CellValue::floating(2.5)));
    CHECK(CellValue::compare(CellValue::integer(2), CellValue::floating(2.0)) == 0);
    CHECK(lt(CellValue::floating(9e9), CellValue::text("a")));
    CHECK(lt(CellValue::text("z"), CellValue::date({1900, 1, 1})));
    CHECK(lt(CellValue::date({1999, 12, 31}), CellValue::date({2000, 1, 1})));
    // Huge integers compare exactly, not through double rounding.
    CHECK(lt(CellValue::integer(9007199254740993), CellValue::integer(9007199254740994)));
}

TEST_CASE("format_double round-trips") {
    for (double d : {0.0, -0.5, 1.0 / 3.0, 1e-20, 123456789.123456}) {
        CHECK(std::stod(format_double(d)) == d);
    }
    CHECK(format_double(1.0) == "1");
}

TEST_CASE("unicode trim handles NBSP and CJK space") {
    CHECK(strutil::trim_unicode("\xC2\xA0 x \xE3\x80\x80") == "x");
    CHECK(strutil::trim_unicode("  plain  ") == "plain");
    CHECK(strutil::trim_unicode("a\xC2\xA0" "b") == "a\xC2\xA0" "b");
    CHECK(strutil::trim_unicode("") == "");
    CHECK(strutil::trim_unicode(" \t\r\n") == "");
}

TEST_CASE("strict numeric parses") {
    CHECK(strutil::parse_integer("42") == 42);
    CHECK(strutil::parse_integer("-7") == -7);
    CHECK(strutil::parse_integer("+7") == 7);
    CHECK_FALSE(strutil::parse_integer("4 2").has_value());
    CHECK_FALSE(strutil::parse_integer("42a").has_value());
    CHECK_FALSE(strutil::parse_integer("4,200").has_value());
    CHECK_FALSE(strutil::parse_integer("").has_value());
    CHECK(strutil::parse_float("2.5") == 2.5);
    CHECK(strutil::parse_float("-0.125") == -0.125);
    CHECK(strutil::parse_float("1e3") == 1000.0);
    CHECK_FALSE(strutil::parse_float("2.5%").has_value());
    CHECK_FALSE(strutil::parse_float("nan").has_value());
}

TEST_CASE("identifier sanitization") {
    CHECK(strutil::sanitize_identifier("Revenue (USD)") == "revenue_usd");
    CHECK(strutil::sanitize_identifier("2024 total") == "c_2024_total");
    CHECK(strutil::sanitize_identifier("a  b") == "a_b");
    CHECK(strutil::sanitize_identifier("___") == "col");
    CHECK(strutil::sanitize_identifier("ok_name") == "ok_name");
}

TEST_CASE("table construction validates invariants") {
    std::vector<Column> cols{{"a", ColumnRole::Canonical, CellKind::Integer},
                             {"b", ColumnRole::Canonical, std::nullopt}};
    std::vector<Table::Row> rows{{CellValue::integer(1), CellValue::text("x")},
                                 {CellValue::null(), CellValue::text("y")}};
    Table t("t1", "demo", cols, rows);
    CHECK(t.row_count() == 2);
    CHECK(t.require_column("b") == 1);
    CHECK_THROWS_AS(t.require_column("zz"), ExecutionError);

    // ragged row
    CHECK_THROWS_AS(Table("t", "", cols, {{CellValue::integer(1)}}), ValidationError);
    // duplicate column name
    CHECK_THROWS_AS(Table("t", "", {{"a", ColumnRole::Canonical, {}}, {"a", ColumnRole::Canonical, {}}},
                          {}),
                    ValidationError);
    // declared kind violated by a non-null cell
    CHECK_THROWS_AS(Table("t", "", cols, {{CellValue::text("no"), CellValue::null()}}),
                    ValidationError);
    // duplicate row ids
    CHECK_THROWS_AS(Table("t", "", cols, rows, std::vector<std::int64_t>{1, 1}), ValidationError);
}

TEST_CASE("same_cells compares names, order, and payloads") {
    std::vector<Column> cols{{"a", ColumnRole::Canonical, {}}};
    Table t1("x", "", cols, {{CellValue::integer(1)}});
    Table t2("y", "other title", cols, {{CellValue::integer(1)}});
    Table t3("z", "", cols, {{CellValue::floating(1.0)}});
    CHECK(t1.same_cells(t2));  // ids/titles don't matter
    CHECK_FALSE(t1.same_cells(t3));
}
