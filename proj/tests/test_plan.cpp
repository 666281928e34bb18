#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <nlohmann/json.hpp>

#include "canontab/errors.hpp"
#include "canontab/plan.hpp"
#include "canontab/table.hpp"

using namespace canontab;
using json = nlohmann::json;

namespace {

json make_step(const std::string& id, const std::string& op, json reads, json writes,
               json params = json::object(), json deps = json::array()) {
    return json{{"step_id", id},       {"op", op},
                {"description", ""},   {"reads", std::move(reads)},
                {"writes", std::move(writes)}, {"params", std::move(params)},
                {"fixes_issues", json::array()}, {"depends_on", std::move(deps)}};
}

json make_plan(json steps, json final_cols = json::array(), json pk = json::array()) {
    return json{{"table_id", "t"},
                {"strategy", "test"},
                {"steps", std::move(steps)},
                {"final_output", {{"primary_key", std::move(pk)}, {"columns", std::move(final_cols)}}}};
}

SchemaDescriptor raw_schema(std::initializer_list<std::string> names) {
    SchemaDescriptor s;
    for (const auto& n : names) s.columns.push_back({n, ColumnRole::Canonical, CellKind::Text});
    return s;
}

std::vector<std::string> rules_of(const PolicyReport& report) {
    std::vector<std::string> out;
    for (const auto& f : report.findings) out.push_back(f.rule);
    return out;
}

}  // namespace

TEST_CASE("plan parsing") {
    json p = make_plan(json::array({make_step("s1", "trim_whitespace", {"a"}, {"a"},
                                              {{"source", "a"}})}),
                       json::array({{{"name", "a"}, {"role", "canonical"}}}));
    TransformationPlan plan = parse_plan(p.dump());
    CHECK(plan.table_id == "t");
    REQUIRE(plan.steps.size() == 1);
    CHECK(plan.steps[0].op == "trim_whitespace");
    CHECK(plan.final_output.columns[0].name == "a");

    // round trip
    TransformationPlan again = parse_plan(serialize_plan(plan));
    CHECK(serialize_plan(again) == serialize_plan(plan));
}

TEST_CASE("plan schema violations are batched with paths") {
    json p = make_plan(json::array({make_step("s1", "select", {"a"}, json::array())}));
    p["steps"][0].erase("fixes_issues");
    p["steps"][0]["reads"] = "a";  // wrong type
    p["extra"] = 1;
    try {
        parse_plan(p.dump());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        std::string msg = e.what();
        CHECK(msg.find("steps[0].fixes_issues") != std::string::npos);
        CHECK(msg.find("steps[0].reads") != std::string::npos);
        CHECK(msg.find("extra") != std::string::npos);
    }

    CHECK_THROWS_WITH_AS(parse_plan("{nope"), doctest::Contains("not valid JSON"), ParseError);
    CHECK_THROWS_AS(parse_plan("[1,2]"), ParseError);
}

TEST_CASE("topological order follows declaration on ties") {
    json steps = json::array({
        make_step("s1", "trim_whitespace", {"a"}, {"a"}, {{"source", "a"}}),
        make_step("s2", "trim_whitespace", {"b"}, {"b"}, {{"source", "b"}}),
        make_step("s3", "combine_columns", {"a", "b"}, {"ab"},
                  {{"sources", {"a", "b"}}, {"target", "ab"}}, {"s1", "s2"}),
    });
    TransformationPlan plan = parse_plan(make_plan(steps).dump());
    auto order = topo_order(plan);
    CHECK(order == std::vector<std::string>{"s1", "s2", "s3"});

    // declared later but dependency-free: declaration order still wins within ready set
    json steps2 = json::array({
        make_step("s2", "trim_whitespace", {"b"}, {"b"}, {{"source", "b"}}),
        make_step("s1", "trim_whitespace", {"a"}, {"a"}, {{"source", "a"}}),
    });
    auto order2 = topo_order(parse_plan(make_plan(steps2).dump()));
    CHECK(order2 == std::vector<std::string>{"s2", "s1"});

    json cyc = json::array({
        make_step("s1", "trim_whitespace", {"a"}, {"a"}, {{"source", "a"}}, {"s2"}),
        make_step("s2", "trim_whitespace", {"a"}, {"a"}, {{"source", "a"}}, {"s1"}),
    });
    CHECK_THROWS_WITH_AS(topo_order(parse_plan(make_plan(cyc).dump())),
                         doctest::Contains("cycle"), ValidationError);
}

TEST_CASE("validate_plan structural rules") {
    SchemaDescriptor schema = raw_schema({"a", "b"});
    ValidateOptions opts;

    SUBCASE("empty plan, empty report") {
        PolicyReport r = validate_plan(parse_plan(make_plan(json::array()).dump()), schema, opts);
        CHECK(r.findings.empty());
        CHECK_FALSE(r.has_errors());
    }

    SUBCASE("duplicate step ids") {
        json steps = json::array({
            make_step("s1", "trim_whitespace", {"a"}, {"a"}, {{"source", "a"}}),
            make_step("s1", "trim_whitespace", {"b"}, {"b"}, {{"source", "b"}}),
        });
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        auto rules = rules_of(r);
        CHECK(std::count(rules.begin(), rules.end(), "STRUCT_DUP_STEP_ID") == 1);
        CHECK(r.has_errors());
    }

    SUBCASE("unknown op") {
        json steps = json::array({make_step("s1", "explode_json", {"a"}, {"x"})});
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        CHECK(rules_of(r) == std::vector<std::string>{"STRUCT_UNKNOWN_OP"});
    }

    SUBCASE("unknown read") {
        json steps = json::array({make_step("s1", "trim_whitespace", {"zz"}, {"zz"},
                                            {{"source", "zz"}})});
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        auto rules = rules_of(r);
        CHECK(std::find(rules.begin(), rules.end(), "STRUCT_UNKNOWN_READ") != rules.end());
    }

    SUBCASE("forward and unknown deps") {
        json steps = json::array({
            make_step("s1", "trim_whitespace", {"a"}, {"a"}, {{"source", "a"}}, {"s2"}),
            make_step("s2", "trim_whitespace", {"b"}, {"b"}, {{"source", "b"}}, {"ghost"}),
        });
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        auto rules = rules_of(r);
        CHECK(std::find(rules.begin(), rules.end(), "STRUCT_FORWARD_DEP") != rules.end());
        CHECK(std::find(rules.begin(), rules.end(), "STRUCT_UNKNOWN_DEP") != rules.end());
    }

    SUBCASE("two independent writers of one column") {
        json steps = json::array({
            make_step("w1", "derive_math", {"a"}, {"x"}, {{"expression", "a + 1"}, {"target", "x"}}),
            make_step("w2", "derive_math", {"b"}, {"x"}, {{"expression", "b + 1"}, {"target", "x"}}),
        });
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        auto rules = rules_of(r);
        CHECK(std::find(rules.begin(), rules.end(), "STRUCT_DUP_WRITE") != rules.end());

        // but a chained rewrite (second depends on first) is fine
        json chained = json::array({
            make_step("w1", "derive_math", {"a"}, {"x"}, {{"expression", "a + 1"}, {"target", "x"}}),
            make_step("w2", "fillna_static", {"x"}, {"x"}, {{"column", "x"}, {"value", 0}}, {"w1"}),
        });
        PolicyReport r2 = validate_plan(parse_plan(make_plan(chained).dump()), schema, opts);
        auto rules2 = rules_of(r2);
        CHECK(std::find(rules2.begin(), rules2.end(), "STRUCT_DUP_WRITE") == rules2.end());
    }

    SUBCASE("final output must be produced") {
        json steps = json::array({make_step("s1", "trim_whitespace", {"a"}, {"a"},
                                            {{"source", "a"}})});
        json p = make_plan(steps, json::array({{{"name", "ghost"}, {"role", "canonical"}}}),
                           json::array({"ghost"}));
        PolicyReport r = validate_plan(parse_plan(p.dump()), schema, opts);
        auto rules = rules_of(r);
        CHECK(std::find(rules.begin(), rules.end(), "STRUCT_FINAL_UNPRODUCED") != rules.end());
        // plan-level findings carry no step id
        for (const auto& f : r.findings)
            if (f.rule == "STRUCT_FINAL_UNPRODUCED") CHECK(f.step_id.empty());
    }

    SUBCASE("bad params reported per step") {
        json steps = json::array({
            make_step("s1", "extract_regex", {"a"}, {"y"},
                      {{"source", "a"}, {"pattern", "(unclosed"}, {"targets", {{"1", "y"}}}}),
            make_step("s2", "rename", {"a", "b"}, {"x", "x"},
                      {{"mapping", {{"a", "x"}, {"b", "x"}}}}),
        });
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        auto rules = rules_of(r);
        CHECK(std::count(rules.begin(), rules.end(), "STRUCT_PARAMS") >= 2);
    }
}

TEST_CASE("validate_plan policy rules") {
    SchemaDescriptor schema = raw_schema({"a", "b"});
    ValidateOptions opts;

    SUBCASE("row-changing ops warn by default, allowed by option") {
        json steps = json::array({make_step("s1", "filter_rows", {"a"}, json::array(),
                                            {{"condition", "a > 5"}})});
        TransformationPlan plan = parse_plan(make_plan(steps).dump());
        PolicyReport r = validate_plan(plan, schema, opts);
        auto rules = rules_of(r);
        auto it = std::find(rules.begin(), rules.end(), "POLICY_ROW_CHANGE");
        REQUIRE(it != rules.end());
        CHECK(r.findings[it - rules.begin()].severity == Severity::Warning);

        ValidateOptions allow;
        allow.allow_row_change = true;
        PolicyReport r2 = validate_plan(plan, schema, allow);
        auto rules2 = rules_of(r2);
        CHECK(std::find(rules2.begin(), rules2.end(), "POLICY_ROW_CHANGE") == rules2.end());
    }

    SUBCASE("explode is always an error") {
        json steps = json::array({make_step("s1", "explode_entities", {"a"}, {"a"})});
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        bool found = false;
        for (const auto& f : r.findings)
            if (f.rule == "POLICY_NO_EXPLODE") {
                found = true;
                CHECK(f.severity == Severity::Error);
            }
        CHECK(found);
    }

    SUBCASE("comma-less numeric class in patterns") {
        json steps = json::array({
            make_step("s1", "extract_regex", {"a"}, {"y"},
                      {{"source", "a"}, {"pattern", "([0-9]+) units"}, {"targets", {{"1", "y"}}}}),
            make_step("s2", "parse_number", {"b"}, {"b_num"},
                      {{"source", "b"}, {"target", "b_num"}, {"pattern", "[0-9,]+"}}),
        });
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        int hits = 0;
        for (const auto& f : r.findings)
            if (f.rule == "POLICY_COMMA_NUMERIC") {
                ++hits;
                CHECK(f.step_id == "s1");
                CHECK(f.severity == Severity::Warning);
            }
        CHECK(hits == 1);
    }

    SUBCASE("findings are ordered by step then rule") {
        json steps = json::array({
            make_step("s1", "explode_entities", {"a"}, {"a"}),
            make_step("s2", "filter_rows", {"a"}, json::array(), {{"condition", "a > 5"}}),
        });
        json p = make_plan(steps, json::array({{{"name", "ghost"}, {"role", "canonical"}}}));
        PolicyReport r = validate_plan(parse_plan(p.dump()), schema, opts);
        std::vector<std::string> rules = rules_of(r);
        // s1 findings come before s2's, plan-level (FINAL_UNPRODUCED) last
        auto pos = [&](const std::string& rule) {
            return std::find(rules.begin(), rules.end(), rule) - rules.begin();
        };
        CHECK(pos("POLICY_NO_EXPLODE") < pos("POLICY_ROW_CHANGE"));
        CHECK(pos("POLICY_ROW_CHANGE") < pos("STRUCT_FINAL_UNPRODUCED"));
    }

    SUBCASE("report serializes to json") {
        json steps = json::array({make_step("s1", "explode_entities", {"a"}, {"a"})});
        PolicyReport r = validate_plan(parse_plan(make_plan(steps).dump()), schema, opts);
        json j = r.to_json();
        REQUIRE(j["findings"].is_array());
        CHECK(j["findings"][0]["rule"] == "POLICY_NO_EXPLODE");
        CHECK(j["findings"][0]["severity"] == "error");
        CHECK(j["findings"][0]["step_id"] == "s1");
    }
}

TEST_CASE("vocabulary") {
    CHECK(operator_vocabulary().size() == 23);
    CHECK(is_vocabulary_op("parse_date_text"));
    CHECK(is_vocabulary_op("custom"));
    CHECK_FALSE(is_vocabulary_op("explode_entities"));
    CHECK(is_in_place_op("trim_whitespace"));
    CHECK_FALSE(is_in_place_op("extract_regex"));
}
