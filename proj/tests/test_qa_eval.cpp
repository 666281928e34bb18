#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "canontab/errors.hpp"
#include "canontab/qa_eval.hpp"

using namespace canontab;
using json = nlohmann::json;

namespace {

bool near(double a, double b) { return std::abs(a - b) < 1e-9; }

}  // namespace

// ---------------------------------------------------------------------------
// Answer formatting

TEST_CASE("format_answer canonical rewrites") {
    SUBCASE("dates to ISO") {
        CHECK(format_answer("Jan 5, 2018") == "2018-01-05");
        CHECK(format_answer("JAN 5, 2018") == "2018-01-05");
        CHECK(format_answer("11th October 2020") == "2020-10-11");
        CHECK(format_answer("2018-01-05") == "2018-01-05");
        // Slash dates are orientation-ambiguous without column context.
        CHECK(format_answer("05/01/2018") == "05/01/2018");
        // Only whole-string dates are rewritten.
        CHECK(format_answer("born Jan 5, 2018 maybe") == "born jan 5, 2018 maybe");
    }

    SUBCASE("uppercase roman numeral tokens") {
        CHECK(format_answer("III") == "3");
        CHECK(format_answer("Chapter III") == "chapter 3");
        CHECK(format_answer("I") == "1");
        CHECK(format_answer("XX") == "20");
        CHECK(format_answer("XXI") == "xxi");    // beyond the table
        CHECK(format_answer("iii") == "iii");    // lowercase is untouched
        CHECK(format_answer("III.") == "iii.");  // punctuation breaks the token
    }

    SUBCASE("digit-grouping commas") {
        CHECK(format_answer("240,928") == "240928");
        CHECK(format_answer("1,234.56") == "1234.56");
        CHECK(format_answer("+1,000") == "+1000");
        CHECK(format_answer("-12,345,678") == "-12345678");
        CHECK(format_answer("12,34") == "12,34");      // malformed group kept
        CHECK(format_answer("1,2345") == "1,2345");    // oversized group kept
        CHECK(format_answer("1,234.") == "1,234.");    // bare decimal point kept
        CHECK(format_answer("totals: 1,234 and 5,678") == "totals: 1234 and 5678");
    }

    SUBCASE("separator characters are stripped") {
        CHECK(format_answer("a;b|c@d") == "abcd");
        CHECK(format_answer("x @ y") == "x y");
    }

    SUBCASE("whitespace collapse") {
        CHECK(format_answer("  a\t b c  ") == "a b c");
        CHECK(format_answer("  ") == "");
        CHECK(format_answer("") == "");
    }

    SUBCASE("accent composition") {
        // "Cafe" + combining acute -> precomposed e-acute, lowercased.
        CHECK(format_answer("Cafe\xCC\x81") == "caf\xC3\xA9");
        // Already-precomposed input is a fixed point.
        CHECK(format_answer("caf\xC3\xA9") == "caf\xC3\xA9");
        // A mark with no ASCII base passes through.
        CHECK(format_answer("\xCC\x81x") == "\xCC\x81x");
    }

    SUBCASE("plain text just lowercases") {
        CHECK(format_answer("Alpha Beta") == "alpha beta");
        CHECK(format_answer("alpha") == "alpha");
    }
}

TEST_CASE("format_answer is idempotent over fuzzed inputs") {
    const std::vector<std::string> fragments = {
        "alpha", "Beta",  "III",   "IV",          "xx",          "1,234",   "12,34",
        "1,234.56",       "+1,000", "-2,345.9",   "Jan 5, 2018", "JAN 5, 2018",
        "2020-01-02",     "11th October 2020",    "05/01/2018",  "32 Jan 2020",
        "Dec 31, 1999",   "@",      ";",           "|",           ",",       ".",
        " ",  "  ", "\t", " ", " ",      "e\xCC\x81",   "u\xCC\x88" "ber",
        "A\xCC\x8A",      "c\xCC\xA7", "na\xC3\xAFve", "I", "XX", "XXI", "MDCCC",
        "100", "0", "",   "\xFF\xFE",  "x y z",    "SELECT",      "QUARTER II",
    };
    std::mt19937 rng(20260817);
    std::uniform_int_distribution<std::size_t> pick(0, fragments.size() - 1);
    std::uniform_int_distribution<int> count(0, 8);

    std::size_t bad = 0;
    std::string first_bad;
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        const int parts = count(rng);
        for (int k = 0; k < parts; ++k) s += fragments[pick(rng)];
        const std::string once = format_answer(s);
        if (format_answer(once) != once) {
            if (bad == 0) first_bad = s;
            ++bad;
        }
    }
    CAPTURE(first_bad);
    CHECK(bad == 0);
}

// ---------------------------------------------------------------------------
// QA response parsing

TEST_CASE("parse_qa_response extracts all blocks") {
    const std::string reply =
        "<reasoning>\nThe table lists cities by population.\n</reasoning>\n"
        "<answer>Tokyo</answer>\n"
        "<sql_plan>\n"
        "SELECT: city\n"
        "FROM: cities\n"
        "WHERE: population > 1000000\n"
        "ORDER BY: population DESC\n"
        "AGGREGATION: none\n"
        "</sql_plan>\n";
    const QAResponse r = parse_qa_response(reply);
    CHECK(r.answer == "Tokyo");
    CHECK(r.reasoning == "The table lists cities by population.");
    CHECK(r.warnings.empty());
    REQUIRE(r.sql_plan.has_value());
    CHECK(r.sql_plan->select == "city");
    CHECK(r.sql_plan->from == "cities");
    REQUIRE(r.sql_plan->where.has_value());
    CHECK(*r.sql_plan->where == "population > 1000000");
    REQUIRE(r.sql_plan->order_by.has_value());
    CHECK(*r.sql_plan->order_by == "population DESC");
    REQUIRE(r.sql_plan->aggregation.has_value());
    CHECK(*r.sql_plan->aggregation == "none");

    const json j = r.to_json();
    CHECK(j["answer"] == "Tokyo");
    CHECK(j["sql_plan"]["from"] == "cities");

    SUBCASE("tags match case-insensitively") {
        const QAResponse upper = parse_qa_response("<ANSWER> 42 </Answer>");
        CHECK(upper.answer == "42");
    }

    SUBCASE("answer-only replies leave the rest empty") {
        const QAResponse bare = parse_qa_response("noise <answer>x</answer> noise");
        CHECK(bare.answer == "x");
        CHECK(bare.reasoning.empty());
        CHECK_FALSE(bare.sql_plan.has_value());
        CHECK(bare.to_json().contains("sql_plan") == false);
    }

    SUBCASE("duplicated tags keep the first block and warn") {
        const QAResponse dup =
            parse_qa_response("<answer>first</answer> <answer>second</answer>");
        CHECK(dup.answer == "first");
        REQUIRE(dup.warnings.size() == 1);
        CHECK(dup.warnings[0].find("multiple <answer>") != std::string::npos);
    }

    SUBCASE("missing answer throws") {
        CHECK_THROWS_AS(parse_qa_response("<reasoning>only</reasoning>"), ValidationError);
        CHECK_THROWS_AS(parse_qa_response("<answer>unclosed"), ValidationError);
        CHECK_THROWS_AS(parse_qa_response(""), ValidationError);
    }

    SUBCASE("sql labels are case-insensitive, first occurrence wins") {
        const QAResponse r2 = parse_qa_response(
            "<answer>1</answer><sql_plan>\n"
            "select: a\n"
            "SELECT: b\n"
            "from: t\n"
            "</sql_plan>");
        REQUIRE(r2.sql_plan.has_value());
        CHECK(r2.sql_plan->select == "a");
        CHECK(r2.sql_plan->from == "t");
        CHECK_FALSE(r2.sql_plan->where.has_value());
        CHECK_FALSE(r2.sql_plan->order_by.has_value());
        CHECK_FALSE(r2.sql_plan->aggregation.has_value());
    }
}

// ---------------------------------------------------------------------------
// F1

TEST_CASE("compute_f1 token-multiset scores") {
    SUBCASE("pinned fixtures") {
        const EvalRecord a = compute_f1(json("a b"), json("b c"));
        CHECK(near(a.precision, 0.5));
        CHECK(near(a.recall, 0.5));
        CHECK(near(a.f1, 0.5));

        const EvalRecord b = compute_f1(json("a a b"), json("a b b"));
        CHECK(near(b.precision, 2.0 / 3.0));
        CHECK(near(b.recall, 2.0 / 3.0));
        CHECK(near(b.f1, 2.0 / 3.0));

        const EvalRecord c = compute_f1(json("x y z"), json("z y"));
        CHECK(near(c.precision, 2.0 / 3.0));
        CHECK(near(c.recall, 1.0));
        CHECK(near(c.f1, 0.8));
    }

    SUBCASE("f1 is 1 exactly for equal multisets") {
        CHECK(near(compute_f1(json("b a"), json("a b")).f1, 1.0));
        CHECK(compute_f1(json("a a b"), json("a b")).f1 < 1.0);
    }

    SUBCASE("empty conventions") {
        const EvalRecord both = compute_f1(json(""), json(""));
        CHECK(near(both.precision, 1.0));
        CHECK(near(both.recall, 1.0));
        CHECK(near(both.f1, 1.0));

        const EvalRecord one = compute_f1(json(""), json("x"));
        CHECK(near(one.precision, 0.0));
        CHECK(near(one.recall, 0.0));
        CHECK(near(one.f1, 0.0));

        CHECK(near(compute_f1(json(nullptr), json("")).f1, 1.0));
    }

    SUBCASE("answers are formatted before scoring") {
        CHECK(near(compute_f1(json(1234), json("1,234")).f1, 1.0));
        CHECK(near(compute_f1(json("Jan 5, 2018"), json("2018-01-05")).f1, 1.0));
        CHECK(near(compute_f1(json("TOKYO"), json("tokyo")).f1, 1.0));
        CHECK(near(compute_f1(json(true), json("true")).f1, 1.0));
    }

    SUBCASE("array answers join formatted elements") {
        const EvalRecord r = compute_f1(json::array({"1,000", "Two"}), json("1000 two"));
        CHECK(r.predicted_formatted == "1000 two");
        CHECK(near(r.f1, 1.0));
        // Element order does not matter for the score.
        CHECK(near(compute_f1(json::array({"b", "a"}), json::array({"a", "b"})).f1, 1.0));
    }

    SUBCASE("swap symmetry: precision and recall trade places") {
        const json left("alpha beta 1,234");
        const json right(json::array({"beta", "gamma"}));
        const EvalRecord pr = compute_f1(left, right);
        const EvalRecord rp = compute_f1(right, left);
        CHECK(near(pr.precision, rp.recall));
        CHECK(near(pr.recall, rp.precision));
        CHECK(near(pr.f1, rp.f1));
    }

    SUBCASE("exact match scores whole elements") {
        CHECK(near(compute_f1(json("Tokyo"), json("tokyo"), true).f1, 1.0));
        CHECK(near(compute_f1(json("Tokyo"), json("Kyoto"), true).f1, 0.0));
        // "new york" vs ["new", "york"]: token mode matches, exact mode does not.
        const json phrase("new york");
        const json split = json::array({"new", "york"});
        CHECK(near(compute_f1(phrase, split, false).f1, 1.0));
        CHECK(near(compute_f1(phrase, split, true).f1, 0.0));
        // Lists as multisets of whole formatted elements.
        const EvalRecord lists =
            compute_f1(json::array({"a", "b"}), json::array({"b", "c"}), true);
        CHECK(near(lists.precision, 0.5));
        CHECK(near(lists.recall, 0.5));
        CHECK(near(lists.f1, 0.5));
    }

    SUBCASE("record carries inputs and formatted forms") {
        EvalRecord r = compute_f1(json("A"), json("a"));
        r.id = "q9";
        const json j = r.to_json();
        CHECK(j["id"] == "q9");
        CHECK(j["predicted"] == "A");
        CHECK(j["predicted_formatted"] == "a");
        CHECK(j["gold_formatted"] == "a");
        CHECK(near(j["f1"].get<double>(), 1.0));
    }
}

// ---------------------------------------------------------------------------
// Agreement statistics

TEST_CASE("cohen_kappa") {
    SUBCASE("pinned fixtures") {
        CHECK(near(cohen_kappa({"1", "1", "0", "0"}, {"1", "0", "0", "0"}), 0.5));
        CHECK(near(cohen_kappa({"x", "x", "y", "y", "z", "z"},
                               {"x", "y", "y", "z", "z", "x"}),
                   0.25));
    }

    SUBCASE("perfect and degenerate agreement") {
        CHECK(near(cohen_kappa({"a", "b", "c"}, {"a", "b", "c"}), 1.0));
        // Both raters constant on the same label: p_e == 1 with p_o == 1.
        CHECK(near(cohen_kappa({"a", "a", "a"}, {"a", "a", "a"}), 1.0));
        // Disjoint constant labels: p_e == 0, p_o == 0.
        CHECK(near(cohen_kappa({"a", "a"}, {"b", "b"}), 0.0));
    }

    SUBCASE("label names do not matter") {
        const double base = cohen_kappa({"x", "x", "y", "y", "z", "z"},
                                        {"x", "y", "y", "z", "z", "x"});
        const double renamed = cohen_kappa({"Z", "Z", "X", "X", "Y", "Y"},
                                           {"Z", "X", "X", "Y", "Y", "Z"});
        CHECK(near(base, renamed));
    }

    SUBCASE("independent raters score near zero") {
        std::mt19937 rng(7);
        std::uniform_int_distribution<int> label(0, 2);
        std::vector<std::string> a, b;
        for (int i = 0; i < 100000; ++i) {
            a.push_back(std::to_string(label(rng)));
            b.push_back(std::to_string(label(rng)));
        }
        CHECK(std::abs(cohen_kappa(a, b)) < 0.02);
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(cohen_kappa({"a"}, {"a", "b"}), ValidationError);
        CHECK_THROWS_AS(cohen_kappa({}, {}), ValidationError);
    }
}

TEST_CASE("fleiss_kappa") {
    SUBCASE("pinned six-item fixture") {
        const std::vector<std::vector<std::string>> m = {
            {"a", "a", "b"}, {"a", "b", "b"}, {"b", "b", "b"},
            {"a", "a", "a"}, {"c", "a", "a"}, {"b", "c", "c"},
        };
        CHECK(near(fleiss_kappa(m), 29.0 / 101.0));
        CHECK(near(fleiss_kappa(m), 0.2871287128712871));
    }

    SUBCASE("unanimous items over several categories") {
        CHECK(near(fleiss_kappa({{"a", "a", "a"}, {"b", "b", "b"}, {"c", "c", "c"}}), 1.0));
    }

    SUBCASE("single category is trivially perfect, with a warning") {
        std::vector<std::string> warnings;
        CHECK(near(fleiss_kappa({{"a", "a"}, {"a", "a"}}, &warnings), 1.0));
        REQUIRE(warnings.size() == 1);
        CHECK(warnings[0].find("single rating category") != std::string::npos);
    }

    SUBCASE("relabeling categories changes nothing") {
        const std::vector<std::vector<std::string>> m = {
            {"a", "a", "b"}, {"a", "b", "b"}, {"b", "b", "b"},
            {"a", "a", "a"}, {"c", "a", "a"}, {"b", "c", "c"},
        };
        std::vector<std::vector<std::string>> renamed = m;
        for (auto& row : renamed) {
            for (auto& l : row) l = "type_" + l;
        }
        CHECK(near(fleiss_kappa(m), fleiss_kappa(renamed)));
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(fleiss_kappa({}), ValidationError);
        CHECK_THROWS_AS(fleiss_kappa({{"a"}}), ValidationError);
        CHECK_THROWS_WITH_AS(fleiss_kappa({{"a", "a"}, {"a"}}),
                             doctest::Contains("expected 2"), ValidationError);
    }
}

TEST_CASE("jaccard_agreement") {
    SUBCASE("pinned fixture averages 7/12") {
        const std::vector<std::set<std::string>> a = {{"a", "b"}, {"x"}, {}, {"p", "q"}};
        const std::vector<std::set<std::string>> b = {{"b", "c"}, {"x"}, {}, {"r"}};
        CHECK(near(jaccard_agreement(a, b), 7.0 / 12.0));
    }

    SUBCASE("identical lists score 1") {
        const std::vector<std::set<std::string>> a = {{"p"}, {"q", "r"}};
        CHECK(near(jaccard_agreement(a, a), 1.0));
    }

    SUBCASE("both-empty items count as full agreement") {
        CHECK(near(jaccard_agreement({{}}, {{}}), 1.0));
        CHECK(near(jaccard_agreement({{}, {"x"}}, {{}, {"y"}}), 0.5));
    }

    SUBCASE("input validation") {
        CHECK_THROWS_AS(jaccard_agreement({{"a"}}, {}), ValidationError);
        CHECK_THROWS_AS(jaccard_agreement({}, {}), ValidationError);
    }
}

// ---------------------------------------------------------------------------
// Challenge-set statistics

TEST_CASE("challenge_stats") {
    const std::vector<ChallengeQuestion> questions = {
        {"numeric", "lookup"},      {"text", "comparison"}, {"numeric", "lookup"},
        {"date", "superlative"},    {"numeric", "aggregation"}, {"text", "lookup"},
    };
    const std::vector<std::pair<std::size_t, std::size_t>> tables = {
        {3, 4}, {8, 5}, {10, 10}, {380, 76}};

    const ChallengeStats stats = challenge_stats(questions, tables);
    CHECK(stats.questions == 6);
    CHECK(stats.tables == 4);

    SUBCASE("type breakdowns in first-appearance order") {
        REQUIRE(stats.answer_types.size() == 3);
        CHECK(stats.answer_types[0].label == "numeric");
        CHECK(stats.answer_types[0].count == 3);
        CHECK(near(stats.answer_types[0].percent, 50.0));
        CHECK(stats.answer_types[1].label == "text");
        CHECK(near(stats.answer_types[1].percent, 100.0 / 3.0));
        CHECK(stats.answer_types[2].label == "date");
        CHECK(near(stats.answer_types[2].percent, 100.0 / 6.0));

        double total = 0.0;
        for (const auto& t : stats.answer_types) total += t.percent;
        CHECK(near(total, 100.0));

        REQUIRE(stats.question_types.size() == 4);
        CHECK(stats.question_types[0].label == "lookup");
        CHECK(stats.question_types[0].count == 3);
        CHECK(stats.question_types[1].label == "comparison");
        CHECK(stats.question_types[2].label == "superlative");
        CHECK(stats.question_types[3].label == "aggregation");
    }

    SUBCASE("size summaries are per-component") {
        CHECK(stats.mean == std::pair<std::int64_t, std::int64_t>{100, 23});  // floored
        CHECK(stats.median == std::pair<std::int64_t, std::int64_t>{8, 5});   // lower median
        CHECK(stats.min == std::pair<std::int64_t, std::int64_t>{3, 4});
        CHECK(stats.max == std::pair<std::int64_t, std::int64_t>{380, 76});
    }

    SUBCASE("json shape") {
        const json j = stats.to_json();
        CHECK(j["tables"] == 4);
        CHECK(j["questions"] == 6);
        CHECK(j["answer_types"][0]["label"] == "numeric");
        CHECK(j["rows_cols"]["mean"] == json::array({100, 23}));
        CHECK(j["rows_cols"]["max"] == json::array({380, 76}));
    }

    SUBCASE("no tables leaves all-zero summaries") {
        const ChallengeStats empty = challenge_stats(questions, {});
        CHECK(empty.tables == 0);
        CHECK(empty.mean == std::pair<std::int64_t, std::int64_t>{0, 0});
        CHECK(empty.max == std::pair<std::int64_t, std::int64_t>{0, 0});
    }

    SUBCASE("no questions leaves empty breakdowns") {
        const ChallengeStats empty = challenge_stats({}, tables);
        CHECK(empty.answer_types.empty());
        CHECK(empty.question_types.empty());
    }
}

// ---------------------------------------------------------------------------
// Batch evaluation

TEST_CASE("evaluate_jsonl") {
    const std::string lines =
        R"({"id":"q1","gold":"a b","predicted":"b c"})"
        "\n"
        R"({"id":"q2","gold":"z y","predicted":"x y z","question":"ignored"})"
        "\n"
        "\n"
        R"({"id":"q3","gold":"1,234","predicted":1234})"
        "\n";
    const EvalReport report = evaluate_jsonl(lines);
    REQUIRE(report.records.size() == 3);
    CHECK(report.records[0].id == "q1");
    CHECK(near(report.records[0].f1, 0.5));
    CHECK(near(report.records[1].precision, 2.0 / 3.0));
    CHECK(near(report.records[1].recall, 1.0));
    CHECK(near(report.records[2].f1, 1.0));
    CHECK(near(report.mean_precision, 13.0 / 18.0));
    CHECK(near(report.mean_recall, 5.0 / 6.0));
    CHECK(near(report.mean_f1, 23.0 / 30.0));

    SUBCASE("report json and jsonl") {
        const json j = report.to_json();
        CHECK(j["records"] == 3);
        CHECK(near(j["mean_f1"].get<double>(), 23.0 / 30.0));
        const auto out = report.records_jsonl();
        CHECK(std::count(out.begin(), out.end(), '\n') == 3);
        const json first = json::parse(out.substr(0, out.find('\n')));
        CHECK(first["id"] == "q1");
    }

    SUBCASE("identical predictions score a perfect mean") {
        const std::string same =
            R"({"id":"a","gold":"x","predicted":"x"})"
            "\n"
            R"({"id":"b","gold":["u","v"],"predicted":"u v"})"
            "\n";
        CHECK(near(evaluate_jsonl(same).mean_f1, 1.0));
    }

    SUBCASE("line numbers in parse errors") {
        CHECK_THROWS_WITH_AS(evaluate_jsonl("{\"id\":\"a\",\"gold\":1,\"predicted\":1}\nnot json\n"),
                             doctest::Contains("line 2"), ParseError);
        CHECK_THROWS_WITH_AS(evaluate_jsonl(R"({"id":"a","gold":1})"),
                             doctest::Contains("expected {id, gold, predicted}"), ParseError);
        CHECK_THROWS_WITH_AS(evaluate_jsonl(R"({"gold":1,"predicted":1})"),
                             doctest::Contains("missing 'id'"), ParseError);
    }

    SUBCASE("no records is an error") {
        CHECK_THROWS_AS(evaluate_jsonl(""), ValidationError);
        CHECK_THROWS_AS(evaluate_jsonl("\n\n"), ValidationError);
    }
}

TEST_CASE("evaluate_split") {
    const std::string preds =
        R"({"id":"q1","predicted":"b c"})"
        "\n"
        R"({"id":"q2","predicted":"x y z"})"
        "\n";
    const std::string gold =
        R"({"id":"q2","gold":"z y"})"
        "\n"
        R"({"id":"q1","gold":"a b"})"
        "\n";

    const EvalReport report = evaluate_split(preds, gold);
    REQUIRE(report.records.size() == 2);
    // Records follow prediction-file order regardless of gold order.
    CHECK(report.records[0].id == "q1");
    CHECK(near(report.records[0].f1, 0.5));
    CHECK(report.records[1].id == "q2");
    CHECK(near(report.records[1].f1, 0.8));

    SUBCASE("orphan ids on either side are listed") {
        const std::string extra_gold = gold + R"({"id":"q3","gold":"z"})" + "\n";
        CHECK_THROWS_WITH_AS(evaluate_split(preds, extra_gold), doctest::Contains("q3"),
                             ValidationError);
        const std::string extra_pred = preds + R"({"id":"q9","predicted":"z"})" + "\n";
        CHECK_THROWS_WITH_AS(evaluate_split(extra_pred, gold), doctest::Contains("q9"),
                             ValidationError);
    }

    SUBCASE("duplicate ids are rejected") {
        CHECK_THROWS_WITH_AS(evaluate_split(preds + preds, gold + gold),
                             doctest::Contains("duplicate id"), ValidationError);
    }

    SUBCASE("per-file key checks") {
        CHECK_THROWS_WITH_AS(evaluate_split(R"({"id":"a","gold":"x"})", gold),
                             doctest::Contains("missing 'predicted'"), ParseError);
        CHECK_THROWS_WITH_AS(evaluate_split(preds, R"({"id":"a","predicted":"x"})"),
                             doctest::Contains("missing 'gold'"), ParseError);
    }
}
