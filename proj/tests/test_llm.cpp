#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include <nlohmann/json.hpp>

#include "canontab/errors.hpp"
#include "canontab/llm.hpp"
#include "canontab/plan.hpp"
#include "canontab/sha256.hpp"
#include "canontab/table_io.hpp"

using namespace canontab;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

Table raw_table(std::vector<std::string> names, std::vector<std::vector<std::string>> rows,
                std::string id = "t", std::string title = "") {
    std::vector<Column> cols;
    for (auto& n : names) cols.push_back({n, ColumnRole::Canonical, std::nullopt});
    std::vector<Table::Row> data;
    for (auto& r : rows) {
        Table::Row row;
        for (auto& c : r) row.push_back(CellValue::text(c));
        data.push_back(std::move(row));
    }
    return Table(std::move(id), std::move(title), std::move(cols), std::move(data));
}

json probe_item(int i, json depends_on, const std::string& reason) {
    return {{"qid", "Q" + std::to_string(i)},
            {"text", "question " + std::to_string(i)},
            {"depends_on", depends_on},
            {"requires", json::array({"cleanup"})},
            {"failure_reason", reason}};
}

std::string twelve_probes() {
    json arr = json::array();
    for (int i = 1; i <= 12; ++i) arr.push_back(probe_item(i, json::array({"col"}), "messy"));
    return arr.dump();
}

struct FakeSleeper : Sleeper {
    std::vector<double> sleeps;
    void sleep_for(double seconds) override { sleeps.push_back(seconds); }
};

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("canontab_llm_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

TEST_CASE("sha256 test vectors") {
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("The quick brown fox jumps over the lazy dog") ==
          "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
    // One block-boundary case: 64 bytes forces the two-block padding path.
    CHECK(sha256_hex(std::string(64, 'a')) ==
          "ffe054fe7ae0cb6dc65c3af9b61d5209f439851db43d0ba5997337df154668eb");
}

TEST_CASE("stage names round-trip") {
    for (Stage s : {Stage::Issue, Stage::Plan, Stage::Code, Stage::Qa}) {
        CHECK(stage_from_name(stage_name(s)) == s);
    }
    CHECK(!stage_from_name("router").has_value());
}

TEST_CASE("stage config defaults") {
    CHECK(StageConfig::defaults(Stage::Issue).max_output_tokens == 8000);
    CHECK(StageConfig::defaults(Stage::Plan).max_output_tokens == 6000);
    CHECK(StageConfig::defaults(Stage::Code).max_output_tokens == 1024);
    CHECK(StageConfig::defaults(Stage::Qa).max_output_tokens == 4096);
    const StageConfig c = StageConfig::defaults(Stage::Plan);
    CHECK(c.temperature == doctest::Approx(0.2));
    CHECK(c.retries == 10);
    CHECK(c.initial_delay_s == doctest::Approx(2.0));
}

TEST_CASE("stage config overrides") {
    const StageConfig c = StageConfig::from_json(
        Stage::Qa, json{{"max_output_tokens", 512}, {"temperature", 0.0}, {"retries", 3}});
    CHECK(c.max_output_tokens == 512);
    CHECK(c.temperature == doctest::Approx(0.0));
    CHECK(c.retries == 3);
    CHECK(c.initial_delay_s == doctest::Approx(2.0));

    CHECK_THROWS_AS(StageConfig::from_json(Stage::Qa, json{{"model", "x"}}), ValidationError);
    CHECK_THROWS_AS(StageConfig::from_json(Stage::Qa, json{{"retries", 0}}), ValidationError);
    CHECK_THROWS_AS(StageConfig::from_json(Stage::Qa, json{{"max_output_tokens", "big"}}),
                    ValidationError);
    CHECK_THROWS_AS(StageConfig::from_json(Stage::Qa, json::array()), ValidationError);
}

TEST_CASE("operator vocabulary text covers every operator") {
    const std::string text = operator_vocabulary_text();
    const auto& vocab = operator_vocabulary();
    CHECK(vocab.size() == 23);
    std::size_t bullets = 0;
    for (std::size_t at = text.find("\n- "); at != std::string::npos;
         at = text.find("\n- ", at + 1)) {
        ++bullets;
    }
    CHECK(bullets == vocab.size());
    for (const std::string& op : vocab) {
        INFO(op);
        CHECK(text.find("- " + op + ":") != std::string::npos);
    }
}

TEST_CASE("issue prompt fills every slot") {
    Table t = raw_table({"Year", "Population"}, {{"1990", "1,200"}}, "demo", "City growth");
    PromptInputs in;
    in.column_descriptions = "- Year: calendar year\n- Population: residents";
    const std::string p = build_stage_prompt(Stage::Issue, t, in);

    CHECK(p.find("\"City growth\"") != std::string::npos);
    CHECK(p.find("- Population: residents") != std::string::npos);
    CHECK(p.find("| Year | Population |") != std::string::npos);
    CHECK(p.find("{{") == std::string::npos);
    CHECK(p.find("12-20") != std::string::npos);
    CHECK(p.find("\"failure_reason\"") != std::string::npos);
}

TEST_CASE("prompts embed at most 50 rows") {
    std::vector<std::vector<std::string>> rows;
    for (int i = 0; i < 60; ++i) {
        char buf[8];
        std::snprintf(buf, sizeof buf, "r%03d", i);
        rows.push_back({buf});
    }
    Table t = raw_table({"v"}, rows, "big");
    for (Stage s : {Stage::Issue, Stage::Qa}) {
        PromptInputs in;
        in.question = "What is v?";
        const std::string p = build_stage_prompt(s, t, in);
        INFO(stage_name(s));
        CHECK(p.find("r049") != std::string::npos);
        CHECK(p.find("r050") == std::string::npos);
    }
}

TEST_CASE("plan prompt substitutes vocabulary and appends inputs") {
    Table t = raw_table({"a", "b"}, {{"1", "2"}}, "tiny", "Tiny");
    ProbeArtifact probes = parse_probe_response(twelve_probes());
    PromptInputs in;
    in.probes = &probes;
    in.column_descriptions = "- a: first\n- b: second";
    const std::string p = build_stage_prompt(Stage::Plan, t, in);

    CHECK(p.find("You are STEP_2_PLANNER") != std::string::npos);
    CHECK(p.find("{Transformation Operations List}") == std::string::npos);
    CHECK(p.find("{Examples}") == std::string::npos);
    for (const std::string& op : operator_vocabulary()) {
        INFO(op);
        CHECK(p.find("- " + op + ":") != std::string::npos);
    }
    CHECK(p.find("TABLE_TITLE:\n\"Tiny\"") != std::string::npos);
    CHECK(p.find("RAW_TABLE_MD:\n| a | b |") != std::string::npos);
    CHECK(p.find("STEP1_JSON:") != std::string::npos);
    CHECK(p.find("\"questions\"") != std::string::npos);
    CHECK(p.find("\"requires\"") != std::string::npos);

    CHECK_THROWS_AS(build_stage_prompt(Stage::Plan, t, PromptInputs{}), ValidationError);
}

TEST_CASE("code prompt mirrors the reference format") {
    Table t = raw_table({"name", "age"}, {{"Ann", "34"}, {"Bo", "7"}, {"Cy", "19"}}, "people");
    PlanStep step;
    step.step_id = "s1";
    step.op = "parse_number";
    step.description = "Parse ages.";
    step.reads = {"age"};
    step.writes = {"age_num"};
    step.params = json{{"source", "age"}};
    PromptInputs in;
    in.step = &step;
    const std::string p = build_stage_prompt(Stage::Code, t, in);

    CHECK(p.find("You are a Python Data Engineer") != std::string::npos);
    CHECK(p.find("- Current columns: ['name', 'age']") != std::string::npos);
    CHECK(p.find("- DataFrame shape: 3 rows X 2 columns") != std::string::npos);
    CHECK(p.find("**Sample Data (first 3 rows)**:") != std::string::npos);
    CHECK(p.find("**OPERATION**: parse_number") != std::string::npos);
    CHECK(p.find("**Output Columns (writes)**: ['age_num']") != std::string::npos);
    CHECK(p.find("1. ALL output columns ['age_num'] MUST be created") != std::string::npos);
    CHECK(ends_with(p, "```"));

    // The sample block previews the read columns, DataFrame-style.
    CHECK(p.find("  age") != std::string::npos);
    CHECK(p.find("0   34") != std::string::npos);  // index, gutter, right-aligned value

    Table empty = raw_table({"x"}, {}, "empty");
    const std::string q = build_stage_prompt(Stage::Code, empty, in);
    CHECK(q.find("**Sample Data") == std::string::npos);

    CHECK_THROWS_AS(build_stage_prompt(Stage::Code, t, PromptInputs{}), ValidationError);
}

TEST_CASE("qa prompt names the table and ends with the sql_plan tag") {
    Table t = raw_table({"city", "pop"}, {{"Oslo", "700000"}}, "cities", "Cities");
    PromptInputs in;
    in.question = "Which city is largest?";
    const std::string p = build_stage_prompt(Stage::Qa, t, in);

    CHECK(p.find("## TABLE: cities") != std::string::npos);
    CHECK(p.find("FROM: cities") != std::string::npos);
    CHECK(p.find("| city | pop |") != std::string::npos);
    CHECK(p.find("Which city is largest?") != std::string::npos);
    CHECK(p.find("{table_name}") == std::string::npos);
    CHECK(ends_with(p, "</sql_plan>"));

    // No explicit descriptions: one line per column is derived.
    CHECK(p.find("- city (text)") != std::string::npos);

    CHECK_THROWS_AS(build_stage_prompt(Stage::Qa, t, PromptInputs{}), ValidationError);
}

TEST_CASE("probe responses parse strictly") {
    ProbeArtifact art = parse_probe_response(twelve_probes());
    CHECK(art.probes.size() == 12);
    CHECK(art.probes[0].qid == "Q1");
    CHECK(art.probes[11].qid == "Q12");
    CHECK(art.probes[3].needs == std::vector<std::string>{"cleanup"});

    auto mutate = [&](auto fn) {
        json arr = json::parse(twelve_probes());
        fn(arr);
        return arr.dump();
    };

    CHECK_THROWS_AS(parse_probe_response("Sure! Here are the questions: " + twelve_probes()),
                    ValidationError);
    CHECK_THROWS_AS(parse_probe_response("{\"questions\": []}"), ValidationError);
    CHECK_THROWS_AS(parse_probe_response(mutate([](json& a) { a.erase(0); })),
                    ValidationError);  // 11 items
    CHECK_THROWS_AS(parse_probe_response(mutate([](json& a) {
                        for (int i = 13; i <= 21; ++i)
                            a.push_back(probe_item(i, json::array({"col"}), "messy"));
                    })),
                    ValidationError);  // 21 items
    CHECK_THROWS_AS(parse_probe_response(mutate([](json& a) { a[3]["qid"] = "Q9"; })),
                    ValidationError);  // gap
    CHECK_THROWS_AS(parse_probe_response(mutate([](json& a) { a[0]["hint"] = "x"; })),
                    ValidationError);  // extra key
    CHECK_THROWS_AS(parse_probe_response(mutate([](json& a) { a[0].erase("failure_reason"); })),
                    ValidationError);  // missing key
    CHECK_THROWS_AS(parse_probe_response(mutate([](json& a) { a[0]["depends_on"] = json::array(); })),
                    ValidationError);  // empty depends_on
    CHECK_THROWS_AS(parse_probe_response(mutate([](json& a) { a[0]["text"] = 7; })),
                    ValidationError);  // wrong type
}

TEST_CASE("issues group probes by depends_on") {
    json arr = json::array();
    const std::vector<json> deps = {
        json::array({"a"}),      json::array({"b", "a"}),  json::array({"a"}),
        json::array({"unknown"}), json::array({"a", "b"}), json::array({"b", "a"}),
    };
    for (int i = 1; i <= 12; ++i) {
        const json& d = deps[static_cast<std::size_t>(i - 1) % deps.size()];
        arr.push_back(probe_item(i, d, i % 2 ? "inconsistent units" : "embedded commas"));
    }
    ProbeArtifact art = parse_probe_response(arr.dump());

    REQUIRE(art.issues.size() == 3);
    CHECK(art.issues[0].issue_id == "I1");
    CHECK(art.issues[0].cols == std::vector<std::string>{"a"});
    CHECK(art.issues[1].issue_id == "I2");
    CHECK(art.issues[1].cols == std::vector<std::string>{"a", "b"});
    CHECK(art.issues[2].issue_id == "I3");
    CHECK(art.issues[2].cols.empty());  // ["unknown"]

    CHECK(art.issues[0].blocking_questions ==
          std::vector<std::string>{"Q1", "Q3", "Q7", "Q9"});
    CHECK(art.issues[2].blocking_questions == std::vector<std::string>{"Q4", "Q10"});
    CHECK(art.issues[0].description == "inconsistent units");
    CHECK(art.issues[1].description.find("embedded commas") != std::string::npos);
    CHECK(art.issues[1].description.find("; ") != std::string::npos);
}

TEST_CASE("probe artifact json round-trips") {
    ProbeArtifact art = parse_probe_response(twelve_probes());
    const json j = art.to_json();
    CHECK(j.contains("questions"));
    CHECK(j.contains("issues"));
    CHECK(j["questions"][0]["requires"] == json::array({"cleanup"}));

    ProbeArtifact back = ProbeArtifact::from_json(j);
    REQUIRE(back.probes.size() == art.probes.size());
    CHECK(back.probes[5].text == art.probes[5].text);
    CHECK(back.probes[5].needs == art.probes[5].needs);
    REQUIRE(back.issues.size() == art.issues.size());
    CHECK(back.issues[0].blocking_questions == art.issues[0].blocking_questions);

    // Issues omitted -> derived from the probes.
    json no_issues = j;
    no_issues.erase("issues");
    CHECK(ProbeArtifact::from_json(no_issues).issues.size() == art.issues.size());

    CHECK_THROWS_AS(ProbeArtifact::from_json(json{{"questions", "x"}}), ValidationError);
}

TEST_CASE("retry backoff doubles and gives up after the configured attempts") {
    const StageConfig cfg = StageConfig::defaults(Stage::Issue);

    SUBCASE("first-try success sleeps never") {
        ScriptedProvider p;
        p.reply("ok");
        FakeSleeper clock;
        const Completion c = run_stage_with_retry(p, "prompt", cfg, clock);
        CHECK(c.text == "ok");
        CHECK(clock.sleeps.empty());
        CHECK(p.calls() == 1);
    }

    SUBCASE("transient failures back off 2, 4, 8") {
        ScriptedProvider p;
        p.fail_transient("429");
        p.fail_transient("429");
        p.fail_transient("429");
        p.reply("ok");
        FakeSleeper clock;
        const Completion c = run_stage_with_retry(p, "prompt", cfg, clock);
        CHECK(c.text == "ok");
        CHECK(clock.sleeps == std::vector<double>{2.0, 4.0, 8.0});
        CHECK(p.calls() == 4);
    }

    SUBCASE("permanent failure aborts immediately") {
        ScriptedProvider p;
        p.fail_permanent("401 unauthorized");
        FakeSleeper clock;
        CHECK_THROWS_WITH_AS(run_stage_with_retry(p, "prompt", cfg, clock),
                             doctest::Contains("401"), ProviderError);
        CHECK(clock.sleeps.empty());
    }

    SUBCASE("ten transient failures exhaust the ten attempts") {
        ScriptedProvider p;
        for (int i = 0; i < 10; ++i) {
            ScriptedProvider::Reply r;
            r.error = "503";
            r.transient = true;
            r.input_tokens = 7;  // metered even on failure
            p.push(r);
        }
        FakeSleeper clock;
        try {
            run_stage_with_retry(p, "prompt", cfg, clock);
            FAIL("expected ProviderError");
        } catch (const ProviderError& e) {
            CHECK_FALSE(e.transient());
            CHECK(std::string(e.what()).find("giving up after 10 attempts") !=
                  std::string::npos);
            CHECK(e.input_tokens() == 70);
        }
        CHECK(p.calls() == 10);
        REQUIRE(clock.sleeps.size() == 9);
        double expected = 2.0;
        double total = 0.0;
        for (double s : clock.sleeps) {
            CHECK(s == doctest::Approx(expected));
            total += s;
            expected *= 2.0;
        }
        CHECK(total == doctest::Approx(1022.0));
    }
}

TEST_CASE("token approximation counts whitespace chunks") {
    CHECK(approximate_tokens("") == 0);
    CHECK(approximate_tokens("   \n\t") == 0);
    CHECK(approximate_tokens("hello") == 1);
    CHECK(approximate_tokens("a b\tc\nd") == 4);
    CHECK(approximate_tokens("  leading and trailing  ") == 3);
}

TEST_CASE("scripted provider meters tokens") {
    ScriptedProvider p;
    ScriptedProvider::Reply r;
    r.text = "four words right here";
    r.input_tokens = 123;
    p.push(r);
    p.reply("two words");

    const StageConfig cfg = StageConfig::defaults(Stage::Qa);
    Completion a = p.complete("some prompt text", cfg);
    CHECK(a.input_tokens == 123);
    CHECK(a.output_tokens == 4);  // approximated
    Completion b = p.complete("one two three", cfg);
    CHECK(b.input_tokens == 3);
    CHECK(b.output_tokens == 2);

    CHECK_THROWS_AS(p.complete("no replies left", cfg), ProviderError);
    CHECK(p.prompts().size() == 3);
}

TEST_CASE("offline provider fabricates valid completions") {
    Table t = raw_table({"Year", "Value"}, {{"1990", "12"}, {"1991", "13"}}, "off", "Offline");
    OfflineProvider p;
    const StageConfig cfg = StageConfig::defaults(Stage::Issue);

    const Completion issue = p.complete(build_stage_prompt(Stage::Issue, t), cfg);
    ProbeArtifact art = parse_probe_response(issue.text);
    CHECK(art.probes.size() == 12);
    CHECK(art.probes[0].depends_on == std::vector<std::string>{"Year"});

    PromptInputs in;
    in.probes = &art;
    const Completion plan_c = p.complete(build_stage_prompt(Stage::Plan, t, in), cfg);
    TransformationPlan plan = parse_plan(plan_c.text);
    CHECK(plan.steps.size() == 1);
    CHECK(plan.steps[0].op == "add_row_id");
    bool has_year = false;
    for (const auto& c : plan.final_output.columns) has_year |= c.name == "Year";
    CHECK(has_year);

    PromptInputs qa;
    qa.question = "What?";
    const Completion answer = p.complete(build_stage_prompt(Stage::Qa, t, qa), cfg);
    CHECK(answer.text.find("<answer>") != std::string::npos);
    CHECK(answer.input_tokens > 0);
}

TEST_CASE("recording and replay round-trip completions") {
    TempDir dir;
    ScriptedProvider inner;
    ScriptedProvider::Reply r;
    r.text = "recorded answer";
    r.input_tokens = 11;
    r.output_tokens = 2;
    inner.push(r);

    const StageConfig cfg = StageConfig::defaults(Stage::Qa);
    RecordingProvider rec(inner, dir.path.string());
    const Completion live = rec.complete("the prompt", cfg);
    CHECK(live.text == "recorded answer");

    const fs::path transcript = dir.path / (sha256_hex("the prompt") + ".json");
    REQUIRE(fs::exists(transcript));

    ReplayProvider replay(dir.path.string());
    const Completion back = replay.complete("the prompt", cfg);
    CHECK(back.text == live.text);
    CHECK(back.input_tokens == 11);
    CHECK(back.output_tokens == 2);

    try {
        replay.complete("a different prompt", cfg);
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK_FALSE(e.transient());
        CHECK(std::string(e.what()).find("no recorded completion") != std::string::npos);
    }
}

TEST_CASE("token ledger sums per table and stage") {
    TokenLedger ledger;
    ledger.add("t1", Stage::Issue, 100, 20);
    ledger.add("t1", Stage::Plan, 200, 50);
    ledger.add("t1", Stage::Code, 50, 10);
    CHECK(ledger.total() == 430);
    CHECK(ledger.table_total("t1") == 430);
    CHECK(ledger.table_total("nope") == 0);

    // Same (table, stage) folds into one entry.
    ledger.add("t1", Stage::Code, 1, 2);
    CHECK(ledger.entries.size() == 3);
    CHECK(ledger.total() == 433);

    ledger.add("t2", Stage::Issue, 10, 1);
    CHECK(ledger.entries.size() == 4);
    CHECK(ledger.table_total("t2") == 11);

    const std::string csv = ledger.to_csv();
    CHECK(csv.find("table_id,stage,input_tokens,output_tokens\n") == 0);
    CHECK(csv.find("t1,plan,200,50\n") != std::string::npos);
    CHECK(csv.find("t1,code,51,12\n") != std::string::npos);

    TokenLedger back = TokenLedger::from_json(ledger.to_json());
    CHECK(back.entries.size() == ledger.entries.size());
    CHECK(back.total() == ledger.total());
    CHECK(back.entries[1].stage == "plan");

    CHECK_THROWS_AS(TokenLedger::from_json(json{{"entries", json::array({json{
                        {"table_id", "t"}, {"stage", "router"}, {"input_tokens", 1},
                        {"output_tokens", 1}}})}}),
                    ValidationError);
}
