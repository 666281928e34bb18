#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <memory>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "canontab/cache.hpp"
#include "canontab/codegen.hpp"
#include "canontab/errors.hpp"
#include "canontab/executor.hpp"
#include "canontab/llm.hpp"
#include "canontab/pipeline.hpp"
#include "canontab/plan.hpp"
#include "canontab/qa_eval.hpp"
#include "canontab/structure.hpp"
#include "canontab/strutil.hpp"
#include "canontab/table_io.hpp"

namespace {

using namespace canontab;
using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr int kExitSuccess = 0;
constexpr int kExitFailedCheck = 1;  // a verification verdict, not an error
constexpr int kExitValidation = 2;
constexpr int kExitProvider = 3;
constexpr int kExitMissingPrereq = 4;

// A pipeline prerequisite (cached artifact) is absent; maps to exit 4.
class MissingPrereq : public Error {
public:
    using Error::Error;
};

std::string slurp(const fs::path& path) {
    auto text = read_file_if_exists(path);
    if (!text) throw ValidationError("cannot read '" + path.string() + "'");
    return *text;
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(slurp(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
}

void emit(const json& j) { std::cout << j.dump(2) << "\n"; }

// ---------------------------------------------------------------------------
// Shared option groups

struct TableArgs {
    std::string input;
    std::string table_id;
    std::string title;
    std::string format = "auto";
};

void add_table_args(CLI::App* cmd, TableArgs& t, const char* input_help) {
    cmd->add_option("input", t.input, input_help)->required();
    cmd->add_option("--table-id", t.table_id, "Override the table id (default: file stem)");
    cmd->add_option("--title", t.title, "Table title used in prompts");
    cmd->add_option("--format", t.format, "Input format (default: by extension)")
        ->check(CLI::IsMember({"auto", "csv", "markdown", "json"}));
}

struct RunOptions {
    std::string provider = "mock";
    std::string transcript;
    std::string record_dir;
    fs::path cache_dir = ".canontab-cache";
    std::string config_path;
    bool allow_row_change = false;
    bool enable_codegen_fallback = false;
    std::size_t max_rows = 0;  // 0 = keep all rows
    std::string ledger_out;
    std::string descriptions_path;
    std::string examples_path;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
    cmd->add_option("--provider", o.provider, "Completion provider (default: mock)")
        ->check(CLI::IsMember({"mock", "replay", "live"}));
    cmd->add_option("--transcript", o.transcript,
                    "Recorded transcript directory (required with --provider replay)");
    cmd->add_option("--record", o.record_dir, "Record every completion into this directory");
    cmd->add_option("--cache-dir", o.cache_dir, "Artifact cache root (default: .canontab-cache)");
    cmd->add_option("--config", o.config_path,
                    "JSON file with per-stage overrides, e.g. {\"plan\": {\"retries\": 3}}");
    cmd->add_flag("--allow-row-change", o.allow_row_change,
                  "Waive the row-count-change plan lint");
    cmd->add_flag("--enable-codegen-fallback", o.enable_codegen_fallback,
                  "Execute provider-generated code for unregistered custom steps");
    cmd->add_option("--max-rows", o.max_rows, "Keep only the first N data rows of the input");
    cmd->add_option("--ledger-out", o.ledger_out, "Write the token ledger here (.csv or .json)");
    cmd->add_option("--descriptions", o.descriptions_path,
                    "Text file with column descriptions for prompts");
    cmd->add_option("--examples", o.examples_path,
                    "Text file with few-shot examples for the planner prompt");
}

// ---------------------------------------------------------------------------
// Providers and configs

struct ProviderBundle {
    std::unique_ptr<ProviderClient> base;
    std::unique_ptr<RecordingProvider> recorder;
    ProviderClient* client = nullptr;
};

ProviderBundle make_provider(const RunOptions& o) {
    ProviderBundle bundle;
    if (o.provider == "mock") {
        bundle.base = std::make_unique<OfflineProvider>();
    } else if (o.provider == "replay") {
        if (o.transcript.empty()) {
            throw ValidationError("--provider replay requires --transcript <dir>");
        }
        bundle.base = std::make_unique<ReplayProvider>(o.transcript);
    } else {
        const char* key = std::getenv("CANONTAB_API_KEY");
        if (!key || !*key) {
            throw ValidationError(
                "--provider live requires the CANONTAB_API_KEY environment variable");
        }
        const char* url = std::getenv("CANONTAB_API_URL");
        const char* model = std::getenv("CANONTAB_MODEL");
        bundle.base = std::make_unique<HttpProvider>(
            url && *url ? url : "https://api.openai.com", key,
            model && *model ? model : "gpt-4o-mini");
    }
    bundle.client = bundle.base.get();
    if (!o.record_dir.empty()) {
        bundle.recorder = std::make_unique<RecordingProvider>(*bundle.base, o.record_dir);
        bundle.client = bundle.recorder.get();
    }
    return bundle;
}

StageConfig stage_config(Stage stage, const RunOptions& o) {
    if (o.config_path.empty()) return StageConfig::defaults(stage);
    const json doc = parse_json_file(o.config_path);
    if (!doc.is_object()) throw ValidationError("config file must be a JSON object keyed by stage");
    for (const auto& [key, value] : doc.items()) {
        if (!stage_from_name(key)) {
            throw ValidationError("config file has unknown stage '" + key + "'");
        }
    }
    const std::string name = stage_name(stage);
    if (!doc.contains(name)) return StageConfig::defaults(stage);
    return StageConfig::from_json(stage, doc[name]);
}

// ---------------------------------------------------------------------------
// Table loading

Table truncate_rows(const Table& t, std::size_t keep) {
    if (keep == 0 || t.row_count() <= keep) return t;
    std::vector<Table::Row> rows(t.rows().begin(), t.rows().begin() + keep);
    std::optional<std::vector<std::int64_t>> ids;
    if (t.row_ids()) {
        ids = std::vector<std::int64_t>(t.row_ids()->begin(), t.row_ids()->begin() + keep);
    }
    return Table(t.table_id(), t.title(), t.columns(), std::move(rows), std::move(ids));
}

Table load_table(const TableArgs& a, std::size_t max_rows) {
    const std::string bytes = slurp(a.input);
    std::string format = a.format;
    if (format == "auto") {
        const std::string ext = fs::path(a.input).extension().string();
        if (ext == ".json") {
            format = "json";
        } else if (ext == ".md" || ext == ".markdown") {
            format = "markdown";
        } else if (ext == ".csv") {
            format = "csv";
        } else {
            const std::string head = strutil::trim_ascii(bytes.substr(0, 64));
            format = !head.empty() && head[0] == '{'   ? "json"
                     : !head.empty() && head[0] == '|' ? "markdown"
                                                       : "csv";
        }
    }
    Table t;
    if (format == "json") {
        t = table_from_json(parse_json_file(a.input));
        if (!a.table_id.empty() || !a.title.empty()) {
            t = Table(a.table_id.empty() ? t.table_id() : a.table_id,
                      a.title.empty() ? t.title() : a.title, t.columns(), t.rows(), t.row_ids());
        }
    } else {
        std::string id = a.table_id.empty()
                             ? strutil::sanitize_identifier(fs::path(a.input).stem().string())
                             : a.table_id;
        t = format == "markdown" ? ingest_markdown(bytes, id, a.title)
                                 : ingest_csv(bytes, std::move(id), a.title);
    }
    return truncate_rows(t, max_rows);
}

void finish_ledger(const TokenLedger& ledger, const RunOptions& o) {
    if (!o.ledger_out.empty()) {
        const bool csv = strutil::ends_with(o.ledger_out, ".csv");
        write_file_atomic(o.ledger_out, csv ? ledger.to_csv() : ledger.to_json().dump(2) + "\n");
    }
    std::cerr << "tokens: " << ledger.total() << "\n";
}

PipelineOptions make_pipeline_options(const RunOptions& o, ProviderClient& provider,
                                      TokenLedger& ledger, std::mutex& ledger_mutex,
                                      Sleeper& sleeper) {
    PipelineOptions opts;
    if (!o.descriptions_path.empty()) opts.column_descriptions = slurp(o.descriptions_path);
    if (!o.examples_path.empty()) opts.examples = slurp(o.examples_path);
    opts.issue_config = stage_config(Stage::Issue, o);
    opts.plan_config = stage_config(Stage::Plan, o);
    opts.policy.allow_row_change = o.allow_row_change;
    opts.sleeper = &sleeper;
    opts.ledger_mutex = &ledger_mutex;
    if (o.enable_codegen_fallback) {
        opts.policy.custom_fallback =
            make_codegen_fallback(provider, ledger, stage_config(Stage::Code, o), sleeper,
                                  o.cache_dir / "codegen", &ledger_mutex);
    }
    return opts;
}

json transform_summary(const Table& raw, const PipelineResult& res) {
    return {{"table_id", raw.table_id()},
            {"cache_dir", res.cache_dir.string()},
            {"rows", res.execution.table.row_count()},
            {"columns", res.execution.table.column_count()},
            {"lossless", res.audit.lossless},
            {"provider_calls", res.provider_calls},
            {"issues_cached", res.issues_cached},
            {"plan_cached", res.plan_cached},
            {"output_cached", res.output_cached}};
}

void write_audit_artifact(const RunOptions& o, const Table& raw, const LossAudit& audit) {
    ArtifactCache cache(o.cache_dir, raw.table_id(), write_csv(raw));
    cache.write_text("audit.json", audit.to_json().dump(2));
}

// ---------------------------------------------------------------------------
// Subcommands

struct IngestArgs {
    TableArgs table;
    std::size_t max_rows = 0;
    std::string out;
};

int cmd_ingest(const IngestArgs& a) {
    const Table t = load_table(a.table, a.max_rows);
    const std::string text = table_to_json(t).dump(2) + "\n";
    if (a.out.empty()) {
        std::cout << text;
    } else {
        write_file_atomic(a.out, text);
    }
    std::cerr << "ingested " << t.row_count() << " rows x " << t.column_count() << " columns\n";
    return kExitSuccess;
}

int cmd_probe(const TableArgs& table_args, const RunOptions& run) {
    const Table raw = load_table(table_args, run.max_rows);
    TokenLedger ledger;
    ArtifactCache cache(run.cache_dir, raw.table_id(), write_csv(raw));

    ProbeArtifact probes;
    bool cached = false;
    if (cache.has("provenance/issues.json")) {
        try {
            probes = ProbeArtifact::from_json(json::parse(cache.read_text("provenance/issues.json")));
        } catch (const json::exception& e) {
            throw CacheError("cached issues.json is unreadable: " + std::string(e.what()));
        }
        cached = true;
    } else {
        const ProviderBundle bundle = make_provider(run);
        const StageConfig cfg = stage_config(Stage::Issue, run);
        PromptInputs inputs;
        if (!run.descriptions_path.empty()) inputs.column_descriptions = slurp(run.descriptions_path);
        const std::string prompt = build_stage_prompt(Stage::Issue, raw, inputs);
        RealSleeper sleeper;

        const int attempts = 2;
        std::string last_error;
        bool ok = false;
        for (int attempt = 1; attempt <= attempts && !ok; ++attempt) {
            Completion c;
            try {
                c = run_stage_with_retry(*bundle.client, prompt, cfg, sleeper);
            } catch (const ProviderError& e) {
                ledger.add(raw.table_id(), Stage::Issue, e.input_tokens(), e.output_tokens());
                finish_ledger(ledger, run);
                throw;
            }
            ledger.add(raw.table_id(), Stage::Issue, c.input_tokens, c.output_tokens);
            try {
                probes = parse_probe_response(c.text);
                ok = true;
            } catch (const Error& e) {
                last_error = e.what();
            }
        }
        if (!ok) {
            finish_ledger(ledger, run);
            throw ValidationError("issue stage produced no valid completion in " +
                                  std::to_string(attempts) + " attempts; last error: " + last_error);
        }
        cache.write_text("provenance/issues.json", probes.to_json().dump(2));
    }

    emit(probes.to_json());
    std::cerr << "probes: " << (cached ? "cached" : "generated") << "\n";
    finish_ledger(ledger, run);
    return kExitSuccess;
}

int cmd_plan(const TableArgs& table_args, const RunOptions& run) {
    const Table raw = load_table(table_args, run.max_rows);
    const ProviderBundle bundle = make_provider(run);
    TokenLedger ledger;
    std::mutex ledger_mutex;
    RealSleeper sleeper;
    const PipelineOptions opts =
        make_pipeline_options(run, *bundle.client, ledger, ledger_mutex, sleeper);

    const PipelineResult res = run_pipeline(raw, *bundle.client, ledger, run.cache_dir, opts);
    emit(plan_to_json(res.plan));
    std::cerr << "plan: " << (res.plan_cached ? "cached" : "generated") << ", provider calls: "
              << res.provider_calls << "\n";
    finish_ledger(ledger, run);
    return kExitSuccess;
}

struct TransformArgs {
    TableArgs table;
    std::string plan_path;
    bool auto_mode = false;
    bool all = false;
    std::size_t workers = std::thread::hardware_concurrency();
    std::string trace_out;
};

int transform_all(const TransformArgs& a, const RunOptions& run) {
    std::vector<Table> tables;
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(a.table.input)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".csv" || ext == ".md" || ext == ".markdown" || ext == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw ValidationError("no table files (.csv, .md, .json) in '" + a.table.input + "'");
    }
    for (const auto& file : files) {
        TableArgs one;
        one.input = file.string();
        one.format = a.table.format;
        tables.push_back(load_table(one, run.max_rows));
    }

    const ProviderBundle bundle = make_provider(run);
    TokenLedger ledger;
    std::mutex ledger_mutex;
    RealSleeper sleeper;
    const PipelineOptions opts =
        make_pipeline_options(run, *bundle.client, ledger, ledger_mutex, sleeper);

    const std::size_t workers = a.workers == 0 ? 1 : a.workers;
    const std::vector<PipelineResult> results =
        run_pipeline_batch(tables, *bundle.client, ledger, run.cache_dir, opts, workers);

    json summaries = json::array();
    for (std::size_t i = 0; i < results.size(); ++i) {
        write_audit_artifact(run, tables[i], results[i].audit);
        summaries.push_back(transform_summary(tables[i], results[i]));
    }
    emit(summaries);
    finish_ledger(ledger, run);
    return kExitSuccess;
}

int cmd_transform(const TransformArgs& a, const RunOptions& run) {
    if (a.all) {
        if (!a.auto_mode) throw ValidationError("transform --all requires --auto");
        return transform_all(a, run);
    }
    const Table raw = load_table(a.table, run.max_rows);

    if (a.auto_mode) {
        const ProviderBundle bundle = make_provider(run);
        TokenLedger ledger;
        std::mutex ledger_mutex;
        RealSleeper sleeper;
        const PipelineOptions opts =
            make_pipeline_options(run, *bundle.client, ledger, ledger_mutex, sleeper);

        const PipelineResult res = run_pipeline(raw, *bundle.client, ledger, run.cache_dir, opts);
        write_audit_artifact(run, raw, res.audit);
        if (!a.trace_out.empty()) {
            ArtifactCache cache(run.cache_dir, raw.table_id(), write_csv(raw));
            write_file_atomic(a.trace_out, cache.read_text("trace.json"));
        }
        emit(transform_summary(raw, res));
        finish_ledger(ledger, run);
        return res.audit.lossless ? kExitSuccess : kExitFailedCheck;
    }

    if (a.plan_path.empty()) {
        throw ValidationError("transform needs --plan <file> or --auto");
    }
    const TransformationPlan plan = parse_plan(slurp(a.plan_path));
    const PolicyReport report =
        validate_plan(plan, SchemaDescriptor::of_table(raw), {run.allow_row_change});
    if (report.has_errors()) {
        std::cerr << report.to_json().dump(2) << "\n";
        return kExitValidation;
    }

    ExecutePolicy policy;
    policy.allow_row_change = run.allow_row_change;
    ProviderBundle bundle;
    TokenLedger ledger;
    std::mutex ledger_mutex;
    RealSleeper sleeper;
    if (run.enable_codegen_fallback) {
        bundle = make_provider(run);
        policy.custom_fallback =
            make_codegen_fallback(*bundle.client, ledger, stage_config(Stage::Code, run), sleeper,
                                  run.cache_dir / "codegen", &ledger_mutex);
    }

    const ExecutionResult exec = execute_plan(plan, raw, policy);
    const LossAudit audit = audit_losslessness(raw, exec.table, plan, exec.traces);

    ArtifactCache cache(run.cache_dir, raw.table_id(), write_csv(raw));
    cache.write_text("plan.json", plan_to_json(plan).dump(2));
    cache.write_text("canonical.csv", write_csv(exec.table));
    json traces = json::array();
    for (const StepTrace& t : exec.traces) traces.push_back(t.to_json());
    const std::string trace_text =
        json{{"traces", std::move(traces)}, {"audit", audit.to_json()}}.dump(2);
    cache.write_text("trace.json", trace_text);
    cache.write_text("audit.json", audit.to_json().dump(2));
    if (!a.trace_out.empty()) write_file_atomic(a.trace_out, trace_text);

    emit({{"table_id", raw.table_id()},
          {"cache_dir", cache.dir().string()},
          {"rows", exec.table.row_count()},
          {"columns", exec.table.column_count()},
          {"lossless", audit.lossless},
          {"snapshots_needed", audit.snapshots_needed}});
    finish_ledger(ledger, run);
    return audit.lossless ? kExitSuccess : kExitFailedCheck;
}

int cmd_verify_lossless(const TableArgs& table_args, const std::string& plan_path,
                        const RunOptions& run) {
    const Table raw = load_table(table_args, run.max_rows);

    TransformationPlan plan;
    bool from_cache = false;
    if (!plan_path.empty()) {
        plan = parse_plan(slurp(plan_path));
    } else {
        ArtifactCache cache(run.cache_dir, raw.table_id(), write_csv(raw));
        if (!cache.has("plan.json")) {
            throw MissingPrereq("no cached plan for '" + raw.table_id() +
                                "'; run `canontab transform` first or pass --plan");
        }
        plan = parse_plan(cache.read_text("plan.json"));
        from_cache = true;
    }

    ExecutePolicy policy;
    policy.allow_row_change = run.allow_row_change;
    const ExecutionResult exec = execute_plan(plan, raw, policy);
    const LossAudit audit = audit_losslessness(raw, exec.table, plan, exec.traces);

    if (from_cache) {
        ArtifactCache cache(run.cache_dir, raw.table_id(), write_csv(raw));
        if (cache.has("canonical.csv") &&
            cache.read_text("canonical.csv") != write_csv(exec.table)) {
            throw CacheError("canonical.csv for '" + raw.table_id() +
                             "' no longer matches the cached plan's output");
        }
    }

    bool recovered = false;
    if (audit.lossless) {
        recovered = recover_raw(exec.table, audit).same_cells(raw);
    }

    emit(audit.to_json());
    std::cerr << (audit.lossless ? "lossless" : "NOT lossless")
              << (audit.lossless ? (recovered ? ", raw table recovered exactly"
                                              : ", but raw recovery FAILED")
                                 : "")
              << "\n";
    return audit.lossless && recovered ? kExitSuccess : kExitFailedCheck;
}

struct ExportArgs {
    TableArgs table;
    std::string name;
    bool cached = false;
};

int cmd_export_sql(const ExportArgs& a, const RunOptions& run) {
    const Table t = load_table(a.table, run.max_rows);
    Table to_export = t;
    if (a.cached) {
        ArtifactCache cache(run.cache_dir, t.table_id(), write_csv(t));
        if (!cache.has("canonical.csv") || !cache.has("plan.json")) {
            throw MissingPrereq("no cached canonical table for '" + t.table_id() +
                                "'; run `canontab transform` first");
        }
        const TransformationPlan plan = parse_plan(cache.read_text("plan.json"));
        to_export = typed_from_csv(cache.read_text("canonical.csv"), plan.final_output,
                                   t.table_id(), t.title());
    }
    const std::string name =
        a.name.empty() ? strutil::sanitize_identifier(to_export.table_id()) : a.name;
    std::cout << export_sql(to_export, name);
    return kExitSuccess;
}

int cmd_qa(const TableArgs& table_args, const std::string& question, const RunOptions& run) {
    const Table raw = load_table(table_args, run.max_rows);
    ArtifactCache cache(run.cache_dir, raw.table_id(), write_csv(raw));
    if (!cache.has("canonical.csv") || !cache.has("plan.json")) {
        throw MissingPrereq("no cached canonical table for '" + raw.table_id() +
                            "'; run `canontab transform --auto` first");
    }
    const TransformationPlan plan = parse_plan(cache.read_text("plan.json"));
    const Table canonical = typed_from_csv(cache.read_text("canonical.csv"), plan.final_output,
                                           raw.table_id(), raw.title());

    const ProviderBundle bundle = make_provider(run);
    TokenLedger ledger;
    const StageConfig cfg = stage_config(Stage::Qa, run);
    PromptInputs inputs;
    inputs.question = question;
    if (!run.descriptions_path.empty()) inputs.column_descriptions = slurp(run.descriptions_path);
    const std::string prompt = build_stage_prompt(Stage::Qa, canonical, inputs);

    RealSleeper sleeper;
    Completion completion;
    try {
        completion = run_stage_with_retry(*bundle.client, prompt, cfg, sleeper);
    } catch (const ProviderError& e) {
        ledger.add(raw.table_id(), Stage::Qa, e.input_tokens(), e.output_tokens());
        finish_ledger(ledger, run);
        throw;
    }
    ledger.add(raw.table_id(), Stage::Qa, completion.input_tokens, completion.output_tokens);

    const QAResponse response = parse_qa_response(completion.text);
    json out = response.to_json();
    out["answer_formatted"] = format_answer(response.answer);
    emit(out);
    finish_ledger(ledger, run);
    return kExitSuccess;
}

struct EvalArgs {
    std::string predictions;
    std::string gold;
    bool exact = false;
    std::string records_out;
    std::string annotations;
};

int cmd_eval(const EvalArgs& a) {
    const EvalReport report = a.gold.empty()
                                  ? evaluate_jsonl(slurp(a.predictions), a.exact)
                                  : evaluate_split(slurp(a.predictions), slurp(a.gold), a.exact);
    json out = report.to_json();

    if (!a.annotations.empty()) {
        const json doc = parse_json_file(a.annotations);
        if (!doc.is_array()) {
            throw ParseError("annotations must be a JSON array of per-item label arrays");
        }
        std::vector<std::vector<std::string>> matrix;
        for (const auto& row : doc) {
            if (!row.is_array()) throw ParseError("annotations rows must be arrays of labels");
            std::vector<std::string> labels;
            for (const auto& v : row) {
                if (!v.is_string()) throw ParseError("annotation labels must be strings");
                labels.push_back(v.get<std::string>());
            }
            matrix.push_back(std::move(labels));
        }
        std::vector<std::string> warnings;
        json agreement{{"fleiss_kappa", fleiss_kappa(matrix, &warnings)}};
        if (!matrix.empty() && matrix[0].size() == 2) {
            std::vector<std::string> a_labels, b_labels;
            for (const auto& row : matrix) {
                a_labels.push_back(row[0]);
                b_labels.push_back(row[1]);
            }
            agreement["cohen_kappa"] = cohen_kappa(a_labels, b_labels);
        }
        if (!warnings.empty()) agreement["warnings"] = warnings;
        out["agreement"] = agreement;
    }

    if (!a.records_out.empty()) write_file_atomic(a.records_out, report.records_jsonl());
    emit(out);
    return kExitSuccess;
}

int cmd_stats(const std::string& path) {
    const json doc = parse_json_file(path);
    if (!doc.is_object() || !doc.contains("questions") || !doc.contains("tables")) {
        throw ParseError("stats input must be {\"questions\": [...], \"tables\": [...]}");
    }
    std::vector<ChallengeQuestion> questions;
    for (const auto& q : doc["questions"]) {
        if (!q.is_object() || !q.contains("answer_type") || !q.contains("question_type")) {
            throw ParseError("each question needs answer_type and question_type");
        }
        questions.push_back(
            {q["answer_type"].get<std::string>(), q["question_type"].get<std::string>()});
    }
    std::vector<std::pair<std::size_t, std::size_t>> tables;
    for (const auto& t : doc["tables"]) {
        if (t.is_array() && t.size() == 2) {
            tables.emplace_back(t[0].get<std::size_t>(), t[1].get<std::size_t>());
        } else if (t.is_object() && t.contains("rows") && t.contains("cols")) {
            tables.emplace_back(t["rows"].get<std::size_t>(), t["cols"].get<std::size_t>());
        } else {
            throw ParseError("each table must be [rows, cols] or {\"rows\", \"cols\"}");
        }
    }
    emit(challenge_stats(questions, tables).to_json());
    return kExitSuccess;
}

int cmd_cache_list(const fs::path& cache_dir) {
    json out = json::array();
    if (fs::exists(cache_dir)) {
        std::vector<fs::path> dirs;
        for (const auto& entry : fs::directory_iterator(cache_dir)) {
            if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
                dirs.push_back(entry.path());
            }
        }
        std::sort(dirs.begin(), dirs.end());
        for (const auto& dir : dirs) {
            json files = json::array();
            try {
                const json manifest = parse_json_file(dir / "manifest.json");
                std::vector<std::string> names;
                for (const auto& [name, hash] : manifest.at("files").items()) {
                    names.push_back(name);
                }
                std::sort(names.begin(), names.end());
                for (const auto& n : names) files.push_back(n);
            } catch (const std::exception&) {
                files = json::array({"<unreadable manifest>"});
            }
            out.push_back({{"dir", dir.filename().string()}, {"files", files}});
        }
    }
    emit(out);
    return kExitSuccess;
}

int cmd_cache_clear(const fs::path& cache_dir, const std::vector<std::string>& names, bool all) {
    if (!all && names.empty()) {
        throw ValidationError("cache clear needs cache entry names or --all");
    }
    std::vector<fs::path> targets;
    if (all) {
        if (fs::exists(cache_dir)) {
            for (const auto& entry : fs::directory_iterator(cache_dir)) {
                if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) {
                    targets.push_back(entry.path());
                }
            }
        }
    } else {
        for (const auto& name : names) {
            if (name.find('/') != std::string::npos || name == ".." || name == ".") {
                throw ValidationError("'" + name + "' is not a cache entry name");
            }
            const fs::path dir = cache_dir / name;
            if (!fs::exists(dir / "manifest.json")) {
                throw ValidationError("'" + name + "' is not a cache entry under '" +
                                      cache_dir.string() + "'");
            }
            targets.push_back(dir);
        }
    }
    for (const auto& dir : targets) fs::remove_all(dir);
    std::cerr << "removed " << targets.size() << " cache entries\n";
    return kExitSuccess;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Deterministic table canonicalization: probe, plan, transform, audit, and query tables"};
    app.require_subcommand(1);

    std::function<int()> action;

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "Parse a table file into the table JSON document");
    add_table_args(ingest, ingest_args.table, "Table file (.csv, .md, or table JSON)");
    ingest->add_option("--max-rows", ingest_args.max_rows, "Keep only the first N data rows");
    ingest->add_option("--out", ingest_args.out, "Output path (default: stdout)");
    ingest->callback([&] { action = [&] { return cmd_ingest(ingest_args); }; });

    TableArgs probe_table;
    RunOptions probe_run;
    auto* probe = app.add_subcommand("probe", "Generate the probe-question artifact for a table");
    add_table_args(probe, probe_table, "Raw table file");
    add_run_options(probe, probe_run);
    probe->callback([&] { action = [&] { return cmd_probe(probe_table, probe_run); }; });

    TableArgs plan_table;
    RunOptions plan_run;
    auto* plan = app.add_subcommand("plan", "Generate (or reuse) the transformation plan for a table");
    add_table_args(plan, plan_table, "Raw table file");
    add_run_options(plan, plan_run);
    plan->callback([&] { action = [&] { return cmd_plan(plan_table, plan_run); }; });

    TransformArgs transform_args;
    RunOptions transform_run;
    auto* transform =
        app.add_subcommand("transform", "Produce the canonical table (given plan or --auto)");
    add_table_args(transform, transform_args.table, "Raw table file (directory with --all)");
    add_run_options(transform, transform_run);
    transform->add_option("--plan", transform_args.plan_path, "Execute this plan file as given");
    transform->add_flag("--auto", transform_args.auto_mode,
                        "Chain probe -> plan -> execute through the provider");
    transform->add_flag("--all", transform_args.all,
                        "Treat the input as a directory and transform every table in it");
    transform->add_option("--workers", transform_args.workers,
                          "Worker threads for --all (default: logical CPUs)");
    transform->add_option("--trace", transform_args.trace_out, "Also copy trace.json here");
    transform->callback(
        [&] { action = [&] { return cmd_transform(transform_args, transform_run); }; });

    TableArgs verify_table;
    RunOptions verify_run;
    std::string verify_plan_path;
    auto* verify = app.add_subcommand(
        "verify-lossless", "Audit a plan against a table and check exact raw recovery");
    add_table_args(verify, verify_table, "Raw table file");
    add_run_options(verify, verify_run);
    verify->add_option("--plan", verify_plan_path, "Plan file (default: the cached plan)");
    verify->callback(
        [&] { action = [&] { return cmd_verify_lossless(verify_table, verify_plan_path, verify_run); }; });

    ExportArgs export_args;
    RunOptions export_run;
    auto* export_cmd = app.add_subcommand("export-sql", "Emit CREATE TABLE + INSERT statements");
    add_table_args(export_cmd, export_args.table, "Table file (raw table with --cached)");
    add_run_options(export_cmd, export_run);
    export_cmd->add_option("--name", export_args.name, "SQL table name (default: the table id)");
    export_cmd->add_flag("--cached", export_args.cached,
                         "Export the cached canonical table for this raw table");
    export_cmd->callback([&] { action = [&] { return cmd_export_sql(export_args, export_run); }; });

    TableArgs qa_table;
    RunOptions qa_run;
    std::string qa_question;
    auto* qa = app.add_subcommand("qa", "Answer a question over the cached canonical table");
    add_table_args(qa, qa_table, "Raw table file (identifies the cache entry)");
    add_run_options(qa, qa_run);
    qa->add_option("--question", qa_question, "The question to answer")->required();
    qa->callback([&] { action = [&] { return cmd_qa(qa_table, qa_question, qa_run); }; });

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold answers");
    eval_cmd->add_option("predictions", eval_args.predictions,
                         "Predictions JSONL ({id, predicted}; or {id, gold, predicted} "
                         "when no gold file is given)")
        ->required();
    eval_cmd->add_option("gold", eval_args.gold, "Gold JSONL ({id, gold})");
    eval_cmd->add_flag("--exact", eval_args.exact, "Exact-match scoring instead of token F1");
    eval_cmd->add_option("--records", eval_args.records_out, "Write per-record results here (JSONL)");
    eval_cmd->add_option("--annotations", eval_args.annotations,
                         "Items x raters label matrix (JSON) for agreement metrics");
    eval_cmd->callback([&] { action = [&] { return cmd_eval(eval_args); }; });

    std::string stats_input;
    auto* stats = app.add_subcommand("stats", "Summarize a challenge-set description");
    stats->add_option("input", stats_input, "JSON file with questions and table shapes")
        ->required();
    stats->callback([&] { action = [&] { return cmd_stats(stats_input); }; });

    auto* cache_cmd = app.add_subcommand("cache", "Inspect or clear the artifact cache");
    cache_cmd->require_subcommand(1);
    fs::path cache_list_dir = ".canontab-cache";
    auto* cache_list = cache_cmd->add_subcommand("list", "List cache entries and their files");
    cache_list->add_option("--cache-dir", cache_list_dir, "Artifact cache root");
    cache_list->callback([&] { action = [&] { return cmd_cache_list(cache_list_dir); }; });

    fs::path cache_clear_dir = ".canontab-cache";
    std::vector<std::string> cache_clear_names;
    bool cache_clear_all = false;
    auto* cache_clear = cache_cmd->add_subcommand("clear", "Remove cache entries");
    cache_clear->add_option("entries", cache_clear_names, "Cache entry directory names");
    cache_clear->add_option("--cache-dir", cache_clear_dir, "Artifact cache root");
    cache_clear->add_flag("--all", cache_clear_all, "Remove every cache entry");
    cache_clear->callback(
        [&] { action = [&] { return cmd_cache_clear(cache_clear_dir, cache_clear_names, cache_clear_all); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    }

    try {
        return action ? action() : kExitValidation;
    } catch (const MissingPrereq& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingPrereq;
    } catch (const ProviderError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitProvider;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailedCheck;
    }
}
