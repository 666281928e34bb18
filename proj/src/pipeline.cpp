#include "canontab/pipeline.hpp"

#include <atomic>
#include <thread>

#include <nlohmann/json.hpp>

#include "canontab/cache.hpp"
#include "canontab/table_io.hpp"

namespace canontab {

using nlohmann::json;

namespace {

void account(TokenLedger& ledger, std::mutex* mutex, const std::string& table_id, Stage stage,
             std::int64_t in, std::int64_t out) {
    if (in == 0 && out == 0) return;
    if (mutex) {
        std::lock_guard<std::mutex> lock(*mutex);
        ledger.add(table_id, stage, in, out);
    } else {
        ledger.add(table_id, stage, in, out);
    }
}

// One validated stage completion: fetches (with transport retries), meters
// every fetch into the ledger, and regenerates when `accept` rejects the text.
template <typename Accept>
auto generate_validated(ProviderClient& provider, const std::string& prompt,
                        const StageConfig& cfg, Sleeper& sleeper, TokenLedger& ledger,
                        std::mutex* ledger_mutex, const std::string& table_id,
                        int max_attempts, int& provider_calls, Accept&& accept) {
    for (int attempt = 1;; ++attempt) {
        Completion c;
        try {
            c = run_stage_with_retry(provider, prompt, cfg, sleeper);
        } catch (const ProviderError& e) {
            account(ledger, ledger_mutex, table_id, cfg.stage, e.input_tokens(),
                    e.output_tokens());
            throw;
        }
        ++provider_calls;
        account(ledger, ledger_mutex, table_id, cfg.stage, c.input_tokens, c.output_tokens);
        try {
            return accept(c.text);
        } catch (const Error& e) {
            if (attempt >= max_attempts) {
                throw ValidationError(std::string(stage_name(cfg.stage)) +
                                      " stage produced no valid completion in " +
                                      std::to_string(max_attempts) +
                                      " attempts; last error: " + e.what());
            }
        }
    }
}

json trace_json(const ExecutionResult& execution, const LossAudit& audit) {
    json traces = json::array();
    for (const StepTrace& t : execution.traces) traces.push_back(t.to_json());
    return {{"traces", traces}, {"audit", audit.to_json()}};
}

}  // namespace

PipelineResult run_pipeline(const Table& raw, ProviderClient& provider, TokenLedger& ledger,
                            const std::filesystem::path& cache_root,
                            const PipelineOptions& options) {
    RealSleeper real_clock;
    Sleeper& sleeper = options.sleeper ? *options.sleeper : real_clock;
    const std::string& table_id = raw.table_id();

    ArtifactCache cache(cache_root, table_id, write_csv(raw));

    PipelineResult out;
    out.cache_dir = cache.dir();

    // Stage 1: probes. Cached probes make the issue stage free.
    if (cache.has("provenance/issues.json")) {
        try {
            out.probes =
                ProbeArtifact::from_json(json::parse(cache.read_text("provenance/issues.json")));
        } catch (const json::exception& e) {
            throw CacheError("cached issues.json is unreadable: " + std::string(e.what()));
        }
        out.issues_cached = true;
    } else {
        PromptInputs inputs;
        inputs.column_descriptions = options.column_descriptions;
        const std::string prompt = build_stage_prompt(Stage::Issue, raw, inputs);
        out.probes = generate_validated(
            provider, prompt, options.issue_config, sleeper, ledger, options.ledger_mutex,
            table_id, options.max_generation_attempts, out.provider_calls,
            [](const std::string& text) { return parse_probe_response(text); });
        cache.write_text("provenance/issues.json", out.probes.to_json().dump(2));
    }

    // Stage 2: the plan. A cached plan is already validated and
    // snapshot-repaired; otherwise generate, validate, execute, and repair.
    if (cache.has("plan.json")) {
        out.plan = parse_plan(cache.read_text("plan.json"));
        out.plan_cached = true;
        ExecutePolicy policy = options.policy;
        out.execution = execute_plan(out.plan, raw, policy);
        out.audit = audit_losslessness(raw, out.execution.table, out.plan, out.execution.traces);
    } else {
        PromptInputs inputs;
        inputs.column_descriptions = options.column_descriptions;
        inputs.examples = options.examples;
        inputs.probes = &out.probes;
        const std::string prompt = build_stage_prompt(Stage::Plan, raw, inputs);
        LosslessRun run = generate_validated(
            provider, prompt, options.plan_config, sleeper, ledger, options.ledger_mutex,
            table_id, options.max_generation_attempts, out.provider_calls,
            [&](const std::string& text) {
                return ensure_lossless(parse_plan(text), raw, options.policy);
            });
        out.plan = std::move(run.plan);
        out.execution = std::move(run.result);
        out.audit = std::move(run.audit);
        cache.write_text("plan.json", plan_to_json(out.plan).dump(2));
    }

    // Deterministic replay contract: with the plan fixed, the canonical bytes
    // must match what the cache recorded.
    const std::string canonical_csv = write_csv(out.execution.table);
    if (cache.has("canonical.csv")) {
        if (cache.read_text("canonical.csv") != canonical_csv) {
            throw CacheError("canonical.csv for '" + table_id +
                             "' no longer matches the cached plan's output");
        }
        out.output_cached = true;
    } else {
        cache.write_text("canonical.csv", canonical_csv);
    }
    cache.write_text("trace.json", trace_json(out.execution, out.audit).dump(2));
    return out;
}

std::vector<PipelineResult> run_pipeline_batch(const std::vector<Table>& tables,
                                               ProviderClient& provider, TokenLedger& ledger,
                                               const std::filesystem::path& cache_root,
                                               const PipelineOptions& options,
                                               std::size_t workers) {
    std::vector<std::optional<PipelineResult>> results(tables.size());
    std::vector<std::exception_ptr> failures(tables.size());
    std::mutex ledger_mutex;

    PipelineOptions worker_options = options;
    // Keep a caller-supplied mutex so external ledger writers (the codegen
    // fallback) stay serialized with the workers.
    if (!worker_options.ledger_mutex) worker_options.ledger_mutex = &ledger_mutex;

    std::atomic<std::size_t> next{0};
    auto work = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= tables.size()) return;
            try {
                results[i] = run_pipeline(tables[i], provider, ledger, cache_root, worker_options);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        }
    };

    const std::size_t n = std::max<std::size_t>(1, std::min(workers, tables.size()));
    std::vector<std::thread> pool;
    pool.reserve(n);
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(work);
    for (auto& t : pool) t.join();

    for (const auto& failure : failures) {
        if (failure) std::rethrow_exception(failure);
    }
    std::vector<PipelineResult> out;
    out.reserve(tables.size());
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
}

}  // namespace canontab
