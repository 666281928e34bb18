#pragma once

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "canontab/executor.hpp"
#include "canontab/llm.hpp"
#include "canontab/structure.hpp"
#include "canontab/table.hpp"

namespace canontab {

struct PipelineOptions {
    std::string column_descriptions;
    std::string examples;  // planner few-shot slot
    StageConfig issue_config = StageConfig::defaults(Stage::Issue);
    StageConfig plan_config = StageConfig::defaults(Stage::Plan);
    ExecutePolicy policy;
    // How many times an invalid completion (unparseable probes, a plan that
    // fails validation or execution) is regenerated before giving up.
    int max_generation_attempts = 2;
    Sleeper* sleeper = nullptr;          // defaults to the real clock
    std::mutex* ledger_mutex = nullptr;  // set when sharing the ledger across workers
};

struct PipelineResult {
    ProbeArtifact probes;
    TransformationPlan plan;  // the plan actually executed (snapshots included)
    ExecutionResult execution;
    LossAudit audit;
    std::filesystem::path cache_dir;
    int provider_calls = 0;  // completions fetched from the provider this run
    bool issues_cached = false;
    bool plan_cached = false;
    bool output_cached = false;
};

// Runs both model stages and the deterministic execution for one raw table,
// backed by the content-addressed artifact cache under cache_root:
//
//   provenance/issues.json   stage-1 probe artifact (provenance only; QA never
//                            reads it)
//   plan.json                the validated, snapshot-repaired plan
//   canonical.csv            the canonical table
//   trace.json               step traces plus the losslessness audit
//
// Cached artifacts short-circuit their stage, so a fully cached table costs
// zero provider calls and zero ledger tokens. A cached plan is re-executed
// deterministically and must reproduce canonical.csv byte for byte; any
// divergence throws CacheError. A partial miss resumes from the last cached
// stage forward.
PipelineResult run_pipeline(const Table& raw, ProviderClient& provider, TokenLedger& ledger,
                            const std::filesystem::path& cache_root,
                            const PipelineOptions& options = {});

// Pipelines a batch on a bounded pool of `workers` threads. Ledger updates are
// serialized internally; `provider` must tolerate concurrent complete() calls.
// Results keep the input order. The first failure is rethrown after all
// workers finish.
std::vector<PipelineResult> run_pipeline_batch(const std::vector<Table>& tables,
                                               ProviderClient& provider, TokenLedger& ledger,
                                               const std::filesystem::path& cache_root,
                                               const PipelineOptions& options = {},
                                               std::size_t workers = 4);

}  // namespace canontab
