#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "canontab/plan.hpp"
#include "canontab/table.hpp"

namespace canontab {

// Audit record for one executed step.
struct StepTrace {
    std::string step_id;
    std::string op;
    std::size_t rows_in = 0;
    std::size_t rows_out = 0;
    std::vector<std::string> columns_added;
    std::vector<std::string> columns_removed;
    // True when some cell's information did not survive into any output
    // column of this step (in-place overwrite, dropped rows or columns).
    bool loss = false;
    // Output row -> input row, present when the step permuted or dropped rows.
    std::optional<std::vector<std::size_t>> row_map;

    nlohmann::json to_json() const;
};

struct ExecutePolicy {
    bool allow_row_change = false;
    // Skip the pre-execution validate_plan pass (used when the caller already
    // validated and wants to execute a plan with waived warnings).
    bool skip_validation = false;
    // Handler for custom ops missing from the registry (the code-generation
    // fallback). Receives the step and its reads view; must return a table
    // with the same rows plus the declared writes.
    std::function<Table(const PlanStep&, const Table&)> custom_fallback;
};

struct ExecutionResult {
    Table table;
    std::vector<StepTrace> traces;
};

// Applies the plan to the raw table in deterministic topological order and
// projects the result through final_output. Throws ValidationError when the
// plan has error-severity findings, ExecutionError when a step fails.
ExecutionResult execute_plan(const TransformationPlan& plan, const Table& raw,
                             const ExecutePolicy& policy = {});

// Canonical row -> raw row across every executed step; nullopt only when a
// trace is inconsistent. Identity maps are materialized.
std::vector<std::size_t> compose_row_maps(const std::vector<StepTrace>& traces,
                                          std::size_t raw_rows);

}  // namespace canontab
