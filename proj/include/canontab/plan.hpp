#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canontab/table.hpp"

namespace canontab {

struct PlanStep {
    std::string step_id;
    std::string op;
    std::string description;
    std::vector<std::string> reads;
    std::vector<std::string> writes;
    nlohmann::json params;
    std::vector<std::string> fixes_issues;
    std::vector<std::string> depends_on;
};

struct TransformationPlan {
    std::string table_id;
    std::string strategy;
    std::vector<PlanStep> steps;
    SchemaDescriptor final_output;
};

enum class Severity { Warning, Error };

struct LintFinding {
    std::string rule;     // e.g. "STRUCT_CYCLE", "POLICY_NO_EXPLODE"
    std::string step_id;  // empty for plan-level findings
    Severity severity = Severity::Error;
    std::string message;
};

struct PolicyReport {
    std::vector<LintFinding> findings;

    bool has_errors() const;
    nlohmann::json to_json() const;
};

struct ValidateOptions {
    bool allow_row_change = false;  // demotes nothing; suppresses the row-change warning
};

// The 23-operator vocabulary (includes "custom").
const std::vector<std::string>& operator_vocabulary();
bool is_vocabulary_op(const std::string& op);

// Operators allowed to write the columns they read.
bool is_in_place_op(const std::string& op);

// Strict parse of the planner's JSON contract. Reports a syntax error with
// byte offset, or every schema violation at once with JSON paths like
// "steps[0].fixes_issues". Throws ParseError.
TransformationPlan parse_plan(const std::string& json_text);

// Inverse of parse_plan (field order fixed; round-trips).
nlohmann::json plan_to_json(const TransformationPlan& plan);
std::string serialize_plan(const TransformationPlan& plan);

// Static checks: structural errors (unknown ops/reads, duplicate ids,
// dependency problems, unproduced final columns, bad params) and policy
// lints from the planning constraints. Findings are ordered by
// (step index, rule id); plan-level findings sort after all steps.
PolicyReport validate_plan(const TransformationPlan& plan, const SchemaDescriptor& raw_schema,
                           const ValidateOptions& options = {});

// Deterministic topological order of step ids: among ready steps, declaration
// order breaks ties. Throws ValidationError listing the step_ids on a cycle.
std::vector<std::string> topo_order(const TransformationPlan& plan);

}  // namespace canontab
