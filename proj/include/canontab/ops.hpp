#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canontab/plan.hpp"
#include "canontab/table.hpp"

namespace canontab {

// One column emitted by an operator, merged into the working table by the
// executor (replacing an existing column or appended as a new one).
struct OutCol {
    std::string name;
    ColumnRole role = ColumnRole::Derived;
    std::optional<CellKind> kind;
    std::vector<CellValue> values;
};

// Operator families, dispatched by the executor:
//  - column ops consume a reads-restricted view and emit OutCols;
//  - row ops consume the view and emit a row map (output row -> input row);
//  - structural ops (rename/select/add_row_id/keep_raw_snapshot) are handled
//    by the executor itself since they only manage columns.
bool is_column_op(const std::string& op);
bool is_row_op(const std::string& op);

// Runs a column-family operator against the view (which holds exactly the
// step's declared reads). Throws ExecutionError on runtime failures.
std::vector<OutCol> run_column_op(const PlanStep& step, const Table& view);

// Runs sort/filter_rows/deduplicate_rows; returns kept/permuted row indices.
std::vector<std::size_t> run_row_op(const PlanStep& step, const Table& view);

// Deterministic custom-operator registry (immutable after startup).
// Functions receive the reads view and step params; their output columns are
// diffed against declared writes by the executor.
using CustomFn = std::function<Table(const Table& view, const nlohmann::json& params)>;
const std::map<std::string, CustomFn>& custom_registry();

// Static parameter validation for one step: returns human-readable problems
// (empty when fine). Used by validate_plan so bad params fail before
// execution.
std::vector<std::string> check_op_params(const PlanStep& step);

// Columns a step's params reference (condition columns, expression columns,
// sources); validate_plan checks these against declared reads.
std::vector<std::string> param_columns(const PlanStep& step);

}  // namespace canontab
