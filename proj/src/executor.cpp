#include "canontab/executor.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "canontab/errors.hpp"
#include "canontab/ops.hpp"
#include "canontab/strutil.hpp"

namespace canontab {

using nlohmann::json;

json StepTrace::to_json() const {
    json j{{"step_id", step_id},
           {"op", op},
           {"rows_in", rows_in},
           {"rows_out", rows_out},
           {"columns_added", columns_added},
           {"columns_removed", columns_removed},
           {"loss", loss}};
    if (row_map) j["row_map"] = *row_map;
    return j;
}

namespace {

[[noreturn]] void step_fail(const PlanStep& step, const std::string& why) {
    throw ExecutionError("step " + step.step_id + " (" + step.op + "): " + why, step.step_id);
}

// The reads-restricted view a step executes against: exactly the declared
// reads, in declaration order, over the full row set.
Table make_view(const Table& t, const PlanStep& step) {
    std::vector<Column> cols;
    std::vector<std::size_t> src;
    std::set<std::string> seen;
    for (const auto& name : step.reads) {
        if (!seen.insert(name).second) continue;
        auto i = t.column_index(name);
        if (!i) step_fail(step, "unknown column: " + name);
        cols.push_back(t.columns()[*i]);
        src.push_back(*i);
    }
    std::vector<Table::Row> rows(t.row_count());
    for (std::size_t r = 0; r < t.row_count(); ++r) {
        rows[r].reserve(src.size());
        for (std::size_t c : src) rows[r].push_back(t.cell(r, c));
    }
    return Table(t.table_id(), t.title(), std::move(cols), std::move(rows));
}

Table apply_row_map(const Table& t, const std::vector<std::size_t>& map) {
    std::vector<Table::Row> rows;
    rows.reserve(map.size());
    for (std::size_t r : map) rows.push_back(t.rows()[r]);
    return Table(t.table_id(), t.title(), t.columns(), std::move(rows));
}

// Merges operator outputs into the working table, enforcing write discipline.
Table merge_out_cols(const Table& t, const PlanStep& step, std::vector<OutCol> outs,
                     StepTrace& trace) {
    std::set<std::string> declared(step.writes.begin(), step.writes.end());
    auto columns = t.columns();
    std::vector<Table::Row> rows = t.rows();

    for (auto& out : outs) {
        if (out.values.size() != rows.size()) {
            step_fail(step, "operator produced " + std::to_string(out.values.size()) +
                                " values for column '" + out.name + "', expected " +
                                std::to_string(rows.size()));
        }
        if (!declared.count(out.name)) {
            step_fail(step, "wrote column '" + out.name + "' which is not declared in writes");
        }
        auto existing = t.column_index(out.name);
        if (existing) {
            bool changed = false;
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!(rows[r][*existing] == out.values[r])) changed = true;
                rows[r][*existing] = std::move(out.values[r]);
            }
            columns[*existing].declared_kind = out.kind;
            bool in_place = std::find(step.reads.begin(), step.reads.end(), out.name) !=
                            step.reads.end();
            if (changed && in_place) trace.loss = true;  // original cells overwritten
        } else {
            columns.push_back({out.name, out.role, out.kind});
            for (std::size_t r = 0; r < rows.size(); ++r) {
                rows[r].push_back(std::move(out.values[r]));
            }
            trace.columns_added.push_back(out.name);
        }
    }

    // Every declared write must have been produced.
    std::set<std::string> produced;
    for (const auto& out : outs) produced.insert(out.name);
    for (const auto& w : step.writes) {
        if (!produced.count(w)) {
            step_fail(step, "declared write '" + w + "' was never produced");
        }
    }
    return Table(t.table_id(), t.title(), std::move(columns), std::move(rows));
}

Table exec_add_row_id(const Table& t, const PlanStep& step, StepTrace& trace) {
    std::string name = "_row_id";
    if (step.params.contains("name")) {
        if (!step.params["name"].is_string()) step_fail(step, "param 'name' must be a string");
        name = step.params["name"].get<std::string>();
    }
    if (t.has_column(name)) step_fail(step, "column '" + name + "' already exists");
    auto columns = t.columns();
    columns.push_back({name, ColumnRole::Canonical, CellKind::Integer});
    std::vector<Table::Row> rows = t.rows();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        rows[r].push_back(CellValue::integer(static_cast<std::int64_t>(r)));
    }
    trace.columns_added.push_back(name);
    return Table(t.table_id(), t.title(), std::move(columns), std::move(rows));
}

Table exec_rename(const Table& t, const PlanStep& step, StepTrace& trace) {
    if (!step.params.contains("mapping") || !step.params["mapping"].is_object()) {
        step_fail(step, "param 'mapping' must be an object of old -> new names");
    }
    std::map<std::string, std::string> mapping;
    for (auto& [oldn, newn] : step.params["mapping"].items()) {
        if (!newn.is_string()) step_fail(step, "rename target for '" + oldn + "' must be a string");
        mapping[oldn] = newn.get<std::string>();
    }
    auto columns = t.columns();
    std::set<std::string> outgoing;
    for (auto& [oldn, newn] : mapping) {
        if (!t.has_column(oldn)) step_fail(step, "unknown column: " + oldn);
        if (!outgoing.insert(newn).second) {
            step_fail(step, "two columns renamed to '" + newn + "'");
        }
    }
    for (auto& col : columns) {
        auto it = mapping.find(col.name);
        if (it != mapping.end()) {
            trace.columns_removed.push_back(col.name);
            trace.columns_added.push_back(it->second);
            col.name = it->second;
        } else if (outgoing.count(col.name)) {
            step_fail(step, "rename to '" + col.name + "' collides with an existing column");
        }
    }
    return Table(t.table_id(), t.title(), std::move(columns), t.rows());
}

Table exec_select(const Table& t, const PlanStep& step, StepTrace& trace) {
    if (!step.params.contains("columns") || !step.params["columns"].is_array()) {
        step_fail(step, "param 'columns' must be an array of column names");
    }
    std::vector<std::size_t> keep;
    std::set<std::string> kept_names;
    std::vector<Column> columns;
    for (const auto& c : step.params["columns"]) {
        std::string name = c.get<std::string>();
        auto i = t.column_index(name);
        if (!i) step_fail(step, "unknown column: " + name);
        if (!kept_names.insert(name).second) step_fail(step, "column '" + name + "' selected twice");
        keep.push_back(*i);
        columns.push_back(t.columns()[*i]);
    }
    for (const auto& col : t.columns()) {
        if (!kept_names.count(col.name)) {
            trace.columns_removed.push_back(col.name);
            trace.loss = true;  // dropped columns leave the working table
        }
    }
    std::vector<Table::Row> rows(t.row_count());
    for (std::size_t r = 0; r < t.row_count(); ++r) {
        rows[r].reserve(keep.size());
        for (std::size_t c : keep) rows[r].push_back(t.cell(r, c));
    }
    return Table(t.table_id(), t.title(), std::move(columns), std::move(rows));
}

Table exec_snapshot(const Table& t, const PlanStep& step, StepTrace& trace) {
    if (!step.params.contains("source") || !step.params["source"].is_string()) {
        step_fail(step, "param 'source' must be a string");
    }
    std::string source = step.params["source"].get<std::string>();
    auto i = t.column_index(source);
    if (!i) step_fail(step, "unknown column: " + source);
    std::string target = source + "_raw";
    if (t.has_column(target)) step_fail(step, "column '" + target + "' already exists");

    // The snapshot lives right next to the column it preserves.
    auto columns = t.columns();
    columns.insert(columns.begin() + *i + 1,
                   {target, ColumnRole::RawSnapshot, t.columns()[*i].declared_kind});
    std::vector<Table::Row> rows = t.rows();
    for (auto& row : rows) row.insert(row.begin() + *i + 1, row[*i]);
    trace.columns_added.push_back(target);
    return Table(t.table_id(), t.title(), std::move(columns), std::move(rows));
}

Table exec_custom(const Table& t, const PlanStep& step, const ExecutePolicy& policy,
                  StepTrace& trace) {
    std::string name = step.params.contains("name") && step.params["name"].is_string()
                           ? step.params["name"].get<std::string>()
                           : "";
    if (name.empty()) step_fail(step, "param 'name' (string) is required");

    Table view = make_view(t, step);
    Table result;
    auto it = custom_registry().find(name);
    if (it != custom_registry().end()) {
        result = it->second(view, step.params);
    } else if (policy.custom_fallback) {
        result = policy.custom_fallback(step, view);
    } else {
        step_fail(step, "custom operator '" + name + "' is not registered");
    }

    if (result.row_count() != view.row_count()) {
        step_fail(step, "custom operator changed the row count from " +
                            std::to_string(view.row_count()) + " to " +
                            std::to_string(result.row_count()));
    }
    // Diff against the view: new or changed columns become the write set.
    std::vector<OutCol> outs;
    for (std::size_t c = 0; c < result.column_count(); ++c) {
        const auto& col = result.columns()[c];
        auto orig = view.column_index(col.name);
        auto values = result.column_values(c);
        if (orig) {
            bool changed = false;
            for (std::size_t r = 0; r < values.size(); ++r) {
                if (!(values[r] == view.cell(r, *orig))) {
                    changed = true;
                    break;
                }
            }
            if (!changed) continue;
        }
        outs.push_back({col.name, col.role, col.declared_kind, std::move(values)});
    }
    for (const auto& col : view.columns()) {
        if (!result.has_column(col.name)) {
            step_fail(step, "custom operator dropped column '" + col.name + "'");
        }
    }
    return merge_out_cols(t, step, std::move(outs), trace);
}

}  // namespace

ExecutionResult execute_plan(const TransformationPlan& plan, const Table& raw,
                             const ExecutePolicy& policy) {
    if (!policy.skip_validation) {
        ValidateOptions opts;
        opts.allow_row_change = policy.allow_row_change;
        PolicyReport report = validate_plan(plan, SchemaDescriptor::of_table(raw), opts);
        if (report.has_errors()) {
            std::vector<std::string> msgs;
            for (const auto& f : report.findings) {
                if (f.severity == Severity::Error) msgs.push_back(f.rule + ": " + f.message);
            }
            throw ValidationError("plan failed validation:\n  - " + strutil::join(msgs, "\n  - "));
        }
    }

    std::map<std::string, const PlanStep*> by_id;
    for (const auto& s : plan.steps) by_id.emplace(s.step_id, &s);

    Table working = raw;
    std::vector<StepTrace> traces;

    for (const auto& sid : topo_order(plan)) {
        const PlanStep& step = *by_id.at(sid);
        StepTrace trace;
        trace.step_id = step.step_id;
        trace.op = step.op;
        trace.rows_in = working.row_count();

        if (step.op == "add_row_id") {
            working = exec_add_row_id(working, step, trace);
        } else if (step.op == "rename") {
            working = exec_rename(working, step, trace);
        } else if (step.op == "select") {
            working = exec_select(working, step, trace);
        } else if (step.op == "keep_raw_snapshot") {
            working = exec_snapshot(working, step, trace);
        } else if (step.op == "custom") {
            working = exec_custom(working, step, policy, trace);
        } else if (is_row_op(step.op)) {
            Table view = make_view(working, step);
            auto map = run_row_op(step, view);
            working = apply_row_map(working, map);
            if (map.size() != trace.rows_in) trace.loss = true;  // rows dropped
            bool identity = map.size() == trace.rows_in;
            for (std::size_t i = 0; identity && i < map.size(); ++i) identity = (map[i] == i);
            if (!identity) trace.row_map = std::move(map);
        } else if (is_column_op(step.op)) {
            Table view = make_view(working, step);
            working = merge_out_cols(working, step, run_column_op(step, view), trace);
        } else {
            step_fail(step, "op '" + step.op + "' is not executable");
        }
        trace.rows_out = working.row_count();
        traces.push_back(std::move(trace));
    }

    // Project through final_output: order, membership, and roles.
    if (!plan.final_output.columns.empty()) {
        std::vector<Column> columns;
        std::vector<std::size_t> keep;
        for (const auto& c : plan.final_output.columns) {
            auto i = working.column_index(c.name);
            if (!i) {
                throw ExecutionError("final_output column '" + c.name +
                                     "' is missing from the transformed table");
            }
            Column col = working.columns()[*i];
            col.role = c.role;
            columns.push_back(col);
            keep.push_back(*i);
        }
        std::vector<Table::Row> rows(working.row_count());
        for (std::size_t r = 0; r < working.row_count(); ++r) {
            rows[r].reserve(keep.size());
            for (std::size_t c : keep) rows[r].push_back(working.cell(r, c));
        }
        working = Table(working.table_id(), working.title(), std::move(columns), std::move(rows));
    }

    // Primary-key uniqueness.
    if (!plan.final_output.primary_key.empty()) {
        std::vector<std::size_t> key_cols;
        for (const auto& k : plan.final_output.primary_key) {
            auto i = working.column_index(k);
            if (!i) {
                throw ExecutionError("primary_key column '" + k +
                                     "' is missing from the final table");
            }
            key_cols.push_back(*i);
        }
        std::set<std::string> seen;
        for (std::size_t r = 0; r < working.row_count(); ++r) {
            std::string key;
            for (std::size_t c : key_cols) {
                const CellValue& v = working.cell(r, c);
                std::string t = v.to_text();
                key += kind_name(v.kind());
                key += ':';
                key += std::to_string(t.size());
                key += ':';
                key += t;
            }
            if (!seen.insert(key).second) {
                throw ExecutionError("primary key (" +
                                     strutil::join(plan.final_output.primary_key, ", ") +
                                     ") is not unique at row " + std::to_string(r));
            }
        }
    }

    return {std::move(working), std::move(traces)};
}

std::vector<std::size_t> compose_row_maps(const std::vector<StepTrace>& traces,
                                          std::size_t raw_rows) {
    std::vector<std::size_t> map(raw_rows);
    std::iota(map.begin(), map.end(), 0);
    for (const auto& t : traces) {
        if (!t.row_map) continue;
        std::vector<std::size_t> next;
        next.reserve(t.row_map->size());
        for (std::size_t r : *t.row_map) next.push_back(map.at(r));
        map = std::move(next);
    }
    return map;
}

}  // namespace canontab
