#include "canontab/plan.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "canontab/errors.hpp"
#include "canontab/ops.hpp"
#include "canontab/regex_lite.hpp"
#include "canontab/strutil.hpp"

namespace canontab {

using nlohmann::json;

const std::vector<std::string>& operator_vocabulary() {
    static const std::vector<std::string> vocab = {
        "add_row_id",      "rename",         "select",
        "parse_date_text", "parse_number",   "extract_regex",
        "derive_conditional", "derive_math", "map_values",
        "replace_value",   "replace_string", "cast_column",
        "fillna_static",   "fillna_dynamic", "combine_columns",
        "trim_whitespace", "filter_rows",    "sort",
        "deduplicate_rows", "keep_raw_snapshot", "bin_numeric",
        "one_hot",         "custom"};
    return vocab;
}

bool is_vocabulary_op(const std::string& op) {
    const auto& v = operator_vocabulary();
    return std::find(v.begin(), v.end(), op) != v.end();
}

bool is_in_place_op(const std::string& op) {
    static const std::set<std::string> in_place = {
        "trim_whitespace", "replace_value", "replace_string", "fillna_static",
        "fillna_dynamic",  "map_values",    "cast_column"};
    return in_place.count(op) > 0;
}

bool PolicyReport::has_errors() const {
    return std::any_of(findings.begin(), findings.end(),
                       [](const LintFinding& f) { return f.severity == Severity::Error; });
}

json PolicyReport::to_json() const {
    json arr = json::array();
    for (const auto& f : findings) {
        arr.push_back({{"rule", f.rule},
                       {"step_id", f.step_id},
                       {"severity", f.severity == Severity::Error ? "error" : "warning"},
                       {"message", f.message}});
    }
    return json{{"findings", arr}};
}

// ---------------------------------------------------------------------------
// parse_plan

namespace {

class SchemaChecker {
public:
    void problem(const std::string& path, const std::string& what) {
        problems_.push_back(path + ": " + what);
    }

    bool str(const json& obj, const std::string& path, const char* key, std::string& out) {
        if (!obj.contains(key)) {
            problem(path + "." + key, "missing required key");
            return false;
        }
        if (!obj[key].is_string()) {
            problem(path + "." + key, "must be a string");
            return false;
        }
        out = obj[key].get<std::string>();
        return true;
    }

    bool str_list(const json& obj, const std::string& path, const char* key,
                  std::vector<std::string>& out) {
        if (!obj.contains(key)) {
            problem(path + "." + key, "missing required key");
            return false;
        }
        if (!obj[key].is_array()) {
            problem(path + "." + key, "must be an array of strings");
            return false;
        }
        for (std::size_t i = 0; i < obj[key].size(); ++i) {
            if (!obj[key][i].is_string()) {
                problem(path + "." + key + "[" + std::to_string(i) + "]", "must be a string");
                return false;
            }
            out.push_back(obj[key][i].get<std::string>());
        }
        return true;
    }

    void reject_unknown(const json& obj, const std::string& path,
                        const std::set<std::string>& allowed) {
        for (auto& [key, value] : obj.items()) {
            (void)value;
            if (!allowed.count(key)) problem(path + "." + key, "unknown key");
        }
    }

    void finish(const char* what) {
        if (problems_.empty()) return;
        std::string msg = std::string(what) + " violates the plan schema:\n  - " +
                          strutil::join(problems_, "\n  - ");
        throw ParseError(msg);
    }

private:
    std::vector<std::string> problems_;
};

}  // namespace

TransformationPlan parse_plan(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError("plan is not valid JSON (byte " + std::to_string(e.byte) + "): " + e.what());
    }

    SchemaChecker check;
    TransformationPlan plan;
    if (!doc.is_object()) {
        check.problem("$", "plan must be a JSON object");
        check.finish("plan");
    }
    check.reject_unknown(doc, "$", {"table_id", "strategy", "steps", "final_output"});
    check.str(doc, "$", "table_id", plan.table_id);
    check.str(doc, "$", "strategy", plan.strategy);

    if (!doc.contains("steps")) {
        check.problem("steps", "missing required key");
    } else if (!doc["steps"].is_array()) {
        check.problem("steps", "must be an array");
    } else {
        for (std::size_t i = 0; i < doc["steps"].size(); ++i) {
            const json& s = doc["steps"][i];
            std::string path = "steps[" + std::to_string(i) + "]";
            if (!s.is_object()) {
                check.problem(path, "must be an object");
                continue;
            }
            check.reject_unknown(s, path,
                                 {"step_id", "op", "description", "reads", "writes", "params",
                                  "fixes_issues", "depends_on"});
            PlanStep step;
            check.str(s, path, "step_id", step.step_id);
            check.str(s, path, "op", step.op);
            check.str(s, path, "description", step.description);
            check.str_list(s, path, "reads", step.reads);
            check.str_list(s, path, "writes", step.writes);
            if (!s.contains("params")) {
                check.problem(path + ".params", "missing required key");
            } else if (!s["params"].is_object()) {
                check.problem(path + ".params", "must be an object");
            } else {
                step.params = s["params"];
            }
            check.str_list(s, path, "fixes_issues", step.fixes_issues);
            check.str_list(s, path, "depends_on", step.depends_on);
            plan.steps.push_back(std::move(step));
        }
    }

    if (!doc.contains("final_output")) {
        check.problem("final_output", "missing required key");
    } else if (!doc["final_output"].is_object()) {
        check.problem("final_output", "must be an object");
    } else {
        const json& fo = doc["final_output"];
        check.reject_unknown(fo, "final_output", {"primary_key", "columns"});
        check.str_list(fo, "final_output", "primary_key", plan.final_output.primary_key);
        if (!fo.contains("columns")) {
            check.problem("final_output.columns", "missing required key");
        } else if (!fo["columns"].is_array()) {
            check.problem("final_output.columns", "must be an array");
        } else {
            for (std::size_t i = 0; i < fo["columns"].size(); ++i) {
                const json& c = fo["columns"][i];
                std::string path = "final_output.columns[" + std::to_string(i) + "]";
                if (!c.is_object()) {
                    check.problem(path, "must be an object");
                    continue;
                }
                check.reject_unknown(c, path, {"name", "role"});
                SchemaColumn col;
                check.str(c, path, "name", col.name);
                std::string role;
                if (check.str(c, path, "role", role)) {
                    auto r = role_from_name(role);
                    if (!r) {
                        check.problem(path + ".role",
                                      "must be canonical, derived, helper, or raw_snapshot");
                    } else {
                        col.role = *r;
                    }
                }
                plan.final_output.columns.push_back(std::move(col));
            }
        }
    }

    check.finish("plan");
    return plan;
}

json plan_to_json(const TransformationPlan& plan) {
    json steps = json::array();
    for (const auto& s : plan.steps) {
        steps.push_back({{"step_id", s.step_id},
                         {"op", s.op},
                         {"description", s.description},
                         {"reads", s.reads},
                         {"writes", s.writes},
                         {"params", s.params.is_null() ? json::object() : s.params},
                         {"fixes_issues", s.fixes_issues},
                         {"depends_on", s.depends_on}});
    }
    json cols = json::array();
    for (const auto& c : plan.final_output.columns) {
        cols.push_back({{"name", c.name}, {"role", role_name(c.role)}});
    }
    return json{{"table_id", plan.table_id},
                {"strategy", plan.strategy},
                {"steps", steps},
                {"final_output", {{"primary_key", plan.final_output.primary_key}, {"columns", cols}}}};
}

std::string serialize_plan(const TransformationPlan& plan) { return plan_to_json(plan).dump(2); }

// ---------------------------------------------------------------------------
// topo_order

namespace {

std::map<std::string, std::size_t> step_index_map(const TransformationPlan& plan) {
    std::map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        idx.emplace(plan.steps[i].step_id, i);  // first declaration wins on duplicates
    }
    return idx;
}

// DFS-extracted cycle for the error message.
std::vector<std::string> find_cycle(const TransformationPlan& plan,
                                    const std::map<std::string, std::size_t>& idx) {
    std::vector<int> state(plan.steps.size(), 0);  // 0 new, 1 active, 2 done
    std::vector<std::size_t> stack;
    std::vector<std::string> cycle;

    std::function<bool(std::size_t)> visit = [&](std::size_t i) -> bool {
        state[i] = 1;
        stack.push_back(i);
        for (const auto& dep : plan.steps[i].depends_on) {
            auto it = idx.find(dep);
            if (it == idx.end()) continue;
            std::size_t j = it->second;
            if (state[j] == 1) {
                auto at = std::find(stack.begin(), stack.end(), j);
                for (auto s = at; s != stack.end(); ++s) cycle.push_back(plan.steps[*s].step_id);
                return true;
            }
            if (state[j] == 0 && visit(j)) return true;
        }
        stack.pop_back();
        state[i] = 2;
        return false;
    };
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        if (state[i] == 0 && visit(i)) return cycle;
    }
    return {};
}

}  // namespace

std::vector<std::string> topo_order(const TransformationPlan& plan) {
    auto idx = step_index_map(plan);
    std::size_t n = plan.steps.size();
    std::vector<std::size_t> indegree(n, 0);
    std::vector<std::vector<std::size_t>> dependents(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& dep : plan.steps[i].depends_on) {
            auto it = idx.find(dep);
            if (it == idx.end()) {
                throw ValidationError("step " + plan.steps[i].step_id +
                                      " depends on unknown step '" + dep + "'");
            }
            dependents[it->second].push_back(i);
            ++indegree[i];
        }
    }

    // Kahn's algorithm; the ready set is drained in declaration order.
    std::set<std::size_t> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (indegree[i] == 0) ready.insert(i);
    }
    std::vector<std::string> order;
    while (!ready.empty()) {
        std::size_t i = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(plan.steps[i].step_id);
        for (std::size_t j : dependents[i]) {
            if (--indegree[j] == 0) ready.insert(j);
        }
    }
    if (order.size() != n) {
        auto cycle = find_cycle(plan, idx);
        throw ValidationError("plan has a dependency cycle: " + strutil::join(cycle, " -> "));
    }
    return order;
}

// ---------------------------------------------------------------------------
// validate_plan

namespace {

struct FindingSink {
    std::vector<std::pair<std::pair<std::size_t, std::string>, LintFinding>> items;

    void add(std::size_t step_index, const std::string& rule, const std::string& step_id,
             Severity sev, const std::string& message) {
        items.push_back({{step_index, rule}, {rule, step_id, sev, message}});
    }
};

// Transitive dependency bitmap: reach[i] holds every step i depends on.
std::vector<std::vector<bool>> transitive_deps(const TransformationPlan& plan,
                                               const std::map<std::string, std::size_t>& idx) {
    std::size_t n = plan.steps.size();
    std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        for (const auto& dep : plan.steps[i].depends_on) {
            auto it = idx.find(dep);
            if (it != idx.end() && it->second != i) reach[i][it->second] = true;
        }
    }
    // Deps are (normally) earlier-declared, so a forward sweep converges; the
    // extra outer pass covers forward references conservatively.
    for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (!reach[i][j]) continue;
                for (std::size_t k = 0; k < n; ++k) {
                    if (reach[j][k]) reach[i][k] = true;
                }
            }
        }
    }
    return reach;
}

}  // namespace

PolicyReport validate_plan(const TransformationPlan& plan, const SchemaDescriptor& raw_schema,
                           const ValidateOptions& options) {
    FindingSink sink;
    auto idx = step_index_map(plan);
    std::size_t plan_level = plan.steps.size();

    // Duplicate step ids.
    {
        std::set<std::string> seen;
        for (std::size_t i = 0; i < plan.steps.size(); ++i) {
            if (!seen.insert(plan.steps[i].step_id).second) {
                sink.add(i, "STRUCT_DUP_STEP_ID", plan.steps[i].step_id, Severity::Error,
                         "step_id '" + plan.steps[i].step_id + "' is declared more than once");
            }
        }
    }

    // Per-step checks.
    for (std::size_t i = 0; i < plan.steps.size(); ++i) {
        const PlanStep& s = plan.steps[i];

        if (s.op == "explode_entities") {
            sink.add(i, "POLICY_NO_EXPLODE", s.step_id, Severity::Error,
                     "explode_entities is forbidden: it duplicates rows; extract into new columns "
                     "instead");
        }
        if (!is_vocabulary_op(s.op)) {
            sink.add(i, "STRUCT_UNKNOWN_OP", s.step_id, Severity::Error,
                     "op '" + s.op + "' is not in the operator vocabulary");
            continue;  // params of unknown ops can't be checked further
        }

        if (s.op == "filter_rows" || s.op == "deduplicate_rows") {
            if (!options.allow_row_change) {
                sink.add(i, "POLICY_ROW_CHANGE", s.step_id, Severity::Warning,
                         "op '" + s.op + "' can change the row count; row count must stay the same "
                         "under the default policy");
            }
        }
        if (s.op == "keep_raw_snapshot") {
            sink.add(i, "POLICY_SNAPSHOT_SKIP", s.step_id, Severity::Warning,
                     "keep_raw_snapshot creates _raw duplicates; prefer keeping the original column");
        }
        if ((s.op == "extract_regex" || s.op == "parse_number") && s.params.contains("pattern") &&
            s.params["pattern"].is_string()) {
            if (rx::has_comma_less_numeric_class(s.params["pattern"].get<std::string>())) {
                sink.add(i, "POLICY_COMMA_NUMERIC", s.step_id, Severity::Warning,
                         "numeric pattern lacks a comma: use \"[0-9,]+\" so values like 1,234,567 "
                         "match whole");
            }
        }

        for (const auto& problem : check_op_params(s)) {
            sink.add(i, "STRUCT_PARAMS", s.step_id, Severity::Error, problem);
        }

        // Params must only reference declared reads.
        for (const auto& col : param_columns(s)) {
            if (std::find(s.reads.begin(), s.reads.end(), col) == s.reads.end()) {
                sink.add(i, "STRUCT_PARAMS", s.step_id, Severity::Error,
                         "params reference column '" + col + "' which is not declared in reads");
            }
        }

        // Read/write overlap only for in-place-capable ops.
        if (!is_in_place_op(s.op)) {
            for (const auto& w : s.writes) {
                if (std::find(s.reads.begin(), s.reads.end(), w) != s.reads.end()) {
                    sink.add(i, "STRUCT_WRITE_OVERLAP", s.step_id, Severity::Error,
                             "op '" + s.op + "' writes column '" + w +
                                 "' that it also reads, but is not an in-place operator");
                }
            }
        }

        // Dependency references.
        for (const auto& dep : s.depends_on) {
            auto it = idx.find(dep);
            if (it == idx.end()) {
                sink.add(i, "STRUCT_UNKNOWN_DEP", s.step_id, Severity::Error,
                         "depends_on references unknown step '" + dep + "'");
            } else if (it->second >= i) {
                sink.add(i, "STRUCT_FORWARD_DEP", s.step_id, Severity::Error,
                         "depends_on references step '" + dep + "' which is not declared earlier");
            }
        }

        if (s.op == "custom") {
            std::string name = s.params.contains("name") && s.params["name"].is_string()
                                   ? s.params["name"].get<std::string>()
                                   : "";
            if (!name.empty() && !custom_registry().count(name)) {
                sink.add(i, "STRUCT_UNKNOWN_CUSTOM", s.step_id, Severity::Error,
                         "custom operator '" + name + "' is not registered");
            }
        }
    }

    // Cycle detection + dataflow simulation in topological order.
    bool had_cycle = false;
    std::vector<std::string> order;
    try {
        order = topo_order(plan);
    } catch (const ValidationError& e) {
        had_cycle = true;
        sink.add(plan_level, "STRUCT_CYCLE", "", Severity::Error, e.what());
    }

    std::set<std::string> available;
    for (const auto& c : raw_schema.columns) available.insert(c.name);

    if (!had_cycle) {
        for (const auto& sid : order) {
            const PlanStep& s = plan.steps[idx.at(sid)];
            std::size_t i = idx.at(sid);
            if (!is_vocabulary_op(s.op)) continue;
            for (const auto& r : s.reads) {
                if (!available.count(r)) {
                    sink.add(i, "STRUCT_UNKNOWN_READ", s.step_id, Severity::Error,
                             "reads column '" + r + "' which is neither a raw column nor produced "
                             "by an earlier step");
                }
            }
            // Column effects.
            if (s.op == "rename" && s.params.contains("mapping") && s.params["mapping"].is_object()) {
                for (auto& [oldn, newn] : s.params["mapping"].items()) {
                    available.erase(oldn);
                    if (newn.is_string()) available.insert(newn.get<std::string>());
                }
            } else if (s.op == "select" && s.params.contains("columns") &&
                       s.params["columns"].is_array()) {
                std::set<std::string> kept;
                for (const auto& c : s.params["columns"]) {
                    if (c.is_string() && available.count(c.get<std::string>())) {
                        kept.insert(c.get<std::string>());
                    }
                }
                available = std::move(kept);
            } else {
                for (const auto& w : s.writes) available.insert(w);
            }
        }

        // Duplicate writes by steps with no dependency relationship.
        auto reach = transitive_deps(plan, idx);
        std::map<std::string, std::vector<std::size_t>> writers;
        for (std::size_t i = 0; i < plan.steps.size(); ++i) {
            for (const auto& w : plan.steps[i].writes) writers[w].push_back(i);
        }
        for (const auto& [col, ws] : writers) {
            for (std::size_t a = 0; a < ws.size(); ++a) {
                for (std::size_t b = a + 1; b < ws.size(); ++b) {
                    std::size_t x = ws[a], y = ws[b];
                    if (!reach[x][y] && !reach[y][x]) {
                        sink.add(y, "STRUCT_DUP_WRITE", plan.steps[y].step_id, Severity::Error,
                                 "column '" + col + "' is written by both '" + plan.steps[x].step_id +
                                     "' and '" + plan.steps[y].step_id +
                                     "' with no dependency between them");
                    }
                }
            }
        }

        // final_output columns must survive to the end.
        for (const auto& c : plan.final_output.columns) {
            if (!available.count(c.name)) {
                sink.add(plan_level, "STRUCT_FINAL_UNPRODUCED", "", Severity::Error,
                         "final_output column '" + c.name +
                             "' is not present after the last step (never produced or dropped)");
            }
        }
        for (const auto& k : plan.final_output.primary_key) {
            if (!plan.final_output.has_column(k)) {
                sink.add(plan_level, "STRUCT_FINAL_UNPRODUCED", "", Severity::Error,
                         "primary_key column '" + k + "' is not part of final_output.columns");
            }
        }
    }

    std::stable_sort(sink.items.begin(), sink.items.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    PolicyReport report;
    for (auto& [key, finding] : sink.items) {
        (void)key;
        report.findings.push_back(std::move(finding));
    }
    return report;
}

}  // namespace canontab
