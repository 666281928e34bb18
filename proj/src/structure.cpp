#include "canontab/structure.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "canontab/errors.hpp"
#include "canontab/regex_lite.hpp"
#include "canontab/strutil.hpp"
#include "canontab/table_io.hpp"

namespace canontab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Hierarchy flattening

namespace {

void collect_header_paths(const HeaderNode& node, std::vector<std::string>& prefix,
                          std::vector<std::vector<std::string>>& out) {
    if (node.name.empty()) throw ValidationError("header node has an empty name");
    for (std::size_t i = 0; i + 1 < node.children.size(); ++i) {
        if (node.children[i].name == node.children[i + 1].name) {
            throw ValidationError("duplicate header name '" +
                                  node.children[i].name + "'; flattened form would be ambiguous");
        }
    }
    prefix.push_back(node.name);
    if (node.children.empty()) {
        out.push_back(prefix);
    } else {
        for (const auto& c : node.children) collect_header_paths(c, prefix, out);
    }
    prefix.pop_back();
}

struct GroupRows {
    std::vector<std::vector<std::string>> labels;  // per emitted row
    std::vector<const Table::Row*> cells;
};

void collect_group_rows(const RowGroup& g, std::vector<std::string>& path, GroupRows& out) {
    if (g.label.empty()) throw ValidationError("row group has an empty label");
    for (std::size_t i = 0; i + 1 < g.children.size(); ++i) {
        if (g.children[i].label == g.children[i + 1].label) {
            throw ValidationError("adjacent row groups share the label '" + g.children[i].label +
                                  "'; flattened form would be ambiguous");
        }
    }
    if (g.rows.empty() && g.children.empty()) {
        throw ValidationError("row group '" + g.label + "' contains no rows");
    }
    path.push_back(g.label);
    for (const auto& r : g.rows) {
        out.labels.push_back(path);
        out.cells.push_back(&r);
    }
    for (const auto& c : g.children) collect_group_rows(c, path, out);
    path.pop_back();
}

}  // namespace

FlattenResult flatten_hierarchy(const HierarchicalTable& h) {
    if (h.header.empty()) throw ValidationError("hierarchical table has no header");
    if (!h.rows.empty() && !h.groups.empty()) {
        throw ValidationError("rows must live inside groups when groups are present");
    }
    for (std::size_t i = 0; i + 1 < h.header.size(); ++i) {
        if (h.header[i].name == h.header[i + 1].name) {
            throw ValidationError("duplicate header name '" + h.header[i].name +
                                  "'; flattened form would be ambiguous");
        }
    }

    std::vector<std::vector<std::string>> paths;
    std::vector<std::string> prefix;
    for (const auto& n : h.header) collect_header_paths(n, prefix, paths);

    std::size_t header_depth = 0;
    for (const auto& p : paths) header_depth = std::max(header_depth, p.size());

    FlattenInfo info;
    std::vector<std::string> names;
    bool ragged_header = false;
    for (const auto& p : paths) {
        names.push_back(strutil::join(p, " / "));
        ragged_header = ragged_header || p.size() != header_depth;
        auto padded = p;
        padded.resize(header_depth, "");
        info.header_paths.push_back(std::move(padded));
    }
    if (ragged_header) {
        info.warnings.push_back("header tree is ragged; shorter paths padded with empty levels");
    }

    GroupRows flat;
    if (!h.groups.empty()) {
        for (std::size_t i = 0; i + 1 < h.groups.size(); ++i) {
            if (h.groups[i].label == h.groups[i + 1].label) {
                throw ValidationError("adjacent row groups share the label '" + h.groups[i].label +
                                      "'; flattened form would be ambiguous");
            }
        }
        std::vector<std::string> path;
        for (const auto& g : h.groups) collect_group_rows(g, path, flat);
        for (const auto& l : flat.labels) info.levels = std::max(info.levels, l.size());
        bool ragged_groups = false;
        for (const auto& l : flat.labels) ragged_groups = ragged_groups || l.size() != info.levels;
        if (ragged_groups) {
            info.warnings.push_back(
                "row groups have mixed depth; shallower rows padded with empty labels");
        }
    } else {
        for (const auto& r : h.rows) {
            flat.labels.emplace_back();
            flat.cells.push_back(&r);
        }
    }

    std::vector<Column> columns;
    for (std::size_t l = 1; l <= info.levels; ++l) {
        columns.push_back({"level_" + std::to_string(l), ColumnRole::Canonical, CellKind::Text});
    }
    for (const auto& n : names) columns.push_back({n, ColumnRole::Canonical, std::nullopt});
    std::set<std::string> seen;
    for (const auto& c : columns) {
        if (!seen.insert(c.name).second) {
            throw ValidationError("flattening produces duplicate column name '" + c.name + "'");
        }
    }

    std::vector<Table::Row> rows;
    for (std::size_t i = 0; i < flat.cells.size(); ++i) {
        const Table::Row& src = *flat.cells[i];
        if (src.size() != names.size()) {
            throw ValidationError("row " + std::to_string(i) + " has " +
                                  std::to_string(src.size()) + " cells, expected " +
                                  std::to_string(names.size()));
        }
        Table::Row row;
        for (std::size_t l = 0; l < info.levels; ++l) {
            row.push_back(CellValue::text(l < flat.labels[i].size() ? flat.labels[i][l] : ""));
        }
        row.insert(row.end(), src.begin(), src.end());
        rows.push_back(std::move(row));
    }

    return {Table(h.table_id, h.title, std::move(columns), std::move(rows)), std::move(info)};
}

namespace {

std::vector<std::string> trim_padding(const std::vector<std::string>& path) {
    auto out = path;
    while (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

}  // namespace

HierarchicalTable unflatten_hierarchy(const Table& flat, const FlattenInfo& info) {
    if (info.levels + info.header_paths.size() != flat.column_count()) {
        throw ValidationError("flatten info does not match the table: expected " +
                              std::to_string(info.levels + info.header_paths.size()) +
                              " columns, table has " + std::to_string(flat.column_count()));
    }
    HierarchicalTable h;
    h.table_id = flat.table_id();
    h.title = flat.title();

    // Rebuild the header forest by merging consecutive shared prefixes.
    std::vector<std::vector<std::string>> paths;
    for (const auto& p : info.header_paths) {
        auto trimmed = trim_padding(p);
        if (trimmed.empty()) throw ValidationError("header path is empty");
        paths.push_back(std::move(trimmed));
    }
    std::vector<std::size_t> idx;  // child-index path to the previous leaf
    std::vector<std::string> prev;
    auto node_at = [&](std::size_t depth) -> HeaderNode& {
        HeaderNode* n = &h.header[idx[0]];
        for (std::size_t d = 1; d <= depth; ++d) n = &n->children[idx[d]];
        return *n;
    };
    for (const auto& p : paths) {
        std::size_t common = 0;
        while (common < prev.size() && common < p.size() && prev[common] == p[common]) ++common;
        if (common == p.size() || common == prev.size()) {
            if (!prev.empty()) {
                throw ValidationError("header paths do not form a tree near '" +
                                      strutil::join(p, " / ") + "'");
            }
        }
        idx.resize(common);
        for (std::size_t d = common; d < p.size(); ++d) {
            auto& siblings = d == 0 ? h.header : node_at(d - 1).children;
            siblings.push_back(HeaderNode{p[d], {}});
            idx.push_back(siblings.size() - 1);
        }
        prev = p;
    }

    auto value_cells = [&](std::size_t r) {
        Table::Row row;
        for (std::size_t c = info.levels; c < flat.column_count(); ++c) {
            row.push_back(flat.cell(r, c));
        }
        return row;
    };

    if (info.levels == 0) {
        for (std::size_t r = 0; r < flat.row_count(); ++r) h.rows.push_back(value_cells(r));
        return h;
    }

    // Rebuild groups: consecutive runs of identical label prefixes share a group.
    std::vector<std::size_t> gidx;  // child-index path to the open group chain
    auto group_at = [&](std::size_t depth) -> RowGroup& {
        RowGroup* g = &h.groups[gidx[0]];
        for (std::size_t d = 1; d <= depth; ++d) g = &g->children[gidx[d]];
        return *g;
    };
    for (std::size_t r = 0; r < flat.row_count(); ++r) {
        std::vector<std::string> labels;
        for (std::size_t l = 0; l < info.levels; ++l) {
            const CellValue& v = flat.cell(r, l);
            labels.push_back(v.is_null() ? "" : v.to_text());
        }
        labels = trim_padding(labels);
        if (labels.empty()) {
            throw ValidationError("row " + std::to_string(r) + " has no group labels");
        }
        std::size_t common = 0;
        while (common < gidx.size() && common < labels.size() &&
               group_at(common).label == labels[common]) {
            ++common;
        }
        gidx.resize(common);
        for (std::size_t d = common; d < labels.size(); ++d) {
            auto& siblings = d == 0 ? h.groups : group_at(d - 1).children;
            siblings.push_back(RowGroup{labels[d], {}, {}});
            gidx.push_back(siblings.size() - 1);
        }
        group_at(labels.size() - 1).rows.push_back(value_cells(r));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Hierarchical JSON

namespace {

[[noreturn]] void hier_fail(const std::string& path, const std::string& why) {
    throw ParseError("hierarchical table: " + path + " " + why);
}

std::string j_string(const json& j, const char* key, const std::string& path, bool required,
                     const std::string& fallback = "") {
    if (!j.contains(key)) {
        if (required) hier_fail(path, std::string("is missing required key '") + key + "'");
        return fallback;
    }
    if (!j[key].is_string()) hier_fail(path + "." + key, "must be a string");
    return j[key].get<std::string>();
}

const json* j_array(const json& j, const char* key, const std::string& path, bool required) {
    if (!j.contains(key)) {
        if (required) hier_fail(path, std::string("is missing required key '") + key + "'");
        return nullptr;
    }
    if (!j[key].is_array()) hier_fail(path + "." + key, "must be an array");
    return &j[key];
}

Table::Row row_from_json(const json& j, const std::string& path) {
    if (!j.is_array()) hier_fail(path, "must be an array of cells");
    Table::Row row;
    for (std::size_t i = 0; i < j.size(); ++i) {
        try {
            row.push_back(cell_from_json(j[i]));
        } catch (const ValidationError& e) {
            hier_fail(path + "[" + std::to_string(i) + "]", e.what());
        }
    }
    return row;
}

HeaderNode header_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) hier_fail(path, "must be an object");
    HeaderNode n;
    n.name = j_string(j, "name", path, true);
    if (const json* kids = j_array(j, "children", path, false)) {
        for (std::size_t i = 0; i < kids->size(); ++i) {
            n.children.push_back(header_from_json((*kids)[i], path + ".children[" +
                                                                  std::to_string(i) + "]"));
        }
    }
    return n;
}

RowGroup group_from_json(const json& j, const std::string& path) {
    if (!j.is_object()) hier_fail(path, "must be an object");
    RowGroup g;
    g.label = j_string(j, "label", path, true);
    if (const json* rows = j_array(j, "rows", path, false)) {
        for (std::size_t i = 0; i < rows->size(); ++i) {
            g.rows.push_back(row_from_json((*rows)[i], path + ".rows[" + std::to_string(i) + "]"));
        }
    }
    if (const json* kids = j_array(j, "children", path, false)) {
        for (std::size_t i = 0; i < kids->size(); ++i) {
            g.children.push_back(group_from_json((*kids)[i], path + ".children[" +
                                                                 std::to_string(i) + "]"));
        }
    }
    return g;
}

json header_to_json(const HeaderNode& n) {
    json j{{"name", n.name}};
    if (!n.children.empty()) {
        j["children"] = json::array();
        for (const auto& c : n.children) j["children"].push_back(header_to_json(c));
    }
    return j;
}

json row_to_json(const Table::Row& row) {
    json j = json::array();
    for (const auto& c : row) j.push_back(cell_to_json(c));
    return j;
}

json group_to_json(const RowGroup& g) {
    json j{{"label", g.label}};
    if (!g.rows.empty()) {
        j["rows"] = json::array();
        for (const auto& r : g.rows) j["rows"].push_back(row_to_json(r));
    }
    if (!g.children.empty()) {
        j["children"] = json::array();
        for (const auto& c : g.children) j["children"].push_back(group_to_json(c));
    }
    return j;
}

}  // namespace

HierarchicalTable hier_from_json(const json& j) {
    if (!j.is_object()) throw ParseError("hierarchical table: root must be an object");
    HierarchicalTable h;
    h.table_id = j_string(j, "table_id", "root", true);
    h.title = j_string(j, "title", "root", false);
    const json* header = j_array(j, "header", "root", true);
    for (std::size_t i = 0; i < header->size(); ++i) {
        h.header.push_back(header_from_json((*header)[i], "header[" + std::to_string(i) + "]"));
    }
    if (const json* rows = j_array(j, "rows", "root", false)) {
        for (std::size_t i = 0; i < rows->size(); ++i) {
            h.rows.push_back(row_from_json((*rows)[i], "rows[" + std::to_string(i) + "]"));
        }
    }
    if (const json* groups = j_array(j, "groups", "root", false)) {
        for (std::size_t i = 0; i < groups->size(); ++i) {
            h.groups.push_back(group_from_json((*groups)[i], "groups[" + std::to_string(i) + "]"));
        }
    }
    return h;
}

json hier_to_json(const HierarchicalTable& h) {
    json j{{"table_id", h.table_id}};
    if (!h.title.empty()) j["title"] = h.title;
    j["header"] = json::array();
    for (const auto& n : h.header) j["header"].push_back(header_to_json(n));
    if (!h.rows.empty()) {
        j["rows"] = json::array();
        for (const auto& r : h.rows) j["rows"].push_back(row_to_json(r));
    }
    if (!h.groups.empty()) {
        j["groups"] = json::array();
        for (const auto& g : h.groups) j["groups"].push_back(group_to_json(g));
    }
    return j;
}

json FlattenInfo::to_json() const {
    json paths = json::array();
    for (const auto& p : header_paths) paths.push_back(p);
    return json{{"header_paths", std::move(paths)}, {"levels", levels}, {"warnings", warnings}};
}

FlattenInfo FlattenInfo::from_json(const json& j) {
    if (!j.is_object() || !j.contains("header_paths") || !j["header_paths"].is_array() ||
        !j.contains("levels") || !j["levels"].is_number_unsigned()) {
        throw ParseError("flatten info: expected {header_paths, levels, warnings}");
    }
    FlattenInfo info;
    for (const auto& p : j["header_paths"]) {
        if (!p.is_array()) throw ParseError("flatten info: header path must be an array");
        std::vector<std::string> path;
        for (const auto& seg : p) {
            if (!seg.is_string()) throw ParseError("flatten info: path segment must be a string");
            path.push_back(seg.get<std::string>());
        }
        info.header_paths.push_back(std::move(path));
    }
    info.levels = j["levels"].get<std::size_t>();
    if (j.contains("warnings")) {
        for (const auto& w : j["warnings"]) info.warnings.push_back(w.get<std::string>());
    }
    return info;
}

// ---------------------------------------------------------------------------
// Recovery rules

json RecoveryRule::to_json() const { return json{{"kind", kind}, {"params", params}}; }

const char* loss_status_name(LossStatus s) {
    switch (s) {
        case LossStatus::Retained: return "retained";
        case LossStatus::FullyCaptured: return "fully_captured";
        case LossStatus::Snapshot: return "snapshot";
        case LossStatus::Missing: return "missing";
    }
    return "missing";
}

namespace {

// Splits on every occurrence of a (non-empty) separator string.
std::vector<std::string> split_on(const std::string& s, const std::string& sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        std::size_t at = s.find(sep, start);
        if (at == std::string::npos) {
            parts.push_back(s.substr(start));
            return parts;
        }
        parts.push_back(s.substr(start, at - start));
        start = at + sep.size();
    }
}

// A raw cell that was Null in the canonical world: plain rules rebuild Null,
// `null_text` variants rebuild that text (raw tables ingest blanks as "").
CellValue rebuilt_null(const json& params) {
    if (params.contains("null_text")) return CellValue::text(params["null_text"].get<std::string>());
    return CellValue::null();
}

// Applies one rule to one canonical row. nullopt means the rule cannot speak
// for this row (referenced column missing, split arity off, ...), which the
// verifier treats as a mismatch.
std::optional<CellValue> apply_rule(const RecoveryRule& rule, const Table& t, std::size_t row) {
    const json& p = rule.params;
    auto col = [&](const char* key) -> std::optional<std::size_t> {
        if (!p.contains(key) || !p[key].is_string()) return std::nullopt;
        return t.column_index(p[key].get<std::string>());
    };

    if (rule.kind == "copy_column") {
        auto c = col("source");
        if (!c) return std::nullopt;
        return t.cell(row, *c);
    }
    if (rule.kind == "cast_text" || rule.kind == "date_iso") {
        auto c = col("source");
        if (!c) return std::nullopt;
        const CellValue& v = t.cell(row, *c);
        if (v.is_null()) return rebuilt_null(p);
        return CellValue::text(v.to_text());
    }
    if (rule.kind == "number_unit") {
        auto c = col("value");
        if (!c) return std::nullopt;
        std::optional<std::size_t> u;
        if (p.contains("unit")) {
            u = col("unit");
            if (!u) return std::nullopt;
        }
        const CellValue& v = t.cell(row, *c);
        if (v.is_null()) {
            if (u && !t.cell(row, *u).is_null()) return std::nullopt;
            return rebuilt_null(p);
        }
        std::string s = v.to_text();
        if (u && !t.cell(row, *u).is_null()) {
            s += p["separator"].get<std::string>() + t.cell(row, *u).to_text();
        }
        return CellValue::text(s);
    }
    if (rule.kind == "regex_template") {
        std::string s;
        std::size_t group_cells = 0, null_cells = 0;
        for (const auto& part : p["parts"]) {
            if (part.contains("literal")) {
                s += part["literal"].get<std::string>();
                continue;
            }
            auto c = t.column_index(part["column"].get<std::string>());
            if (!c) return std::nullopt;
            ++group_cells;
            const CellValue& v = t.cell(row, *c);
            if (v.is_null()) {
                ++null_cells;
            } else {
                s += v.to_text();
            }
        }
        if (null_cells == group_cells && group_cells > 0) return rebuilt_null(p);
        if (null_cells > 0) return std::nullopt;
        return CellValue::text(s);
    }
    if (rule.kind == "inverse_map") {
        auto c = col("source");
        if (!c) return std::nullopt;
        const CellValue& v = t.cell(row, *c);
        if (v.is_null()) return CellValue::null();
        std::string key = v.to_text();
        const json& mapping = p["mapping"];
        if (mapping.contains(key)) return CellValue::text(mapping[key].get<std::string>());
        return v;  // unmapped cells passed through unchanged
    }
    if (rule.kind == "split_part") {
        auto c = col("source");
        if (!c) return std::nullopt;
        const CellValue& v = t.cell(row, *c);
        if (v.is_null()) return rebuilt_null(p);
        auto parts = split_on(v.to_text(), p["separator"].get<std::string>());
        if (parts.size() != p["count"].get<std::size_t>()) return std::nullopt;
        return CellValue::text(parts[p["index"].get<std::size_t>()]);
    }
    return std::nullopt;
}

// Column references inside a rule, renamed in one simultaneous pass.
void rewrite_rule(RecoveryRule& rule, const std::map<std::string, std::string>& renames) {
    auto fix = [&](json& slot) {
        if (!slot.is_string()) return;
        auto it = renames.find(slot.get<std::string>());
        if (it != renames.end()) slot = it->second;
    };
    for (const char* key : {"source", "value", "unit"}) {
        if (rule.params.contains(key)) fix(rule.params[key]);
    }
    if (rule.params.contains("parts")) {
        for (auto& part : rule.params["parts"]) {
            if (part.contains("column")) fix(part["column"]);
        }
    }
}

struct Candidate {
    std::string raw_column;
    RecoveryRule rule;
};

json get_or(const json& params, const char* key, const json& fallback) {
    return params.contains(key) ? params[key] : fallback;
}

// Walks the plan in execution order and collects invertible transformations
// as recovery-rule candidates against the final canonical column names.
std::vector<Candidate> generate_candidates(const TransformationPlan& plan, const Table& raw) {
    std::vector<Candidate> out;
    std::map<std::string, std::string> alias;  // current column name -> raw name
    for (const auto& c : raw.columns()) alias[c.name] = c.name;

    auto raw_of = [&](const json& name) -> std::optional<std::string> {
        if (!name.is_string()) return std::nullopt;
        auto it = alias.find(name.get<std::string>());
        if (it == alias.end()) return std::nullopt;
        return it->second;
    };
    auto add = [&](const std::string& raw_col, const std::string& kind, json params) {
        out.push_back({raw_col, {kind, std::move(params)}});
        json with_null = out.back().rule.params;
        with_null["null_text"] = "";
        out.push_back({raw_col, {kind, std::move(with_null)}});
    };

    std::map<std::string, const PlanStep*> by_id;
    for (const auto& s : plan.steps) by_id[s.step_id] = &s;

    for (const std::string& sid : topo_order(plan)) {
        const PlanStep& s = *by_id.at(sid);
        const json& p = s.params;
        if (s.op == "rename") {
            if (!p.contains("mapping") || !p["mapping"].is_object()) continue;
            std::map<std::string, std::string> renames;
            for (const auto& [from, to] : p["mapping"].items()) {
                if (to.is_string()) renames[from] = to.get<std::string>();
            }
            for (auto& c : out) rewrite_rule(c.rule, renames);
            std::map<std::string, std::string> next = alias;
            for (const auto& [from, to] : renames) next.erase(from);
            for (const auto& [from, to] : renames) {
                auto it = alias.find(from);
                if (it != alias.end()) next[to] = it->second;
            }
            alias = std::move(next);
        } else if (s.op == "select") {
            if (!p.contains("columns") || !p["columns"].is_array()) continue;
            std::set<std::string> keep;
            for (const auto& c : p["columns"]) {
                if (c.is_string()) keep.insert(c.get<std::string>());
            }
            for (auto it = alias.begin(); it != alias.end();) {
                it = keep.count(it->first) ? std::next(it) : alias.erase(it);
            }
        } else if (s.op == "parse_date_text") {
            auto r = raw_of(get_or(p, "source", {}));
            if (!r || !p.contains("target") || !p["target"].is_string()) continue;
            add(*r, "date_iso", json{{"source", p["target"]}});
        } else if (s.op == "parse_number") {
            auto r = raw_of(get_or(p, "source", {}));
            if (!r || !p.contains("target") || !p["target"].is_string()) continue;
            if (p.contains("unit_target") && p["unit_target"].is_string()) {
                for (const char* sep : {" ", ""}) {
                    add(*r, "number_unit",
                        json{{"value", p["target"]}, {"unit", p["unit_target"]}, {"separator", sep}});
                }
            } else {
                add(*r, "number_unit", json{{"value", p["target"]}});
            }
        } else if (s.op == "extract_regex") {
            auto r = raw_of(get_or(p, "source", {}));
            if (!r || !p.contains("pattern") || !p["pattern"].is_string()) continue;
            auto tmpl = rx::decompose_literal_groups(p["pattern"].get<std::string>());
            if (!tmpl) continue;
            const json& targets = get_or(p, "targets", json::object());
            json parts = json::array();
            bool complete = true;
            std::size_t groups = 0;
            for (const auto& part : *tmpl) {
                if (part.group == 0) {
                    parts.push_back(json{{"literal", part.literal}});
                    continue;
                }
                ++groups;
                std::string key = std::to_string(part.group);
                if (!targets.contains(key) || !targets[key].is_string()) {
                    complete = false;
                    break;
                }
                parts.push_back(json{{"column", targets[key]}});
            }
            if (!complete || groups == 0) continue;
            add(*r, "regex_template", json{{"parts", std::move(parts)}});
        } else if (s.op == "cast_column") {
            auto src = get_or(p, "source", {});
            auto r = raw_of(src);
            if (!r) continue;
            add(*r, "cast_text", json{{"source", get_or(p, "target", src)}});
        } else if (s.op == "map_values") {
            auto src = get_or(p, "source", {});
            auto r = raw_of(src);
            if (!r || !p.contains("mapping") || !p["mapping"].is_object()) continue;
            json inverse = json::object();
            bool invertible = true;
            for (const auto& [from, to] : p["mapping"].items()) {
                if (to.is_null()) {
                    invertible = false;
                    break;
                }
                std::string key;
                try {
                    key = cell_from_json(to).to_text();
                } catch (const ValidationError&) {
                    invertible = false;
                    break;
                }
                if (inverse.contains(key)) {
                    invertible = false;  // two raw values collapse to one
                    break;
                }
                inverse[key] = from;
            }
            if (!invertible) continue;
            out.push_back({*r, {"inverse_map",
                                json{{"source", get_or(p, "target", src)},
                                     {"mapping", std::move(inverse)}}}});
        } else if (s.op == "combine_columns") {
            if (!p.contains("sources") || !p["sources"].is_array() || !p.contains("target") ||
                !p["target"].is_string()) {
                continue;
            }
            std::string sep = " ";
            if (p.contains("separator") && p["separator"].is_string()) {
                sep = p["separator"].get<std::string>();
            }
            if (sep.empty()) continue;  // unsplittable
            std::size_t count = p["sources"].size();
            for (std::size_t i = 0; i < count; ++i) {
                auto r = raw_of(p["sources"][i]);
                if (!r) continue;
                add(*r, "split_part",
                    json{{"source", p["target"]}, {"separator", sep}, {"index", i},
                         {"count", count}});
            }
        }
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Losslessness audit

LossAudit audit_losslessness(const Table& raw, const Table& canonical,
                             const TransformationPlan& plan,
                             const std::vector<StepTrace>& traces) {
    LossAudit audit;
    audit.raw_rows = raw.row_count();
    audit.row_map = compose_row_maps(traces, raw.row_count());

    std::vector<bool> hit(raw.row_count(), false);
    bool bijective = audit.row_map.size() == raw.row_count();
    for (std::size_t r : audit.row_map) {
        if (r >= raw.row_count() || hit[r]) {
            bijective = false;
            break;
        }
        hit[r] = true;
    }
    audit.rows_bijective = bijective;
    if (!bijective) {
        audit.notes.push_back("canonical rows do not map one-to-one onto raw rows (" +
                              std::to_string(audit.row_map.size()) + " of " +
                              std::to_string(raw.row_count()) + " survive); dropped rows are gone");
    }

    // Compares raw column `rc` against what `get` rebuilds per canonical row;
    // returns the first mismatch description, or nullopt when all rows agree.
    auto first_mismatch = [&](std::size_t rc,
                              const std::function<std::optional<CellValue>(std::size_t)>& get)
        -> std::optional<std::string> {
        if (!bijective) return "row mapping is not invertible";
        for (std::size_t i = 0; i < audit.row_map.size(); ++i) {
            const CellValue& want = raw.cell(audit.row_map[i], rc);
            auto got = get(i);
            if (!got || !(*got == want)) {
                return "raw row " + std::to_string(audit.row_map[i]) + ": rebuilt " +
                       (got ? "\"" + got->to_text() + "\"" : "nothing") + " != raw \"" +
                       want.to_text() + "\"";
            }
        }
        return std::nullopt;
    };
    auto column_matches = [&](std::size_t rc, std::size_t cc) -> std::optional<std::string> {
        return first_mismatch(rc, [&](std::size_t i) -> std::optional<CellValue> {
            return canonical.cell(i, cc);
        });
    };

    auto candidates = generate_candidates(plan, raw);

    for (std::size_t rc = 0; rc < raw.column_count(); ++rc) {
        const std::string& name = raw.columns()[rc].name;
        ColumnAudit ca;
        ca.column = name;
        std::string detail;

        // 1) the column survived under its own name
        if (auto cc = canonical.column_index(name)) {
            auto miss = column_matches(rc, *cc);
            if (!miss) {
                ca.status = LossStatus::Retained;
                ca.via = name;
                audit.columns.push_back(std::move(ca));
                continue;
            }
            detail = *miss;
        } else {
            detail = "not present in the canonical table under its own name";
        }

        // 2) a verbatim snapshot column
        bool done = false;
        for (std::size_t cc = 0; cc < canonical.column_count() && !done; ++cc) {
            const Column& col = canonical.columns()[cc];
            if (col.name != name + "_raw" && col.role != ColumnRole::RawSnapshot) continue;
            if (!column_matches(rc, cc)) {
                ca.status = LossStatus::Snapshot;
                ca.via = col.name;
                done = true;
            }
        }
        // 3) any other column carrying the values verbatim (renames, copies)
        for (std::size_t cc = 0; cc < canonical.column_count() && !done; ++cc) {
            if (canonical.columns()[cc].name == name) continue;
            if (!column_matches(rc, cc)) {
                ca.status = LossStatus::FullyCaptured;
                ca.via = canonical.columns()[cc].name;
                ca.rule = RecoveryRule{"copy_column", json{{"source", ca.via}}};
                done = true;
            }
        }
        // 4) an invertible transformation verified cell by cell
        for (const auto& cand : candidates) {
            if (done) break;
            if (cand.raw_column != name) continue;
            auto miss = first_mismatch(rc, [&](std::size_t i) {
                return apply_rule(cand.rule, canonical, i);
            });
            if (!miss) {
                ca.status = LossStatus::FullyCaptured;
                ca.rule = cand.rule;
                done = true;
            } else if (detail.empty() ||
                       detail == "not present in the canonical table under its own name") {
                detail = *miss;
            }
        }
        if (!done) {
            ca.status = LossStatus::Missing;
            ca.detail = detail.empty() ? "no canonical column or rule reproduces it" : detail;
            audit.snapshots_needed.push_back(name);
        }
        audit.columns.push_back(std::move(ca));
    }

    audit.lossless = audit.rows_bijective && audit.snapshots_needed.empty();
    return audit;
}

Table recover_raw(const Table& canonical, const LossAudit& audit) {
    if (!audit.lossless) {
        throw ValidationError("audit is not lossless; the raw table cannot be rebuilt");
    }
    std::vector<std::size_t> inverse(audit.raw_rows);
    for (std::size_t i = 0; i < audit.row_map.size(); ++i) inverse[audit.row_map[i]] = i;

    std::vector<Column> columns;
    std::vector<Table::Row> rows(audit.raw_rows);
    for (const ColumnAudit& ca : audit.columns) {
        columns.push_back({ca.column, ColumnRole::Canonical, std::nullopt});
        for (std::size_t r = 0; r < audit.raw_rows; ++r) {
            std::size_t i = inverse[r];
            CellValue v;
            if (ca.status == LossStatus::Retained || ca.status == LossStatus::Snapshot) {
                auto cc = canonical.column_index(ca.via);
                if (!cc) throw ExecutionError("recovery column vanished: " + ca.via);
                v = canonical.cell(i, *cc);
            } else {
                auto got = apply_rule(*ca.rule, canonical, i);
                if (!got) {
                    throw ExecutionError("recovery rule failed for column " + ca.column);
                }
                v = std::move(*got);
            }
            rows[r].push_back(std::move(v));
        }
    }
    return Table(canonical.table_id(), canonical.title(), std::move(columns), std::move(rows));
}

// ---------------------------------------------------------------------------
// Snapshot repair

TransformationPlan add_snapshot_steps(const TransformationPlan& plan,
                                      const std::vector<std::string>& columns) {
    TransformationPlan out = plan;
    std::set<std::string> ids;
    for (const auto& s : plan.steps) ids.insert(s.step_id);

    std::vector<PlanStep> snaps;
    for (const std::string& col : columns) {
        std::string snap_col = col + "_raw";
        for (const auto& s : plan.steps) {
            if (std::find(s.writes.begin(), s.writes.end(), snap_col) != s.writes.end()) {
                throw ValidationError("cannot snapshot '" + col + "': step " + s.step_id +
                                      " already writes '" + snap_col + "'");
            }
        }
        PlanStep snap;
        snap.step_id = "snapshot_" + col;
        for (int n = 2; ids.count(snap.step_id); ++n) {
            snap.step_id = "snapshot_" + col + "_" + std::to_string(n);
        }
        ids.insert(snap.step_id);
        snap.op = "keep_raw_snapshot";
        snap.description = "preserve the original '" + col + "' column verbatim";
        snap.reads = {col};
        snap.writes = {snap_col};
        snap.params = json{{"source", col}};
        snaps.push_back(std::move(snap));

        for (auto& s : out.steps) {
            if (s.op != "select") continue;
            if (s.params.contains("columns") && s.params["columns"].is_array()) {
                s.params["columns"].push_back(snap_col);
            }
            s.reads.push_back(snap_col);
        }
        if (!out.final_output.columns.empty()) {
            out.final_output.columns.push_back({snap_col, ColumnRole::RawSnapshot, std::nullopt});
        }
    }
    out.steps.insert(out.steps.begin(), snaps.begin(), snaps.end());
    return out;
}

LosslessRun ensure_lossless(const TransformationPlan& plan, const Table& raw,
                            const ExecutePolicy& policy) {
    LosslessRun run;
    run.plan = plan;
    run.result = execute_plan(plan, raw, policy);
    run.audit = audit_losslessness(raw, run.result.table, plan, run.result.traces);
    if (!run.audit.lossless && run.audit.rows_bijective && !run.audit.snapshots_needed.empty()) {
        run.plan = add_snapshot_steps(plan, run.audit.snapshots_needed);
        run.result = execute_plan(run.plan, raw, policy);
        run.audit = audit_losslessness(raw, run.result.table, run.plan, run.result.traces);
        run.snapshots_added = true;
    }
    return run;
}

json LossAudit::to_json() const {
    json cols = json::array();
    for (const auto& c : columns) {
        json jc{{"column", c.column}, {"status", loss_status_name(c.status)}};
        if (!c.via.empty()) jc["via"] = c.via;
        if (c.rule) jc["rule"] = c.rule->to_json();
        if (!c.detail.empty()) jc["detail"] = c.detail;
        cols.push_back(std::move(jc));
    }
    return json{{"lossless", lossless},
                {"rows_bijective", rows_bijective},
                {"raw_rows", raw_rows},
                {"row_map", row_map},
                {"columns", std::move(cols)},
                {"snapshots_needed", snapshots_needed},
                {"notes", notes}};
}

}  // namespace canontab
