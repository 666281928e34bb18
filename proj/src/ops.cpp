#include "canontab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "canontab/dates.hpp"
#include "canontab/errors.hpp"
#include "canontab/exprs.hpp"
#include "canontab/regex_lite.hpp"
#include "canontab/strutil.hpp"
#include "canontab/table_io.hpp"

namespace canontab {

namespace {

using nlohmann::json;

// --- params access ---------------------------------------------------------

[[noreturn]] void bad_params(const PlanStep& step, const std::string& why) {
    throw ExecutionError("step " + step.step_id + " (" + step.op + "): " + why, step.step_id);
}

std::string need_string(const PlanStep& step, const char* key) {
    if (!step.params.contains(key) || !step.params[key].is_string()) {
        bad_params(step, std::string("param '") + key + "' must be a string");
    }
    return step.params[key].get<std::string>();
}

std::string opt_string(const PlanStep& step, const char* key, const std::string& fallback) {
    if (!step.params.contains(key)) return fallback;
    if (!step.params[key].is_string()) {
        bad_params(step, std::string("param '") + key + "' must be a string");
    }
    return step.params[key].get<std::string>();
}

bool opt_bool(const PlanStep& step, const char* key, bool fallback) {
    if (!step.params.contains(key)) return fallback;
    if (!step.params[key].is_boolean()) {
        bad_params(step, std::string("param '") + key + "' must be a boolean");
    }
    return step.params[key].get<bool>();
}

// Sanitized category fragment for one_hot column names.
std::string sanitize_category(const std::string& value) {
    std::string out;
    bool last_us = false;
    for (char c : strutil::to_lower_ascii(value)) {
        bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9');
        if (ok) {
            out.push_back(c);
            last_us = false;
        } else if (!last_us && !out.empty()) {
            out.push_back('_');
            last_us = true;
        }
    }
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out.empty() ? "blank" : out;
}

// --- individual operators --------------------------------------------------

std::vector<OutCol> op_parse_date_text(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = need_string(step, "target");
    std::vector<std::string> formats;
    if (step.params.contains("formats")) {
        for (const auto& f : step.params["formats"]) formats.push_back(f.get<std::string>());
    }
    std::size_t src = view.require_column(source);

    bool day_first = false;
    for (const auto& row : view.rows()) {
        if (!row[src].is_null() && row[src].kind() == CellKind::Text &&
            slash_date_forces_day_first(row[src].as_text())) {
            day_first = true;
            break;
        }
    }

    OutCol out{target, ColumnRole::Derived, CellKind::Date, {}};
    for (const auto& row : view.rows()) {
        const CellValue& cell = row[src];
        if (cell.is_null()) {
            out.values.push_back(CellValue::null());
        } else if (cell.kind() == CellKind::Date) {
            out.values.push_back(cell);
        } else {
            auto d = parse_date_text(cell.to_text(), formats, day_first);
            out.values.push_back(d ? CellValue::date(*d) : CellValue::null());
        }
    }
    return {std::move(out)};
}

std::vector<OutCol> op_parse_number(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = need_string(step, "target");
    std::string unit_target = opt_string(step, "unit_target", "");
    std::string pattern = opt_string(step, "pattern", "[0-9,]+(\\.[0-9]+)?");
    auto re = rx::Regex::compile(pattern);
    std::size_t src = view.require_column(source);

    OutCol values{target, ColumnRole::Derived, std::nullopt, {}};
    OutCol units{unit_target, ColumnRole::Derived, CellKind::Text, {}};
    for (const auto& row : view.rows()) {
        const CellValue& cell = row[src];
        if (cell.is_null()) {
            values.values.push_back(CellValue::null());
            units.values.push_back(CellValue::null());
            continue;
        }
        std::string text = cell.to_text();
        auto m = re.search(text);
        if (!m) {
            values.values.push_back(CellValue::null());
            units.values.push_back(CellValue::null());
            continue;
        }
        std::string matched = text.substr(m->whole.begin, m->whole.end - m->whole.begin);
        std::string digits;
        for (char c : matched) {
            if (c != ',') digits.push_back(c);
        }
        if (digits.find('.') == std::string::npos) {
            auto i = strutil::parse_integer(digits);
            if (i) {
                values.values.push_back(CellValue::integer(*i));
            } else {
                auto f = strutil::parse_float(digits);  // integer too large for int64
                values.values.push_back(f ? CellValue::floating(*f) : CellValue::null());
            }
        } else {
            auto f = strutil::parse_float(digits);
            values.values.push_back(f ? CellValue::floating(*f) : CellValue::null());
        }
        std::string rest = strutil::trim_unicode(text.substr(m->whole.end));
        units.values.push_back(rest.empty() ? CellValue::null() : CellValue::text(rest));
    }

    std::vector<OutCol> out;
    out.push_back(std::move(values));
    if (!unit_target.empty()) out.push_back(std::move(units));
    return out;
}

std::vector<OutCol> op_extract_regex(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string pattern = need_string(step, "pattern");
    auto re = rx::Regex::compile(pattern);
    if (!step.params.contains("targets") || !step.params["targets"].is_object()) {
        bad_params(step, "param 'targets' must map group numbers to column names");
    }
    std::vector<std::pair<std::size_t, std::string>> targets;  // (group, column)
    for (auto& [k, v] : step.params["targets"].items()) {
        auto g = strutil::parse_integer(k);
        if (!g || *g < 1 || static_cast<std::size_t>(*g) > re.group_count()) {
            bad_params(step, "targets key '" + k + "' is not a valid capture group (pattern has " +
                                 std::to_string(re.group_count()) + ")");
        }
        targets.emplace_back(static_cast<std::size_t>(*g), v.get<std::string>());
    }
    std::sort(targets.begin(), targets.end());
    std::size_t src = view.require_column(source);

    std::vector<OutCol> out;
    for (auto& [g, col] : targets) out.push_back({col, ColumnRole::Derived, CellKind::Text, {}});
    for (const auto& row : view.rows()) {
        const CellValue& cell = row[src];
        std::optional<rx::MatchResult> m;
        std::string text;
        if (!cell.is_null()) {
            text = cell.to_text();
            m = re.search(text);
        }
        for (std::size_t t = 0; t < targets.size(); ++t) {
            if (m && targets[t].first <= m->groups.size() && m->groups[targets[t].first - 1]) {
                auto sp = *m->groups[targets[t].first - 1];
                out[t].values.push_back(CellValue::text(text.substr(sp.begin, sp.end - sp.begin)));
            } else {
                out[t].values.push_back(CellValue::null());
            }
        }
    }
    return out;
}

std::vector<OutCol> op_derive_conditional(const PlanStep& step, const Table& view) {
    if (!step.params.contains("rules") || !step.params["rules"].is_array()) {
        bad_params(step, "param 'rules' must be an array of {condition, value}");
    }
    std::string target = need_string(step, "target");
    std::vector<std::pair<ConditionExpr, CellValue>> rules;
    for (const auto& r : step.params["rules"]) {
        rules.emplace_back(ConditionExpr::parse(r.at("condition").get<std::string>()),
                           cell_from_json(r.at("value")));
    }
    CellValue dflt = step.params.contains("default") ? cell_from_json(step.params["default"])
                                                     : CellValue::null();

    OutCol out{target, ColumnRole::Derived, std::nullopt, {}};
    for (std::size_t r = 0; r < view.row_count(); ++r) {
        CellValue v = dflt;
        for (const auto& [cond, val] : rules) {
            if (cond.evaluate(view, r)) {
                v = val;
                break;
            }
        }
        out.values.push_back(v);
    }
    return {std::move(out)};
}

std::vector<OutCol> op_derive_math(const PlanStep& step, const Table& view) {
    std::string target = need_string(step, "target");
    MathExpr expr = MathExpr::parse(need_string(step, "expr"));
    OutCol out{target, ColumnRole::Derived, std::nullopt, {}};
    for (std::size_t r = 0; r < view.row_count(); ++r) {
        out.values.push_back(expr.evaluate(view, r));
    }
    return {std::move(out)};
}

std::vector<OutCol> op_map_values(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = opt_string(step, "target", source);
    bool strict = opt_bool(step, "strict", false);
    if (!step.params.contains("mapping") || !step.params["mapping"].is_object()) {
        bad_params(step, "param 'mapping' must be an object of raw -> value");
    }
    std::unordered_map<std::string, CellValue> mapping;
    for (auto& [k, v] : step.params["mapping"].items()) mapping.emplace(k, cell_from_json(v));
    std::size_t src = view.require_column(source);

    OutCol out{target, ColumnRole::Derived, std::nullopt, {}};
    for (std::size_t r = 0; r < view.row_count(); ++r) {
        const CellValue& cell = view.cell(r, src);
        if (cell.is_null()) {
            out.values.push_back(CellValue::null());
            continue;
        }
        auto it = mapping.find(cell.to_text());
        if (it != mapping.end()) {
            out.values.push_back(it->second);
        } else if (strict) {
            throw ExecutionError("step " + step.step_id + ": value '" + cell.to_text() +
                                     "' has no mapping (strict mode)",
                                 step.step_id, static_cast<long>(r));
        } else {
            out.values.push_back(cell);
        }
    }
    return {std::move(out)};
}

std::vector<OutCol> op_replace_value(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = opt_string(step, "target", source);
    if (!step.params.contains("old") || !step.params.contains("new")) {
        bad_params(step, "params 'old' and 'new' are required");
    }
    CellValue oldv = cell_from_json(step.params["old"]);
    CellValue newv = cell_from_json(step.params["new"]);
    std::size_t src = view.require_column(source);

    OutCol out{target, ColumnRole::Derived, std::nullopt, {}};
    for (const auto& row : view.rows()) {
        out.values.push_back(row[src] == oldv ? newv : row[src]);
    }
    return {std::move(out)};
}

std::vector<OutCol> op_replace_string(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = opt_string(step, "target", source);
    std::string oldv = need_string(step, "old");
    std::string newv = need_string(step, "new");
    bool use_regex = opt_bool(step, "regex", false);
    if (!use_regex && oldv.empty()) bad_params(step, "param 'old' must be non-empty in plain mode");
    std::optional<rx::Regex> re;
    if (use_regex) re = rx::Regex::compile(oldv);
    std::size_t src = view.require_column(source);

    OutCol out{target, ColumnRole::Derived, std::nullopt, {}};
    for (const auto& row : view.rows()) {
        const CellValue& cell = row[src];
        if (cell.kind() != CellKind::Text) {
            out.values.push_back(cell);
            continue;
        }
        const std::string& text = cell.as_text();
        if (use_regex) {
            out.values.push_back(CellValue::text(re->replace_all(text, newv)));
        } else {
            std::string result;
            std::size_t pos = 0;
            while (true) {
                std::size_t hit = text.find(oldv, pos);
                if (hit == std::string::npos) {
                    result.append(text.substr(pos));
                    break;
                }
                result.append(text.substr(pos, hit - pos));
                result.append(newv);
                pos = hit + oldv.size();
            }
            out.values.push_back(CellValue::text(result));
        }
    }
    return {std::move(out)};
}

const char* kCastKinds[] = {"integer", "float", "boolean", "date", "text"};

std::vector<OutCol> op_cast_column(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = opt_string(step, "target", source);
    std::string to = need_string(step, "to");
    bool strict = opt_bool(step, "strict", false);
    auto kind = kind_from_name(to);
    if (!kind || *kind == CellKind::Null) bad_params(step, "unknown cast kind '" + to + "'");
    std::size_t src = view.require_column(source);

    auto cast_one = [&](const CellValue& cell) -> std::optional<CellValue> {
        if (cell.kind() == *kind) return cell;
        switch (*kind) {
            case CellKind::Integer: {
                if (cell.kind() == CellKind::Float) {
                    double d = cell.as_float();
                    if (d == std::floor(d) && d >= -9.2e18 && d <= 9.2e18) {
                        return CellValue::integer(static_cast<std::int64_t>(d));
                    }
                    return std::nullopt;
                }
                if (cell.kind() == CellKind::Boolean) return CellValue::integer(cell.as_boolean() ? 1 : 0);
                if (cell.kind() == CellKind::Text) {
                    std::string t = strutil::trim_unicode(cell.as_text());
                    if (auto i = strutil::parse_integer(t)) return CellValue::integer(*i);
                    if (auto f = strutil::parse_float(t)) {
                        if (*f == std::floor(*f) && *f >= -9.2e18 && *f <= 9.2e18) {
                            return CellValue::integer(static_cast<std::int64_t>(*f));
                        }
                    }
                }
                return std::nullopt;
            }
            case CellKind::Float: {
                if (cell.kind() == CellKind::Integer) {
                    return CellValue::floating(static_cast<double>(cell.as_integer()));
                }
                if (cell.kind() == CellKind::Boolean) return CellValue::floating(cell.as_boolean() ? 1.0 : 0.0);
                if (cell.kind() == CellKind::Text) {
                    if (auto f = strutil::parse_float(strutil::trim_unicode(cell.as_text()))) {
                        return CellValue::floating(*f);
                    }
                }
                return std::nullopt;
            }
            case CellKind::Boolean: {
                if (cell.kind() == CellKind::Integer) {
                    if (cell.as_integer() == 0) return CellValue::boolean(false);
                    if (cell.as_integer() == 1) return CellValue::boolean(true);
                    return std::nullopt;
                }
                if (cell.kind() == CellKind::Text) {
                    std::string t = strutil::to_lower_ascii(strutil::trim_unicode(cell.as_text()));
                    if (t == "true" || t == "yes" || t == "1") return CellValue::boolean(true);
                    if (t == "false" || t == "no" || t == "0") return CellValue::boolean(false);
                }
                return std::nullopt;
            }
            case CellKind::Date: {
                if (cell.kind() == CellKind::Text) {
                    if (auto d = parse_date_format(cell.as_text(), "%Y-%m-%d")) {
                        return CellValue::date(*d);
                    }
                }
                return std::nullopt;
            }
            case CellKind::Text:
                return CellValue::text(cell.to_text());
            default:
                return std::nullopt;
        }
    };

    OutCol out{target, ColumnRole::Derived, *kind, {}};
    for (std::size_t r = 0; r < view.row_count(); ++r) {
        const CellValue& cell = view.cell(r, src);
        if (cell.is_null()) {
            out.values.push_back(CellValue::null());
            continue;
        }
        auto v = cast_one(cell);
        if (!v) {
            if (strict) {
                throw ExecutionError("step " + step.step_id + ": cannot cast '" + cell.to_text() +
                                         "' to " + to,
                                     step.step_id, static_cast<long>(r));
            }
            out.values.push_back(CellValue::null());
        } else {
            out.values.push_back(*v);
        }
    }
    return {std::move(out)};
}

std::vector<OutCol> op_fillna_static(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = opt_string(step, "target", source);
    if (!step.params.contains("value")) bad_params(step, "param 'value' is required");
    CellValue fill = cell_from_json(step.params["value"]);
    std::size_t src = view.require_column(source);

    OutCol out{target, ColumnRole::Derived, std::nullopt, {}};
    for (const auto& row : view.rows()) {
        out.values.push_back(row[src].is_null() ? fill : row[src]);
    }
    return {std::move(out)};
}

std::vector<OutCol> op_fillna_dynamic(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = opt_string(step, "target", source);
    std::string rule = need_string(step, "rule");
    std::size_t src = view.require_column(source);
    auto column = view.column_values(src);

    OutCol out{target, ColumnRole::Derived, std::nullopt, {}};
    if (rule == "forward_fill") {
        CellValue last = CellValue::null();
        for (const auto& v : column) {
            if (!v.is_null()) last = v;
            out.values.push_back(v.is_null() ? last : v);
        }
    } else if (rule == "backward_fill") {
        out.values.assign(column.begin(), column.end());
        CellValue next = CellValue::null();
        for (std::size_t i = column.size(); i-- > 0;) {
            if (!column[i].is_null()) next = column[i];
            if (out.values[i].is_null()) out.values[i] = next;
        }
    } else if (rule == "column_mean") {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& v : column) {
            if (v.is_null()) continue;
            auto num = v.numeric();
            if (!num) {
                throw ExecutionError("step " + step.step_id +
                                         ": column_mean requires a numeric column, found " +
                                         std::string(kind_name(v.kind())),
                                     step.step_id);
            }
            sum += *num;
            ++n;
        }
        CellValue fill = n ? CellValue::floating(sum / static_cast<double>(n)) : CellValue::null();
        for (const auto& v : column) out.values.push_back(v.is_null() ? fill : v);
    } else if (rule == "column_mode") {
        // Most frequent non-null value; first appearance wins ties.
        std::vector<std::pair<CellValue, std::size_t>> counts;
        for (const auto& v : column) {
            if (v.is_null()) continue;
            bool found = false;
            for (auto& [val, n] : counts) {
                if (val == v) {
                    ++n;
                    found = true;
                    break;
                }
            }
            if (!found) counts.emplace_back(v, 1);
        }
        CellValue fill = CellValue::null();
        std::size_t best = 0;
        for (const auto& [val, n] : counts) {
            if (n > best) {
                best = n;
                fill = val;
            }
        }
        for (const auto& v : column) out.values.push_back(v.is_null() ? fill : v);
    } else {
        bad_params(step, "unknown fill rule '" + rule +
                             "' (expected forward_fill, backward_fill, column_mean, column_mode)");
    }
    return {std::move(out)};
}

std::vector<OutCol> op_combine_columns(const PlanStep& step, const Table& view) {
    if (!step.params.contains("sources") || !step.params["sources"].is_array()) {
        bad_params(step, "param 'sources' must be an array of column names");
    }
    std::string target = need_string(step, "target");
    std::string sep = opt_string(step, "separator", " ");
    std::vector<std::size_t> idx;
    for (const auto& s : step.params["sources"]) idx.push_back(view.require_column(s.get<std::string>()));

    OutCol out{target, ColumnRole::Derived, CellKind::Text, {}};
    for (const auto& row : view.rows()) {
        bool any_null = false;
        std::vector<std::string> parts;
        for (std::size_t i : idx) {
            if (row[i].is_null()) {
                any_null = true;
                break;
            }
            parts.push_back(row[i].to_text());
        }
        out.values.push_back(any_null ? CellValue::null() : CellValue::text(strutil::join(parts, sep)));
    }
    return {std::move(out)};
}

std::vector<OutCol> op_trim_whitespace(const PlanStep& step, const Table& view) {
    std::vector<std::string> sources;
    if (step.params.contains("columns")) {
        for (const auto& c : step.params["columns"]) sources.push_back(c.get<std::string>());
    } else {
        sources.push_back(need_string(step, "source"));
    }
    std::string target = opt_string(step, "target", "");
    if (!target.empty() && sources.size() != 1) {
        bad_params(step, "param 'target' is only valid with a single source");
    }

    std::vector<OutCol> out;
    for (const auto& name : sources) {
        std::size_t src = view.require_column(name);
        OutCol col{target.empty() ? name : target, ColumnRole::Derived, std::nullopt, {}};
        for (const auto& row : view.rows()) {
            const CellValue& cell = row[src];
            if (cell.kind() == CellKind::Text) {
                col.values.push_back(CellValue::text(strutil::trim_unicode(cell.as_text())));
            } else {
                col.values.push_back(cell);
            }
        }
        out.push_back(std::move(col));
    }
    return out;
}

std::vector<OutCol> op_bin_numeric(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    std::string target = need_string(step, "target");
    if (!step.params.contains("edges") || !step.params["edges"].is_array() ||
        step.params["edges"].size() < 2) {
        bad_params(step, "param 'edges' must be an array of at least two numbers");
    }
    std::vector<double> edges;
    for (const auto& e : step.params["edges"]) {
        if (!e.is_number()) bad_params(step, "bin edges must be numbers");
        edges.push_back(e.get<double>());
    }
    for (std::size_t i = 1; i < edges.size(); ++i) {
        if (!(edges[i - 1] < edges[i])) bad_params(step, "bin edges must be strictly increasing");
    }
    std::size_t bins = edges.size() - 1;
    std::vector<std::string> labels;
    if (step.params.contains("labels")) {
        for (const auto& l : step.params["labels"]) labels.push_back(l.get<std::string>());
        if (labels.size() != bins) {
            bad_params(step, "labels count " + std::to_string(labels.size()) + " != bin count " +
                                 std::to_string(bins));
        }
    } else {
        for (std::size_t i = 0; i < bins; ++i) {
            labels.push_back("[" + format_double(edges[i]) + ", " + format_double(edges[i + 1]) +
                             (i + 1 == bins ? "]" : ")"));
        }
    }
    std::size_t src = view.require_column(source);

    OutCol out{target, ColumnRole::Derived, CellKind::Text, {}};
    for (const auto& row : view.rows()) {
        auto num = row[src].numeric();
        if (!num || *num < edges.front() || *num > edges.back()) {
            out.values.push_back(CellValue::null());
            continue;
        }
        // Left-inclusive bins; the last bin also includes its right edge.
        std::size_t bin = bins - 1;
        for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
            if (*num < edges[i + 1]) {
                bin = i;
                break;
            }
        }
        out.values.push_back(CellValue::text(labels[bin]));
    }
    return {std::move(out)};
}

std::vector<OutCol> op_one_hot(const PlanStep& step, const Table& view) {
    std::string source = need_string(step, "source");
    long max_categories = 64;
    if (step.params.contains("max_categories")) {
        if (!step.params["max_categories"].is_number_integer()) {
            bad_params(step, "param 'max_categories' must be an integer");
        }
        max_categories = step.params["max_categories"].get<long>();
    }
    std::size_t src = view.require_column(source);

    // Observed categories in first-appearance order, keyed by text form.
    std::vector<std::string> categories;
    for (const auto& row : view.rows()) {
        if (row[src].is_null()) continue;
        std::string key = row[src].to_text();
        if (std::find(categories.begin(), categories.end(), key) == categories.end()) {
            categories.push_back(key);
        }
    }
    if (static_cast<long>(categories.size()) > max_categories) {
        throw ExecutionError("step " + step.step_id + ": one_hot found " +
                                 std::to_string(categories.size()) +
                                 " distinct values, exceeding max_categories=" +
                                 std::to_string(max_categories),
                             step.step_id);
    }

    // Unique column per category: <source>__<sanitized>, suffixed on clashes.
    std::vector<std::string> names;
    for (const auto& cat : categories) {
        std::string base = source + "__" + sanitize_category(cat);
        std::string name = base;
        for (int k = 2; std::find(names.begin(), names.end(), name) != names.end(); ++k) {
            name = base + "_" + std::to_string(k);
        }
        names.push_back(name);
    }
    for (const auto& name : names) {
        if (std::find(step.writes.begin(), step.writes.end(), name) == step.writes.end()) {
            throw ExecutionError("step " + step.step_id + ": one_hot produced column '" + name +
                                     "' that is not declared in writes",
                                 step.step_id);
        }
    }

    std::vector<OutCol> out;
    for (std::size_t c = 0; c < categories.size(); ++c) {
        OutCol col{names[c], ColumnRole::Derived, CellKind::Boolean, {}};
        for (const auto& row : view.rows()) {
            if (row[src].is_null()) {
                col.values.push_back(CellValue::null());
            } else {
                col.values.push_back(CellValue::boolean(row[src].to_text() == categories[c]));
            }
        }
        out.push_back(std::move(col));
    }
    // Declared-but-unobserved indicator columns keep the target schema stable.
    for (const auto& w : step.writes) {
        if (std::find(names.begin(), names.end(), w) != names.end()) continue;
        OutCol col{w, ColumnRole::Derived, CellKind::Boolean, {}};
        for (const auto& row : view.rows()) {
            col.values.push_back(row[src].is_null() ? CellValue::null() : CellValue::boolean(false));
        }
        out.push_back(std::move(col));
    }
    return out;
}

// --- row-family operators ---------------------------------------------------

std::vector<std::size_t> op_sort(const PlanStep& step, const Table& view) {
    std::vector<std::string> by;
    const char* key = step.params.contains("by") ? "by" : "columns";
    if (!step.params.contains(key) || !step.params[key].is_array() || step.params[key].empty()) {
        bad_params(step, "param 'by' must be a non-empty array of column names");
    }
    for (const auto& c : step.params[key]) by.push_back(c.get<std::string>());
    std::vector<bool> desc(by.size(), false);
    if (step.params.contains("directions")) {
        const auto& dirs = step.params["directions"];
        if (!dirs.is_array() || dirs.size() != by.size()) {
            bad_params(step, "param 'directions' must match 'by' in length");
        }
        for (std::size_t i = 0; i < by.size(); ++i) {
            std::string d = dirs[i].get<std::string>();
            if (d != "asc" && d != "desc") bad_params(step, "direction must be 'asc' or 'desc'");
            desc[i] = (d == "desc");
        }
    }
    std::vector<std::size_t> cols;
    for (const auto& c : by) cols.push_back(view.require_column(c));

    std::vector<std::size_t> order(view.row_count());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        for (std::size_t k = 0; k < cols.size(); ++k) {
            int c = CellValue::compare(view.cell(a, cols[k]), view.cell(b, cols[k]));
            if (c != 0) return desc[k] ? c > 0 : c < 0;
        }
        return false;  // stable: ties keep input order
    });
    return order;
}

std::vector<std::size_t> op_filter_rows(const PlanStep& step, const Table& view) {
    ConditionExpr cond = ConditionExpr::parse(need_string(step, "condition"));
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < view.row_count(); ++r) {
        if (cond.evaluate(view, r)) kept.push_back(r);
    }
    return kept;
}

std::vector<std::size_t> op_deduplicate_rows(const PlanStep& step, const Table& view) {
    std::vector<std::size_t> cols;
    if (step.params.contains("columns")) {
        for (const auto& c : step.params["columns"]) cols.push_back(view.require_column(c.get<std::string>()));
    } else {
        cols.resize(view.column_count());
        std::iota(cols.begin(), cols.end(), 0);
    }
    // Strict-equality key: kind + canonical text, length-prefixed.
    auto key_of = [&](std::size_t r) {
        std::string key;
        for (std::size_t c : cols) {
            const CellValue& v = view.cell(r, c);
            std::string t = v.to_text();
            key += kind_name(v.kind());
            key += ':';
            key += std::to_string(t.size());
            key += ':';
            key += t;
        }
        return key;
    };
    std::set<std::string> seen;
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < view.row_count(); ++r) {
        if (seen.insert(key_of(r)).second) kept.push_back(r);
    }
    return kept;
}

// --- custom registry ---------------------------------------------------------

Table custom_identity(const Table& view, const nlohmann::json&) { return view; }

// Parses Roman numerals (subtractive notation) into integers; invalid -> Null.
std::optional<std::int64_t> roman_value(const std::string& text) {
    if (text.empty()) return std::nullopt;
    auto digit = [](char c) -> int {
        switch (c) {
            case 'I': return 1;
            case 'V': return 5;
            case 'X': return 10;
            case 'L': return 50;
            case 'C': return 100;
            case 'D': return 500;
            case 'M': return 1000;
            default: return 0;
        }
    };
    std::int64_t total = 0;
    int prev = 0;
    for (std::size_t i = text.size(); i-- > 0;) {
        int v = digit(text[i]);
        if (v == 0) return std::nullopt;
        if (v < prev) {
            total -= v;
        } else {
            total += v;
            prev = v;
        }
    }
    if (total <= 0) return std::nullopt;
    return total;
}

Table custom_roman_to_int(const Table& view, const nlohmann::json& params) {
    if (!params.contains("source") || !params.contains("target")) {
        throw ExecutionError("roman_to_int needs 'source' and 'target' params");
    }
    std::string source = params["source"].get<std::string>();
    std::string target = params["target"].get<std::string>();
    std::size_t src = view.require_column(source);

    auto columns = view.columns();
    columns.push_back({target, ColumnRole::Derived, CellKind::Integer});
    std::vector<Table::Row> rows = view.rows();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        const CellValue& cell = view.cell(r, src);
        if (cell.is_null() || cell.kind() != CellKind::Text) {
            rows[r].push_back(CellValue::null());
            continue;
        }
        auto v = roman_value(strutil::trim_unicode(cell.as_text()));
        rows[r].push_back(v ? CellValue::integer(*v) : CellValue::null());
    }
    return Table(view.table_id(), view.title(), std::move(columns), std::move(rows));
}

}  // namespace

const std::map<std::string, CustomFn>& custom_registry() {
    static const std::map<std::string, CustomFn> registry = {
        {"identity", custom_identity},
        {"roman_to_int", custom_roman_to_int},
    };
    return registry;
}

bool is_column_op(const std::string& op) {
    static const std::set<std::string> kColumnOps = {
        "parse_date_text", "parse_number",  "extract_regex",   "derive_conditional",
        "derive_math",     "map_values",    "replace_value",   "replace_string",
        "cast_column",     "fillna_static", "fillna_dynamic",  "combine_columns",
        "trim_whitespace", "bin_numeric",   "one_hot"};
    return kColumnOps.count(op) > 0;
}

bool is_row_op(const std::string& op) {
    return op == "sort" || op == "filter_rows" || op == "deduplicate_rows";
}

std::vector<OutCol> run_column_op(const PlanStep& step, const Table& view) {
    if (step.op == "parse_date_text") return op_parse_date_text(step, view);
    if (step.op == "parse_number") return op_parse_number(step, view);
    if (step.op == "extract_regex") return op_extract_regex(step, view);
    if (step.op == "derive_conditional") return op_derive_conditional(step, view);
    if (step.op == "derive_math") return op_derive_math(step, view);
    if (step.op == "map_values") return op_map_values(step, view);
    if (step.op == "replace_value") return op_replace_value(step, view);
    if (step.op == "replace_string") return op_replace_string(step, view);
    if (step.op == "cast_column") return op_cast_column(step, view);
    if (step.op == "fillna_static") return op_fillna_static(step, view);
    if (step.op == "fillna_dynamic") return op_fillna_dynamic(step, view);
    if (step.op == "combine_columns") return op_combine_columns(step, view);
    if (step.op == "trim_whitespace") return op_trim_whitespace(step, view);
    if (step.op == "bin_numeric") return op_bin_numeric(step, view);
    if (step.op == "one_hot") return op_one_hot(step, view);
    throw ExecutionError("not a column operator: " + step.op, step.step_id);
}

std::vector<std::size_t> run_row_op(const PlanStep& step, const Table& view) {
    if (step.op == "sort") return op_sort(step, view);
    if (step.op == "filter_rows") return op_filter_rows(step, view);
    if (step.op == "deduplicate_rows") return op_deduplicate_rows(step, view);
    throw ExecutionError("not a row operator: " + step.op, step.step_id);
}

// ---------------------------------------------------------------------------
// Static parameter validation

namespace {

// Collects problems instead of throwing so callers can batch findings.
void check_params(const PlanStep& s, std::vector<std::string>& problems) {
    const json& p = s.params;
    auto require_str = [&](const char* key) -> std::optional<std::string> {
        if (!p.contains(key) || !p[key].is_string()) {
            problems.push_back("param '" + std::string(key) + "' (string) is required");
            return std::nullopt;
        }
        return p[key].get<std::string>();
    };
    auto in_writes = [&](const std::string& col, const char* what) {
        if (std::find(s.writes.begin(), s.writes.end(), col) == s.writes.end()) {
            problems.push_back(std::string(what) + " '" + col + "' is not declared in writes");
        }
    };
    auto target_or_source_in_writes = [&] {
        std::string t = p.contains("target") && p["target"].is_string()
                            ? p["target"].get<std::string>()
                            : (p.contains("source") && p["source"].is_string()
                                   ? p["source"].get<std::string>()
                                   : "");
        if (!t.empty()) in_writes(t, "target");
    };
    auto check_pattern = [&](const std::string& pattern) {
        try {
            rx::Regex::compile(pattern);
        } catch (const ParseError& e) {
            problems.push_back(e.what());
        }
    };

    if (s.op == "add_row_id") {
        std::string name = p.contains("name") && p["name"].is_string() ? p["name"].get<std::string>()
                                                                       : "_row_id";
        in_writes(name, "row id column");
    } else if (s.op == "rename") {
        if (!p.contains("mapping") || !p["mapping"].is_object() || p["mapping"].empty()) {
            problems.push_back("param 'mapping' (non-empty object) is required");
        } else {
            std::set<std::string> targets;
            for (auto& [k, v] : p["mapping"].items()) {
                if (!v.is_string()) {
                    problems.push_back("rename target for '" + k + "' must be a string");
                } else if (!targets.insert(v.get<std::string>()).second) {
                    problems.push_back("rename maps two columns to '" + v.get<std::string>() + "'");
                }
            }
        }
    } else if (s.op == "select") {
        if (!p.contains("columns") || !p["columns"].is_array() || p["columns"].empty()) {
            problems.push_back("param 'columns' (non-empty array) is required");
        }
    } else if (s.op == "parse_date_text") {
        require_str("source");
        if (auto t = require_str("target")) in_writes(*t, "target");
        if (p.contains("formats")) {
            if (!p["formats"].is_array()) {
                problems.push_back("param 'formats' must be an array of strings");
            } else {
                for (const auto& f : p["formats"]) {
                    if (!f.is_string()) problems.push_back("param 'formats' must contain only strings");
                }
            }
        }
    } else if (s.op == "parse_number") {
        require_str("source");
        if (auto t = require_str("target")) in_writes(*t, "target");
        if (p.contains("unit_target") && p["unit_target"].is_string()) {
            in_writes(p["unit_target"].get<std::string>(), "unit_target");
        }
        if (p.contains("pattern") && p["pattern"].is_string()) check_pattern(p["pattern"]);
    } else if (s.op == "extract_regex") {
        require_str("source");
        auto pattern = require_str("pattern");
        std::size_t groups = 0;
        if (pattern) {
            try {
                groups = rx::Regex::compile(*pattern).group_count();
            } catch (const ParseError& e) {
                problems.push_back(e.what());
            }
        }
        if (!p.contains("targets") || !p["targets"].is_object() || p["targets"].empty()) {
            problems.push_back("param 'targets' (non-empty object) is required");
        } else {
            for (auto& [k, v] : p["targets"].items()) {
                auto g = strutil::parse_integer(k);
                if (!g || *g < 1) {
                    problems.push_back("targets key '" + k + "' is not a positive group number");
                } else if (groups && static_cast<std::size_t>(*g) > groups) {
                    problems.push_back("targets key '" + k + "' exceeds the pattern's " +
                                       std::to_string(groups) + " groups");
                }
                if (!v.is_string()) {
                    problems.push_back("targets['" + k + "'] must be a column name");
                } else {
                    in_writes(v.get<std::string>(), "target");
                }
            }
        }
    } else if (s.op == "derive_conditional") {
        if (auto t = require_str("target")) in_writes(*t, "target");
        if (!p.contains("rules") || !p["rules"].is_array() || p["rules"].empty()) {
            problems.push_back("param 'rules' (non-empty array) is required");
        } else {
            for (std::size_t i = 0; i < p["rules"].size(); ++i) {
                const auto& r = p["rules"][i];
                if (!r.is_object() || !r.contains("condition") || !r.contains("value") ||
                    !r["condition"].is_string()) {
                    problems.push_back("rules[" + std::to_string(i) +
                                       "] must be {condition: string, value: scalar}");
                    continue;
                }
                try {
                    ConditionExpr::parse(r["condition"].get<std::string>());
                } catch (const ValidationError& e) {
                    problems.push_back(e.what());
                }
                if (r["value"].is_array() || r["value"].is_object()) {
                    problems.push_back("rules[" + std::to_string(i) + "].value must be a scalar");
                }
            }
        }
    } else if (s.op == "derive_math") {
        if (auto t = require_str("target")) in_writes(*t, "target");
        if (auto e = require_str("expr")) {
            try {
                MathExpr::parse(*e);
            } catch (const ValidationError& err) {
                problems.push_back(err.what());
            }
        }
    } else if (s.op == "map_values") {
        require_str("source");
        if (!p.contains("mapping") || !p["mapping"].is_object()) {
            problems.push_back("param 'mapping' (object) is required");
        }
        target_or_source_in_writes();
    } else if (s.op == "replace_value") {
        require_str("source");
        if (!p.contains("old") || !p.contains("new")) {
            problems.push_back("params 'old' and 'new' are required");
        }
        target_or_source_in_writes();
    } else if (s.op == "replace_string") {
        require_str("source");
        auto oldv = require_str("old");
        require_str("new");
        bool regex = p.contains("regex") && p["regex"].is_boolean() && p["regex"].get<bool>();
        if (oldv) {
            if (regex) {
                check_pattern(*oldv);
            } else if (oldv->empty()) {
                problems.push_back("param 'old' must be non-empty in plain mode");
            }
        }
        target_or_source_in_writes();
    } else if (s.op == "cast_column") {
        require_str("source");
        if (auto to = require_str("to")) {
            if (std::find(std::begin(kCastKinds), std::end(kCastKinds), *to) == std::end(kCastKinds)) {
                problems.push_back("unknown cast kind '" + *to + "'");
            }
        }
        target_or_source_in_writes();
    } else if (s.op == "fillna_static") {
        require_str("source");
        if (!p.contains("value")) problems.push_back("param 'value' is required");
        target_or_source_in_writes();
    } else if (s.op == "fillna_dynamic") {
        require_str("source");
        if (auto r = require_str("rule")) {
            if (*r != "forward_fill" && *r != "backward_fill" && *r != "column_mean" &&
                *r != "column_mode") {
                problems.push_back("unknown fill rule '" + *r + "'");
            }
        }
        target_or_source_in_writes();
    } else if (s.op == "combine_columns") {
        if (auto t = require_str("target")) in_writes(*t, "target");
        if (!p.contains("sources") || !p["sources"].is_array() || p["sources"].empty()) {
            problems.push_back("param 'sources' (non-empty array) is required");
        }
    } else if (s.op == "trim_whitespace") {
        if (!p.contains("columns") && !(p.contains("source") && p["source"].is_string())) {
            problems.push_back("param 'source' or 'columns' is required");
        }
    } else if (s.op == "filter_rows") {
        if (auto c = require_str("condition")) {
            try {
                ConditionExpr::parse(*c);
            } catch (const ValidationError& e) {
                problems.push_back(e.what());
            }
        }
    } else if (s.op == "sort") {
        const char* key = p.contains("by") ? "by" : "columns";
        if (!p.contains(key) || !p[key].is_array() || p[key].empty()) {
            problems.push_back("param 'by' (non-empty array) is required");
        } else if (p.contains("directions")) {
            if (!p["directions"].is_array() || p["directions"].size() != p[key].size()) {
                problems.push_back("param 'directions' must match 'by' in length");
            } else {
                for (const auto& d : p["directions"]) {
                    if (!d.is_string() ||
                        (d.get<std::string>() != "asc" && d.get<std::string>() != "desc")) {
                        problems.push_back("directions must be 'asc' or 'desc'");
                    }
                }
            }
        }
    } else if (s.op == "deduplicate_rows") {
        if (p.contains("columns") && !p["columns"].is_array()) {
            problems.push_back("param 'columns' must be an array");
        }
    } else if (s.op == "keep_raw_snapshot") {
        if (auto src = require_str("source")) in_writes(*src + "_raw", "snapshot column");
    } else if (s.op == "bin_numeric") {
        require_str("source");
        if (auto t = require_str("target")) in_writes(*t, "target");
        if (!p.contains("edges") || !p["edges"].is_array() || p["edges"].size() < 2) {
            problems.push_back("param 'edges' (array of >= 2 numbers) is required");
        } else {
            double prev = 0;
            bool first = true, numeric = true;
            for (const auto& e : p["edges"]) {
                if (!e.is_number()) {
                    problems.push_back("bin edges must be numbers");
                    numeric = false;
                    break;
                }
                double v = e.get<double>();
                if (!first && !(prev < v)) {
                    problems.push_back("bin edges must be strictly increasing");
                    break;
                }
                prev = v;
                first = false;
            }
            if (numeric && p.contains("labels") &&
                (!p["labels"].is_array() || p["labels"].size() + 1 != p["edges"].size())) {
                problems.push_back("labels count must equal bin count (edges - 1)");
            }
        }
    } else if (s.op == "one_hot") {
        require_str("source");
        if (p.contains("max_categories") && !p["max_categories"].is_number_integer()) {
            problems.push_back("param 'max_categories' must be an integer");
        }
    } else if (s.op == "custom") {
        if (!p.contains("name") || !p["name"].is_string()) {
            problems.push_back("param 'name' (string) is required");
        }
    }
}

}  // namespace

std::vector<std::string> check_op_params(const PlanStep& step) {
    std::vector<std::string> problems;
    check_params(step, problems);
    return problems;
}

std::vector<std::string> param_columns(const PlanStep& step) {
    const json& p = step.params;
    std::vector<std::string> cols;
    auto add = [&](const std::string& c) {
        if (std::find(cols.begin(), cols.end(), c) == cols.end()) cols.push_back(c);
    };
    auto add_str = [&](const char* key) {
        if (p.contains(key) && p[key].is_string()) add(p[key].get<std::string>());
    };
    auto add_list = [&](const char* key) {
        if (p.contains(key) && p[key].is_array()) {
            for (const auto& c : p[key]) {
                if (c.is_string()) add(c.get<std::string>());
            }
        }
    };

    if (step.op == "rename") {
        if (p.contains("mapping") && p["mapping"].is_object()) {
            for (auto& [k, v] : p["mapping"].items()) {
                (void)v;
                add(k);
            }
        }
    } else if (step.op == "select") {
        add_list("columns");
    } else if (step.op == "sort") {
        add_list("by");
        add_list("columns");
    } else if (step.op == "deduplicate_rows") {
        add_list("columns");
    } else if (step.op == "combine_columns") {
        add_list("sources");
    } else if (step.op == "trim_whitespace") {
        add_str("source");
        add_list("columns");
    } else if (step.op == "derive_conditional") {
        if (p.contains("rules") && p["rules"].is_array()) {
            for (const auto& r : p["rules"]) {
                if (r.is_object() && r.contains("condition") && r["condition"].is_string()) {
                    try {
                        add(ConditionExpr::parse(r["condition"].get<std::string>()).column());
                    } catch (const ValidationError&) {
                        // already reported by check_op_params
                    }
                }
            }
        }
    } else if (step.op == "derive_math") {
        if (p.contains("expr") && p["expr"].is_string()) {
            try {
                for (const auto& c : MathExpr::parse(p["expr"].get<std::string>()).referenced_columns()) {
                    add(c);
                }
            } catch (const ValidationError&) {
            }
        }
    } else if (step.op == "filter_rows") {
        if (p.contains("condition") && p["condition"].is_string()) {
            try {
                add(ConditionExpr::parse(p["condition"].get<std::string>()).column());
            } catch (const ValidationError&) {
            }
        }
    } else {
        add_str("source");
    }
    return cols;
}

}  // namespace canontab
