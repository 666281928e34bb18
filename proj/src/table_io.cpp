#include "canontab/table_io.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "canontab/dates.hpp"
#include "canontab/errors.hpp"
#include "canontab/strutil.hpp"

namespace canontab {

CellValue cell_from_json(const nlohmann::json& v) {
    if (v.is_null()) return CellValue::null();
    if (v.is_boolean()) return CellValue::boolean(v.get<bool>());
    if (v.is_number_integer()) return CellValue::integer(v.get<std::int64_t>());
    if (v.is_number_unsigned())
        return CellValue::integer(static_cast<std::int64_t>(v.get<std::uint64_t>()));
    if (v.is_number_float()) return CellValue::floating(v.get<double>());
    if (v.is_string()) return CellValue::text(v.get<std::string>());
    throw ValidationError("expected a scalar value, got " + v.dump());
}

nlohmann::json cell_to_json(const CellValue& v) {
    switch (v.kind()) {
        case CellKind::Null: return nullptr;
        case CellKind::Boolean: return v.as_boolean();
        case CellKind::Integer: return v.as_integer();
        case CellKind::Float: return v.as_float();
        case CellKind::Text: return v.as_text();
        case CellKind::Date: return v.as_date().to_iso();
    }
    return nullptr;
}

namespace {

struct CsvField {
    std::string text;
    bool quoted = false;
};

// Splits CSV bytes into rows of fields, tracking which fields were quoted.
std::vector<std::vector<CsvField>> parse_csv_fields(std::string_view bytes, const CsvOptions& opts) {
    if (strutil::starts_with(bytes, "\xEF\xBB\xBF")) bytes.remove_prefix(3);

    std::vector<std::vector<CsvField>> rows;
    std::vector<CsvField> row;
    CsvField field;
    bool in_quotes = false;
    bool row_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field = CsvField{};
    };
    auto end_row = [&] {
        end_field();
        rows.push_back(std::move(row));
        row.clear();
        row_started = false;
    };

    for (std::size_t i = 0; i < bytes.size(); ++i) {
        char c = bytes[i];
        if (in_quotes) {
            if (c == opts.quote) {
                if (i + 1 < bytes.size() && bytes[i + 1] == opts.quote) {
                    field.text.push_back(opts.quote);
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                field.text.push_back(c);
            }
            continue;
        }
        if (c == opts.quote && field.text.empty() && !field.quoted) {
            in_quotes = true;
            field.quoted = true;
            row_started = true;
        } else if (c == opts.delimiter) {
            end_field();
            row_started = true;
        } else if (c == '\r') {
            if (i + 1 < bytes.size() && bytes[i + 1] == '\n') ++i;
            end_row();
        } else if (c == '\n') {
            end_row();
        } else {
            field.text.push_back(c);
            row_started = true;
        }
    }
    if (in_quotes) throw ParseError("unterminated quoted field at end of input");
    if (row_started || !field.text.empty() || !row.empty()) end_row();
    return rows;
}

std::string csv_escape(const std::string& s, const CsvOptions& opts, bool force_quote) {
    bool needs = force_quote || s.find(opts.delimiter) != std::string::npos ||
                 s.find(opts.quote) != std::string::npos || s.find('\n') != std::string::npos ||
                 s.find('\r') != std::string::npos;
    if (!needs) return s;
    std::string out;
    out.push_back(opts.quote);
    for (char c : s) {
        if (c == opts.quote) out.push_back(opts.quote);
        out.push_back(c);
    }
    out.push_back(opts.quote);
    return out;
}

std::vector<Column> header_to_columns(const std::vector<std::string>& names) {
    std::unordered_map<std::string, int> seen;
    std::vector<std::string> dups;
    for (const auto& n : names) {
        if (n.empty()) throw ParseError("empty header name");
        if (++seen[n] == 2) dups.push_back(n);
    }
    if (!dups.empty()) {
        throw ParseError("duplicate header names: " + strutil::join(dups, ", "));
    }
    std::vector<Column> cols;
    cols.reserve(names.size());
    for (const auto& n : names) cols.push_back({n, ColumnRole::Canonical, std::nullopt});
    return cols;
}

}  // namespace

Table ingest_csv(std::string_view bytes, std::string table_id, std::string title,
                 const CsvOptions& opts) {
    auto rows = parse_csv_fields(bytes, opts);
    if (rows.empty()) throw ParseError("empty CSV input");

    std::vector<std::string> names;
    std::size_t first_data = 0;
    if (opts.header) {
        for (const auto& f : rows[0]) names.push_back(f.text);
        first_data = 1;
    } else {
        for (std::size_t i = 0; i < rows[0].size(); ++i) names.push_back("col_" + std::to_string(i + 1));
    }
    auto columns = header_to_columns(names);

    std::vector<Table::Row> data;
    for (std::size_t r = first_data; r < rows.size(); ++r) {
        if (rows[r].size() != columns.size()) {
            throw ParseError("ragged row " + std::to_string(r - first_data + 1) + ": expected " +
                             std::to_string(columns.size()) + " fields, found " +
                             std::to_string(rows[r].size()));
        }
        Table::Row row;
        row.reserve(columns.size());
        for (auto& f : rows[r]) row.push_back(CellValue::text(std::move(f.text)));
        data.push_back(std::move(row));
    }
    return Table(std::move(table_id), std::move(title), std::move(columns), std::move(data));
}

std::string write_csv(const Table& table, const CsvOptions& opts) {
    std::string out;
    std::vector<std::string> header;
    for (const auto& c : table.columns()) header.push_back(csv_escape(c.name, opts, false));
    out += strutil::join(header, std::string(1, opts.delimiter));
    out.push_back('\n');
    for (const auto& row : table.rows()) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out.push_back(opts.delimiter);
            if (row[i].is_null()) continue;  // empty unquoted field
            const std::string text = row[i].to_text();
            bool force = text.empty();  // keep empty Text distinct from Null
            out += csv_escape(text, opts, force);
        }
        out.push_back('\n');
    }
    return out;
}

Table typed_from_csv(std::string_view bytes, const SchemaDescriptor& schema,
                     std::string table_id, std::string title) {
    auto raw = parse_csv_fields(bytes, CsvOptions{});
    if (raw.empty()) throw ParseError("empty CSV input");
    if (raw[0].size() != schema.columns.size()) {
        throw ParseError("CSV header width does not match schema");
    }
    std::vector<Column> columns;
    for (std::size_t i = 0; i < schema.columns.size(); ++i) {
        if (raw[0][i].text != schema.columns[i].name) {
            throw ParseError("CSV header mismatch at column " + std::to_string(i + 1) + ": got '" +
                             raw[0][i].text + "', expected '" + schema.columns[i].name + "'");
        }
        columns.push_back({schema.columns[i].name, schema.columns[i].role, schema.columns[i].declared_kind});
    }

    auto parse_cell = [&](const CsvField& f, std::optional<CellKind> kind, std::size_t r,
                          const std::string& col) -> CellValue {
        if (f.text.empty() && !f.quoted) return CellValue::null();
        CellKind k = kind.value_or(CellKind::Text);
        switch (k) {
            case CellKind::Text:
            case CellKind::Null:
                return CellValue::text(f.text);
            case CellKind::Integer: {
                auto v = strutil::parse_integer(f.text);
                if (!v) throw ParseError("row " + std::to_string(r) + ", column " + col +
                                         ": not an integer: '" + f.text + "'");
                return CellValue::integer(*v);
            }
            case CellKind::Float: {
                auto v = strutil::parse_float(f.text);
                if (!v) throw ParseError("row " + std::to_string(r) + ", column " + col +
                                         ": not a number: '" + f.text + "'");
                return CellValue::floating(*v);
            }
            case CellKind::Boolean: {
                if (f.text == "true") return CellValue::boolean(true);
                if (f.text == "false") return CellValue::boolean(false);
                throw ParseError("row " + std::to_string(r) + ", column " + col +
                                 ": not a boolean: '" + f.text + "'");
            }
            case CellKind::Date: {
                if (f.text.size() >= 10) {
                    auto y = strutil::parse_integer(f.text.substr(0, f.text.size() - 6));
                    auto m = strutil::parse_integer(f.text.substr(f.text.size() - 5, 2));
                    auto d = strutil::parse_integer(f.text.substr(f.text.size() - 2, 2));
                    if (y && m && d && f.text[f.text.size() - 6] == '-' &&
                        f.text[f.text.size() - 3] == '-' &&
                        CalDate::valid(static_cast<int>(*y), static_cast<int>(*m), static_cast<int>(*d))) {
                        return CellValue::date({static_cast<int>(*y), static_cast<int>(*m), static_cast<int>(*d)});
                    }
                }
                throw ParseError("row " + std::to_string(r) + ", column " + col +
                                 ": not an ISO date: '" + f.text + "'");
            }
        }
        return CellValue::null();
    };

    std::vector<Table::Row> data;
    for (std::size_t r = 1; r < raw.size(); ++r) {
        if (raw[r].size() != columns.size()) {
            throw ParseError("ragged row " + std::to_string(r) + ": expected " +
                             std::to_string(columns.size()) + " fields, found " +
                             std::to_string(raw[r].size()));
        }
        Table::Row row;
        for (std::size_t i = 0; i < columns.size(); ++i) {
            row.push_back(parse_cell(raw[r][i], columns[i].declared_kind, r, columns[i].name));
        }
        data.push_back(std::move(row));
    }
    return Table(std::move(table_id), std::move(title), std::move(columns), std::move(data));
}

// ---------------------------------------------------------------------------
// Markdown pipe tables

namespace {

std::string md_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '|': out += "\\|"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            default: out.push_back(c);
        }
    }
    return out;
}

std::string md_unescape(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            char n = s[i + 1];
            if (n == '\\' || n == '|') {
                out.push_back(n);
                ++i;
                continue;
            }
            if (n == 'n') {
                out.push_back('\n');
                ++i;
                continue;
            }
            if (n == 'r') {
                out.push_back('\r');
                ++i;
                continue;
            }
        }
        out.push_back(s[i]);
    }
    return out;
}

// Splits one pipe-table line into raw cell strings (escapes intact).
std::vector<std::string> split_md_row(std::string_view line) {
    std::string_view s = line;
    // Drop one leading/trailing unescaped pipe.
    if (!s.empty() && s.front() == '|') s.remove_prefix(1);
    if (!s.empty() && s.back() == '|') {
        std::size_t backslashes = 0;
        for (std::size_t i = s.size() - 1; i-- > 0 && s[i] == '\\';) ++backslashes;
        if (backslashes % 2 == 0) s.remove_suffix(1);
    }
    std::vector<std::string> cells;
    std::string cur;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            cur.push_back(s[i]);
            cur.push_back(s[i + 1]);
            ++i;
        } else if (s[i] == '|') {
            cells.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(s[i]);
        }
    }
    cells.push_back(cur);
    return cells;
}

std::string strip_padding(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t')) --e;
    return s.substr(b, e - b);
}

bool is_separator_row(const std::vector<std::string>& cells) {
    if (cells.empty()) return false;
    for (const auto& raw : cells) {
        std::string c = strip_padding(raw);
        if (c.empty()) return false;
        std::size_t dashes = 0;
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (c[i] == '-') {
                ++dashes;
            } else if (c[i] == ':' && (i == 0 || i == c.size() - 1)) {
                // alignment colon
            } else {
                return false;
            }
        }
        if (dashes == 0) return false;
    }
    return true;
}

}  // namespace

Table ingest_markdown(std::string_view text, std::string table_id, std::string title) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos
                                                                                : nl - start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!line.empty() || nl != std::string_view::npos) lines.push_back(line);
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    // Drop blank lines around the table.
    std::vector<std::string_view> rows;
    for (auto l : lines) {
        if (strutil::trim_ascii(l).empty()) {
            if (rows.empty()) continue;  // leading blank
            break;                       // table ended
        }
        rows.push_back(l);
    }
    if (rows.size() < 2) throw ParseError("markdown table needs a header and a separator row");

    auto header_cells = split_md_row(rows[0]);
    auto sep_cells = split_md_row(rows[1]);
    if (!is_separator_row(sep_cells)) {
        throw ParseError("markdown table is missing the separator row of dashes");
    }
    if (sep_cells.size() != header_cells.size()) {
        throw ParseError("markdown separator row has " + std::to_string(sep_cells.size()) +
                         " cells, header has " + std::to_string(header_cells.size()));
    }

    std::vector<std::string> names;
    for (const auto& h : header_cells) names.push_back(md_unescape(strip_padding(h)));
    auto columns = header_to_columns(names);

    std::vector<Table::Row> data;
    for (std::size_t r = 2; r < rows.size(); ++r) {
        auto cells = split_md_row(rows[r]);
        if (cells.size() != columns.size()) {
            throw ParseError("markdown row " + std::to_string(r - 1) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(columns.size()));
        }
        Table::Row row;
        for (const auto& c : cells) row.push_back(CellValue::text(md_unescape(strip_padding(c))));
        data.push_back(std::move(row));
    }
    return Table(std::move(table_id), std::move(title), std::move(columns), std::move(data));
}

std::string serialize_markdown(const Table& table, std::size_t max_rows) {
    std::string out;
    out.push_back('|');
    for (const auto& c : table.columns()) {
        out.push_back(' ');
        out += md_escape(c.name);
        out += " |";
    }
    out.push_back('\n');
    out.push_back('|');
    for (std::size_t i = 0; i < table.column_count(); ++i) out += " --- |";
    out.push_back('\n');

    std::size_t limit = std::min(max_rows, table.row_count());
    for (std::size_t r = 0; r < limit; ++r) {
        out.push_back('|');
        for (std::size_t c = 0; c < table.column_count(); ++c) {
            out.push_back(' ');
            out += md_escape(table.cell(r, c).to_text());
            out += " |";
        }
        out.push_back('\n');
    }
    return out;
}

// ---------------------------------------------------------------------------
// SQL export

std::vector<std::pair<std::string, std::string>> sql_identifier_map(const Table& table) {
    std::vector<std::pair<std::string, std::string>> out;
    std::unordered_set<std::string> used;
    for (const auto& c : table.columns()) {
        std::string base = strutil::sanitize_identifier(c.name);
        std::string ident = base;
        for (int k = 2; !used.insert(ident).second; ++k) {
            ident = base + "_" + std::to_string(k);
        }
        out.emplace_back(c.name, ident);
    }
    return out;
}

namespace {

const char* sql_type(std::optional<CellKind> kind) {
    if (!kind) return "TEXT";
    switch (*kind) {
        case CellKind::Integer: return "INTEGER";
        case CellKind::Float: return "REAL";
        case CellKind::Boolean: return "BOOLEAN";
        default: return "TEXT";
    }
}

std::string sql_literal(const CellValue& v) {
    switch (v.kind()) {
        case CellKind::Null: return "NULL";
        case CellKind::Boolean: return v.as_boolean() ? "TRUE" : "FALSE";
        case CellKind::Integer: return std::to_string(v.as_integer());
        case CellKind::Float: return format_double(v.as_float());
        case CellKind::Date: return "'" + v.as_date().to_iso() + "'";
        case CellKind::Text: {
            std::string out = "'";
            for (char c : v.as_text()) {
                out.push_back(c);
                if (c == '\'') out.push_back('\'');
            }
            out.push_back('\'');
            return out;
        }
    }
    return "NULL";
}

// Column kind for typing the CREATE TABLE: declared kind when present,
// otherwise the uniform kind of the non-null cells (TEXT when mixed).
std::optional<CellKind> effective_kind(const Table& t, std::size_t col) {
    if (t.columns()[col].declared_kind) return t.columns()[col].declared_kind;
    std::optional<CellKind> found;
    for (const auto& row : t.rows()) {
        if (row[col].is_null()) continue;
        if (!found) {
            found = row[col].kind();
        } else if (*found != row[col].kind()) {
            return CellKind::Text;
        }
    }
    return found;
}

}  // namespace

std::string export_sql(const Table& table, std::string_view sql_name) {
    if (table.column_count() == 0) throw ValidationError("cannot export a table with no columns");

    auto idents = sql_identifier_map(table);
    std::string out;
    out += "-- canonical table export\n";
    for (const auto& [orig, ident] : idents) {
        out += "-- column \"";
        for (char c : orig) {
            if (c == '"') out.push_back('"');
            out.push_back(c);
        }
        out += "\" -> " + ident + "\n";
    }

    out += "CREATE TABLE " + std::string(sql_name) + " (\n";
    for (std::size_t i = 0; i < table.column_count(); ++i) {
        out += "  " + idents[i].second + " " + sql_type(effective_kind(table, i));
        if (i + 1 < table.column_count()) out.push_back(',');
        out.push_back('\n');
    }
    out += ");\n";

    for (const auto& row : table.rows()) {
        out += "INSERT INTO " + std::string(sql_name) + " VALUES (";
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ", ";
            out += sql_literal(row[i]);
        }
        out += ");\n";
    }
    return out;
}

nlohmann::json table_to_json(const Table& table) {
    nlohmann::json columns = nlohmann::json::array();
    for (const Column& c : table.columns()) {
        nlohmann::json jc{{"name", c.name}, {"role", role_name(c.role)}};
        if (c.declared_kind) jc["kind"] = kind_name(*c.declared_kind);
        columns.push_back(std::move(jc));
    }
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : table.rows()) {
        nlohmann::json jr = nlohmann::json::array();
        for (const CellValue& cell : row) jr.push_back(cell_to_json(cell));
        rows.push_back(std::move(jr));
    }
    nlohmann::json doc{{"table_id", table.table_id()},
                       {"title", table.title()},
                       {"columns", std::move(columns)},
                       {"rows", std::move(rows)}};
    if (table.row_ids()) doc["row_ids"] = *table.row_ids();
    return doc;
}

Table table_from_json(const nlohmann::json& doc) {
    if (!doc.is_object()) throw ParseError("table document must be a JSON object");
    for (const char* key : {"table_id", "columns", "rows"}) {
        if (!doc.contains(key)) {
            throw ParseError(std::string("table document is missing '") + key + "'");
        }
    }
    if (!doc["table_id"].is_string()) throw ParseError("table_id must be a string");
    if (doc.contains("title") && !doc["title"].is_string()) {
        throw ParseError("title must be a string");
    }
    if (!doc["columns"].is_array()) throw ParseError("columns must be an array");
    if (!doc["rows"].is_array()) throw ParseError("rows must be an array");

    std::vector<Column> columns;
    for (std::size_t i = 0; i < doc["columns"].size(); ++i) {
        const nlohmann::json& jc = doc["columns"][i];
        const std::string at = "columns[" + std::to_string(i) + "]";
        if (!jc.is_object() || !jc.contains("name") || !jc["name"].is_string()) {
            throw ParseError(at + " must be an object with a string 'name'");
        }
        Column col{jc["name"].get<std::string>(), ColumnRole::Canonical, std::nullopt};
        if (jc.contains("role")) {
            if (!jc["role"].is_string()) throw ParseError(at + ".role must be a string");
            const auto role = role_from_name(jc["role"].get<std::string>());
            if (!role) {
                throw ParseError(at + ".role '" + jc["role"].get<std::string>() +
                                 "' is not a column role");
            }
            col.role = *role;
        }
        if (jc.contains("kind")) {
            if (!jc["kind"].is_string()) throw ParseError(at + ".kind must be a string");
            const auto kind = kind_from_name(jc["kind"].get<std::string>());
            if (!kind) {
                throw ParseError(at + ".kind '" + jc["kind"].get<std::string>() +
                                 "' is not a cell kind");
            }
            col.declared_kind = *kind;
        }
        columns.push_back(std::move(col));
    }

    std::vector<Table::Row> rows;
    for (std::size_t r = 0; r < doc["rows"].size(); ++r) {
        const nlohmann::json& jr = doc["rows"][r];
        if (!jr.is_array()) {
            throw ParseError("rows[" + std::to_string(r) + "] must be an array");
        }
        Table::Row row;
        for (std::size_t c = 0; c < jr.size(); ++c) {
            CellValue cell = cell_from_json(jr[c]);
            if (c < columns.size() && columns[c].declared_kind == CellKind::Date &&
                cell.kind() == CellKind::Text) {
                const auto date = parse_date_builtin(cell.as_text());
                if (!date) {
                    throw ParseError("rows[" + std::to_string(r) + "][" + std::to_string(c) +
                                     "]: '" + cell.as_text() + "' is not an ISO date");
                }
                cell = CellValue::date(*date);
            }
            row.push_back(std::move(cell));
        }
        rows.push_back(std::move(row));
    }

    std::optional<std::vector<std::int64_t>> row_ids;
    if (doc.contains("row_ids")) {
        if (!doc["row_ids"].is_array()) throw ParseError("row_ids must be an array");
        std::vector<std::int64_t> ids;
        for (const auto& v : doc["row_ids"]) {
            if (!v.is_number_integer()) throw ParseError("row_ids must hold integers");
            ids.push_back(v.get<std::int64_t>());
        }
        row_ids = std::move(ids);
    }

    return Table(doc["table_id"].get<std::string>(), doc.value("title", std::string()),
                 std::move(columns), std::move(rows), std::move(row_ids));
}

}  // namespace canontab
