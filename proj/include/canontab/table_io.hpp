#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "canontab/table.hpp"

namespace canontab {

// JSON scalar <-> cell. Null/bool/number/string map to the matching cell
// kinds; Date cells serialize as ISO strings. Throws ValidationError on
// arrays and objects.
CellValue cell_from_json(const nlohmann::json& v);
nlohmann::json cell_to_json(const CellValue& v);

struct CsvOptions {
    char delimiter = ',';
    char quote = '"';
    bool header = true;  // when false, columns are named col_1..col_n
};

// RFC-4180-style CSV -> Table of Text cells. Strips a UTF-8 BOM. Typing is
// deferred to plan operators, so every cell (including empty ones) comes back
// as Text with the source bytes preserved.
// Throws ParseError on ragged rows (1-based data row index) and duplicate or
// empty header names.
Table ingest_csv(std::string_view bytes, std::string table_id = "table",
                 std::string title = "", const CsvOptions& opts = {});

// Table -> CSV using canonical text forms. Null cells become empty unquoted
// fields; empty Text cells are written quoted ("") so the two stay distinct.
std::string write_csv(const Table& table, const CsvOptions& opts = {});

// Reads a CSV written by write_csv back into a typed table: each column's
// declared kind drives the parse (ISO dates, "true"/"false", decimal
// numerics); empty unquoted fields become Null.
Table typed_from_csv(std::string_view bytes, const SchemaDescriptor& schema,
                     std::string table_id = "table", std::string title = "");

// GitHub pipe-table -> Table of Text cells. Requires header + separator rows;
// strips the single-space padding around cell boundaries, preserves interior
// content, and unescapes \| \\ \n sequences produced by serialize_markdown.
Table ingest_markdown(std::string_view text, std::string table_id = "table",
                      std::string title = "");

// Table -> pipe table, truncated to the first `max_rows` data rows. Pipes,
// backslashes, and newlines in cells are backslash-escaped so the output
// re-ingests to the same cells.
std::string serialize_markdown(const Table& table, std::size_t max_rows = 50);

// Column-name -> SQL identifier mapping: sanitized, uniqued by numeric suffix,
// in column order.
std::vector<std::pair<std::string, std::string>> sql_identifier_map(const Table& table);

// One CREATE TABLE + one INSERT per row, with a comment header recording the
// original-name -> identifier mapping. Kinds map Integer->INTEGER,
// Float->REAL, Boolean->BOOLEAN, Date/Text->TEXT (dates as ISO strings).
// Throws ValidationError when the table has no columns.
std::string export_sql(const Table& table, std::string_view sql_name);

// Table <-> JSON document:
//   {"table_id", "title", "columns": [{"name", "role", "kind"?}],
//    "rows": [[scalar, ...], ...], "row_ids"?}
// Cells serialize via cell_to_json (dates as ISO strings); reading back, a
// column declared "date" revives ISO strings into Date cells. Throws
// ParseError on structural problems in the document.
nlohmann::json table_to_json(const Table& table);
Table table_from_json(const nlohmann::json& doc);

}  // namespace canontab
