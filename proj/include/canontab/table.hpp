#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "canontab/cell.hpp"

namespace canontab {

enum class ColumnRole { Canonical, Derived, Helper, RawSnapshot };

const char* role_name(ColumnRole r);
std::optional<ColumnRole> role_from_name(const std::string& name);

struct Column {
    std::string name;
    ColumnRole role = ColumnRole::Canonical;
    std::optional<CellKind> declared_kind;

    bool operator==(const Column&) const = default;
};

// Typed in-memory table. Immutable after construction; build a new Table to
// change anything. Construction validates the structural invariants: uniform
// row width, unique non-empty column names, declared kinds, unique row ids.
class Table {
public:
    using Row = std::vector<CellValue>;

    Table() = default;
    Table(std::string table_id, std::string title, std::vector<Column> columns,
          std::vector<Row> rows, std::optional<std::vector<std::int64_t>> row_ids = std::nullopt);

    const std::string& table_id() const { return table_id_; }
    const std::string& title() const { return title_; }
    const std::vector<Column>& columns() const { return columns_; }
    const std::vector<Row>& rows() const { return rows_; }
    const std::optional<std::vector<std::int64_t>>& row_ids() const { return row_ids_; }

    std::size_t row_count() const { return rows_.size(); }
    std::size_t column_count() const { return columns_.size(); }

    const CellValue& cell(std::size_t row, std::size_t col) const { return rows_[row][col]; }

    std::optional<std::size_t> column_index(const std::string& name) const;
    bool has_column(const std::string& name) const { return column_index(name).has_value(); }
    // Throws ExecutionError when the column is missing.
    std::size_t require_column(const std::string& name) const;

    std::vector<std::string> column_names() const;
    std::vector<CellValue> column_values(std::size_t col) const;

    bool same_cells(const Table& other) const;  // columns (names+order) and cells

private:
    std::string table_id_;
    std::string title_;
    std::vector<Column> columns_;
    std::vector<Row> rows_;
    std::optional<std::vector<std::int64_t>> row_ids_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Target schema of a plan: column names/roles/kinds plus a primary key.
struct SchemaColumn {
    std::string name;
    ColumnRole role = ColumnRole::Canonical;
    std::optional<CellKind> declared_kind;

    bool operator==(const SchemaColumn&) const = default;
};

struct SchemaDescriptor {
    std::vector<SchemaColumn> columns;
    std::vector<std::string> primary_key;

    bool operator==(const SchemaDescriptor&) const = default;

    bool has_column(const std::string& name) const;
    static SchemaDescriptor of_table(const Table& t);
};

}  // namespace canontab
