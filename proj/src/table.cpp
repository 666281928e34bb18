#include "canontab/table.hpp"

#include <algorithm>
#include <unordered_set>

#include "canontab/errors.hpp"

namespace canontab {

const char* role_name(ColumnRole r) {
    switch (r) {
        case ColumnRole::Canonical: return "canonical";
        case ColumnRole::Derived: return "derived";
        case ColumnRole::Helper: return "helper";
        case ColumnRole::RawSnapshot: return "raw_snapshot";
    }
    return "canonical";
}

std::optional<ColumnRole> role_from_name(const std::string& name) {
    if (name == "canonical") return ColumnRole::Canonical;
    if (name == "derived") return ColumnRole::Derived;
    if (name == "helper") return ColumnRole::Helper;
    if (name == "raw_snapshot") return ColumnRole::RawSnapshot;
    return std::nullopt;
}

Table::Table(std::string table_id, std::string title, std::vector<Column> columns,
             std::vector<Row> rows, std::optional<std::vector<std::int64_t>> row_ids)
    : table_id_(std::move(table_id)),
      title_(std::move(title)),
      columns_(std::move(columns)),
      rows_(std::move(rows)),
      row_ids_(std::move(row_ids)) {
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        const auto& c = columns_[i];
        if (c.name.empty()) throw ValidationError("column " + std::to_string(i) + " has an empty name");
        if (!index_.emplace(c.name, i).second)
            throw ValidationError("duplicate column name: " + c.name);
    }
    for (std::size_t r = 0; r < rows_.size(); ++r) {
        if (rows_[r].size() != columns_.size())
            throw ValidationError("row " + std::to_string(r) + " has " + std::to_string(rows_[r].size()) +
                        " cells, expected " + std::to_string(columns_.size()));
    }
    for (std::size_t i = 0; i < columns_.size(); ++i) {
        if (!columns_[i].declared_kind) continue;
        for (std::size_t r = 0; r < rows_.size(); ++r) {
            const auto& cell = rows_[r][i];
            if (!cell.is_null() && cell.kind() != *columns_[i].declared_kind)
                throw ValidationError("cell (" + std::to_string(r) + ", " + columns_[i].name +
                            ") violates declared kind " + kind_name(*columns_[i].declared_kind));
        }
    }
    if (row_ids_) {
        if (row_ids_->size() != rows_.size())
            throw ValidationError("row_ids length does not match row count");
        std::unordered_set<std::int64_t> seen;
        for (auto id : *row_ids_) {
            if (!seen.insert(id).second) throw ValidationError("duplicate row id " + std::to_string(id));
        }
    }
}

std::optional<std::size_t> Table::column_index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t Table::require_column(const std::string& name) const {
    auto idx = column_index(name);
    if (!idx) throw ExecutionError("unknown column: " + name);
    return *idx;
}

std::vector<std::string> Table::column_names() const {
    std::vector<std::string> out;
    out.reserve(columns_.size());
    for (const auto& c : columns_) out.push_back(c.name);
    return out;
}

std::vector<CellValue> Table::column_values(std::size_t col) const {
    std::vector<CellValue> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(r[col]);
    return out;
}

bool Table::same_cells(const Table& other) const {
    if (column_count() != other.column_count() || row_count() != other.row_count()) return false;
    for (std::size_t c = 0; c < columns_.size(); ++c)
        if (columns_[c].name != other.columns_[c].name) return false;
    for (std::size_t r = 0; r < rows_.size(); ++r)
        for (std::size_t c = 0; c < columns_.size(); ++c)
            if (!(rows_[r][c] == other.rows_[r][c])) return false;
    return true;
}

bool SchemaDescriptor::has_column(const std::string& name) const {
    return std::any_of(columns.begin(), columns.end(),
                       [&](const SchemaColumn& c) { return c.name == name; });
}

SchemaDescriptor SchemaDescriptor::of_table(const Table& t) {
    SchemaDescriptor s;
    for (const auto& c : t.columns())
        s.columns.push_back({c.name, c.role, c.declared_kind});
    return s;
}

}  // namespace canontab
