#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canontab/executor.hpp"
#include "canontab/plan.hpp"
#include "canontab/table.hpp"

namespace canontab {

// ---------------------------------------------------------------------------
// Hierarchical tables: multi-level column headers and/or nested row groups.

struct HeaderNode {
    std::string name;
    std::vector<HeaderNode> children;  // empty => this node is a value column

    bool operator==(const HeaderNode&) const = default;
};

struct RowGroup {
    std::string label;
    std::vector<Table::Row> rows;    // rows belonging directly to this group
    std::vector<RowGroup> children;  // nested subgroups, after the direct rows

    bool operator==(const RowGroup&) const = default;
};

struct HierarchicalTable {
    std::string table_id;
    std::string title;
    std::vector<HeaderNode> header;  // forest; leaves left-to-right are columns
    std::vector<Table::Row> rows;    // leaf rows when there are no groups
    std::vector<RowGroup> groups;

    bool operator==(const HierarchicalTable&) const = default;
};

// Metadata emitted by flattening, sufficient to invert it exactly.
struct FlattenInfo {
    // Per value column, the root-to-leaf header path. All paths are padded to
    // the same depth with trailing "" entries when the header tree is ragged.
    std::vector<std::vector<std::string>> header_paths;
    std::size_t levels = 0;  // number of level_1..level_d group-label columns
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
    static FlattenInfo from_json(const nlohmann::json& j);
};

struct FlattenResult {
    Table table;
    FlattenInfo info;
};

// Materializes hierarchy levels as explicit columns: multi-level headers join
// with " / "; row-group parents become repeated label columns level_1..level_d.
FlattenResult flatten_hierarchy(const HierarchicalTable& h);

// Exact inverse of flatten_hierarchy given its metadata.
HierarchicalTable unflatten_hierarchy(const Table& flat, const FlattenInfo& info);

HierarchicalTable hier_from_json(const nlohmann::json& j);
nlohmann::json hier_to_json(const HierarchicalTable& h);

// ---------------------------------------------------------------------------
// Losslessness audit: every raw cell must be recoverable from the canonical
// table by a deterministic procedure.

// A registered inverse procedure that rebuilds one raw column cell-by-cell
// from canonical columns. Kinds: copy_column, date_iso, cast_text,
// number_unit, regex_template, inverse_map, split_part.
struct RecoveryRule {
    std::string kind;
    nlohmann::json params;

    nlohmann::json to_json() const;
};

enum class LossStatus {
    Retained,       // present in the canonical table, cells unchanged
    FullyCaptured,  // reconstructible via a verified recovery rule
    Snapshot,       // preserved verbatim in a raw-snapshot column
    Missing,        // not recoverable; a snapshot must be added
};

const char* loss_status_name(LossStatus s);

struct ColumnAudit {
    std::string column;  // raw column name
    LossStatus status = LossStatus::Missing;
    std::string via;     // canonical column backing retained/snapshot status
    std::optional<RecoveryRule> rule;  // set for fully_captured
    std::string detail;  // first mismatching cell when status is missing
};

struct LossAudit {
    std::vector<ColumnAudit> columns;      // one per raw column, in raw order
    std::vector<std::size_t> row_map;      // canonical row -> raw row
    std::size_t raw_rows = 0;
    bool rows_bijective = false;
    bool lossless = false;
    std::vector<std::string> snapshots_needed;  // minimal snapshot additions
    std::vector<std::string> notes;

    nlohmann::json to_json() const;
};

// Verifies, cell by cell, that the canonical table preserves every raw
// column, and reports the minimal snapshots to add where it does not.
LossAudit audit_losslessness(const Table& raw, const Table& canonical,
                             const TransformationPlan& plan,
                             const std::vector<StepTrace>& traces);

// Rebuilds the raw table exactly from a lossless canonical table.
// Throws ValidationError when audit.lossless is false.
Table recover_raw(const Table& canonical, const LossAudit& audit);

// Returns a copy of the plan with keep_raw_snapshot steps prepended for the
// given raw columns, threading the snapshot columns through select steps and
// the final projection so they survive to the canonical table.
TransformationPlan add_snapshot_steps(const TransformationPlan& plan,
                                      const std::vector<std::string>& columns);

struct LosslessRun {
    TransformationPlan plan;  // the plan actually executed
    ExecutionResult result;
    LossAudit audit;
    bool snapshots_added = false;
};

// Executes the plan, audits the result, and when the audit demands snapshots
// repairs the plan and re-runs so the final audit is lossless (or as close as
// snapshots can make it; dropped rows remain unrecoverable).
LosslessRun ensure_lossless(const TransformationPlan& plan, const Table& raw,
                            const ExecutePolicy& policy = {});

}  // namespace canontab
