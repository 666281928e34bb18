#pragma once

#include <memory>
#include <string>
#include <vector>

#include "canontab/table.hpp"

namespace canontab {

// Row predicate in the planner's condition mini-language:
//   <column> contains '<literal>'
//   <column> <cmp> <number>        cmp in { == != < <= > >= }
//   <column> <cmp> '<literal>'
// Numeric comparisons require a numeric or strictly-parseable-numeric cell;
// otherwise the row evaluates to false (never an error). Null cells always
// evaluate to false.
class ConditionExpr {
public:
    enum class Cmp { Contains, Eq, Ne, Lt, Le, Gt, Ge };

    // Throws ValidationError quoting the offending text on malformed input.
    static ConditionExpr parse(const std::string& text);

    const std::string& column() const { return column_; }
    const std::string& source_text() const { return source_; }

    bool evaluate(const Table& table, std::size_t row) const;

private:
    std::string source_;
    std::string column_;
    Cmp cmp_ = Cmp::Contains;
    bool rhs_is_number_ = false;
    double rhs_number_ = 0.0;
    std::string rhs_text_;
};

// Arithmetic mini-language over columns:
//   len(col) | year(col) | month(col) | day(col) | col | number
//   combined with + - * / and parentheses.
// Null operands and kind mismatches yield Null; division by zero yields Null.
class MathExpr {
public:
    // Throws ValidationError on syntax errors.
    static MathExpr parse(const std::string& text);

    const std::string& source_text() const { return source_; }
    // Columns the expression references (for read-set validation).
    std::vector<std::string> referenced_columns() const;

    CellValue evaluate(const Table& table, std::size_t row) const;

    struct Node;

private:
    std::string source_;
    std::shared_ptr<const Node> root_;
};

}  // namespace canontab
