#include "canontab/exprs.hpp"

#include <cctype>
#include <cmath>

#include "canontab/errors.hpp"
#include "canontab/strutil.hpp"

namespace canontab {

// ---------------------------------------------------------------------------
// ConditionExpr

namespace {

// Finds the first comparator token outside single quotes. Returns its start
// position or npos; `len` receives the token length.
std::size_t find_comparator(const std::string& s, std::size_t& len, ConditionExpr::Cmp& cmp) {
    using Cmp = ConditionExpr::Cmp;
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '\'') {
            quoted = !quoted;
            continue;
        }
        if (quoted) continue;
        auto two = s.substr(i, 2);
        if (two == "==") { len = 2; cmp = Cmp::Eq; return i; }
        if (two == "!=") { len = 2; cmp = Cmp::Ne; return i; }
        if (two == "<=") { len = 2; cmp = Cmp::Le; return i; }
        if (two == ">=") { len = 2; cmp = Cmp::Ge; return i; }
        if (c == '<') { len = 1; cmp = Cmp::Lt; return i; }
        if (c == '>') { len = 1; cmp = Cmp::Gt; return i; }
    }
    return std::string::npos;
}

// " contains " outside quotes.
std::size_t find_contains(const std::string& s) {
    static const std::string kw = " contains ";
    bool quoted = false;
    for (std::size_t i = 0; i + kw.size() <= s.size(); ++i) {
        if (s[i] == '\'') quoted = !quoted;
        if (!quoted && s.compare(i, kw.size(), kw) == 0) return i;
    }
    return std::string::npos;
}

std::string unquote(const std::string& s, const std::string& full) {
    std::string t = strutil::trim_ascii(s);
    if (t.size() < 2 || t.front() != '\'' || t.back() != '\'') {
        throw ValidationError("condition '" + full + "': expected a quoted literal, got '" + s + "'");
    }
    return t.substr(1, t.size() - 2);
}

}  // namespace

ConditionExpr ConditionExpr::parse(const std::string& text) {
    ConditionExpr e;
    e.source_ = text;
    std::string s = strutil::trim_ascii(text);
    if (s.empty()) throw ValidationError("empty condition");

    if (std::size_t at = find_contains(s); at != std::string::npos) {
        e.column_ = strutil::trim_ascii(s.substr(0, at));
        e.cmp_ = Cmp::Contains;
        e.rhs_text_ = unquote(s.substr(at + 10), text);
    } else {
        std::size_t len = 0;
        Cmp cmp;
        std::size_t at2 = find_comparator(s, len, cmp);
        if (at2 == std::string::npos) {
            throw ValidationError("condition '" + text +
                                  "': expected \"<column> contains '<value>'\" or a comparison");
        }
        e.column_ = strutil::trim_ascii(s.substr(0, at2));
        e.cmp_ = cmp;
        std::string rhs = strutil::trim_ascii(s.substr(at2 + len));
        if (!rhs.empty() && rhs.front() == '\'') {
            e.rhs_text_ = unquote(rhs, text);
        } else {
            auto num = strutil::parse_float(rhs);
            if (!num) {
                throw ValidationError("condition '" + text + "': right-hand side '" + rhs +
                                      "' is neither a number nor a quoted literal");
            }
            e.rhs_is_number_ = true;
            e.rhs_number_ = *num;
        }
    }
    if (e.column_.empty()) throw ValidationError("condition '" + text + "': missing column name");
    return e;
}

bool ConditionExpr::evaluate(const Table& table, std::size_t row) const {
    std::size_t col = table.require_column(column_);
    const CellValue& cell = table.cell(row, col);
    if (cell.is_null()) return false;

    if (cmp_ == Cmp::Contains) {
        return cell.to_text().find(rhs_text_) != std::string::npos;
    }

    if (rhs_is_number_) {
        std::optional<double> lhs = cell.numeric();
        if (!lhs && cell.kind() == CellKind::Text) {
            lhs = strutil::parse_float(strutil::trim_unicode(cell.as_text()));
        }
        if (!lhs) return false;  // non-numeric cells never satisfy numeric comparisons
        switch (cmp_) {
            case Cmp::Eq: return *lhs == rhs_number_;
            case Cmp::Ne: return *lhs != rhs_number_;
            case Cmp::Lt: return *lhs < rhs_number_;
            case Cmp::Le: return *lhs <= rhs_number_;
            case Cmp::Gt: return *lhs > rhs_number_;
            case Cmp::Ge: return *lhs >= rhs_number_;
            default: return false;
        }
    }

    const std::string lhs = cell.to_text();
    switch (cmp_) {
        case Cmp::Eq: return lhs == rhs_text_;
        case Cmp::Ne: return lhs != rhs_text_;
        case Cmp::Lt: return lhs < rhs_text_;
        case Cmp::Le: return lhs <= rhs_text_;
        case Cmp::Gt: return lhs > rhs_text_;
        case Cmp::Ge: return lhs >= rhs_text_;
        default: return false;
    }
}

// ---------------------------------------------------------------------------
// MathExpr

struct MathExpr::Node {
    enum Kind { Number, Column, Call, Binary } kind;
    double number = 0.0;
    std::string name;  // column name, or function name for Call
    char op = 0;       // + - * /
    std::shared_ptr<const Node> lhs, rhs;
    std::string arg;  // Call argument (column name)
};

namespace {

using Node = MathExpr::Node;
using NodeRef = std::shared_ptr<const Node>;

class MathParser {
public:
    explicit MathParser(const std::string& text) : s_(text) {}

    NodeRef parse() {
        auto n = parse_sum();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing text");
        return n;
    }

private:
    const std::string& s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& why) const {
        throw ValidationError("expression '" + s_ + "': " + why);
    }

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }
    bool eof() {
        skip_ws();
        return pos_ >= s_.size();
    }
    char peek() {
        skip_ws();
        return s_[pos_];
    }

    NodeRef parse_sum() {
        auto lhs = parse_product();
        while (!eof() && (peek() == '+' || peek() == '-')) {
            char op = s_[pos_++];
            auto rhs = parse_product();
            auto n = std::make_shared<Node>();
            n->kind = Node::Binary;
            n->op = op;
            n->lhs = lhs;
            n->rhs = rhs;
            lhs = n;
        }
        return lhs;
    }

    NodeRef parse_product() {
        auto lhs = parse_atom();
        while (!eof() && (peek() == '*' || peek() == '/')) {
            char op = s_[pos_++];
            auto rhs = parse_atom();
            auto n = std::make_shared<Node>();
            n->kind = Node::Binary;
            n->op = op;
            n->lhs = lhs;
            n->rhs = rhs;
            lhs = n;
        }
        return lhs;
    }

    NodeRef parse_atom() {
        if (eof()) fail("expected a value");
        char c = peek();
        if (c == '(') {
            ++pos_;
            auto inner = parse_sum();
            if (eof() || peek() != ')') fail("missing ')'");
            ++pos_;
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
            (c == '-' && pos_ + 1 < s_.size() &&
             (std::isdigit(static_cast<unsigned char>(s_[pos_ + 1])) || s_[pos_ + 1] == '.'))) {
            return parse_number();
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            return parse_name();
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    NodeRef parse_number() {
        skip_ws();
        std::size_t start = pos_;
        if (s_[pos_] == '-') ++pos_;
        while (pos_ < s_.size() &&
               (std::isdigit(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '.')) {
            ++pos_;
        }
        auto v = strutil::parse_float(s_.substr(start, pos_ - start));
        if (!v) fail("bad numeric literal");
        auto n = std::make_shared<Node>();
        n->kind = Node::Number;
        n->number = *v;
        return n;
    }

    NodeRef parse_name() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < s_.size() &&
               (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_')) {
            ++pos_;
        }
        std::string name = s_.substr(start, pos_ - start);
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == '(') {
            if (name != "len" && name != "year" && name != "month" && name != "day") {
                fail("unknown function '" + name + "'");
            }
            ++pos_;
            skip_ws();
            std::size_t astart = pos_;
            while (pos_ < s_.size() && s_[pos_] != ')') ++pos_;
            if (pos_ >= s_.size()) fail("missing ')' after " + name + "(");
            std::string arg = strutil::trim_ascii(s_.substr(astart, pos_ - astart));
            ++pos_;
            if (arg.empty()) fail(name + "() needs a column argument");
            auto n = std::make_shared<Node>();
            n->kind = Node::Call;
            n->name = name;
            n->arg = arg;
            return n;
        }
        auto n = std::make_shared<Node>();
        n->kind = Node::Column;
        n->name = name;
        return n;
    }
};

void collect_columns(const Node& n, std::vector<std::string>& out) {
    switch (n.kind) {
        case Node::Column: out.push_back(n.name); break;
        case Node::Call: out.push_back(n.arg); break;
        case Node::Binary:
            collect_columns(*n.lhs, out);
            collect_columns(*n.rhs, out);
            break;
        case Node::Number: break;
    }
}

// Numeric result carrying integer-ness so int arithmetic stays exact.
struct NumValue {
    bool is_null = true;
    bool is_int = false;
    std::int64_t i = 0;
    double d = 0.0;

    static NumValue null() { return {}; }
    static NumValue of_int(std::int64_t v) { return {false, true, v, static_cast<double>(v)}; }
    static NumValue of_double(double v) { return {false, false, 0, v}; }
    double as_double() const { return is_int ? static_cast<double>(i) : d; }
};

NumValue eval_node(const Node& n, const Table& t, std::size_t row) {
    switch (n.kind) {
        case Node::Number: {
            double v = n.number;
            if (v == std::floor(v) && std::abs(v) < 9.0e18) {
                return NumValue::of_int(static_cast<std::int64_t>(v));
            }
            return NumValue::of_double(v);
        }
        case Node::Column: {
            const CellValue& cell = t.cell(row, t.require_column(n.name));
            if (cell.kind() == CellKind::Integer) return NumValue::of_int(cell.as_integer());
            if (cell.kind() == CellKind::Float) return NumValue::of_double(cell.as_float());
            return NumValue::null();  // Null or kind mismatch
        }
        case Node::Call: {
            const CellValue& cell = t.cell(row, t.require_column(n.arg));
            if (cell.is_null()) return NumValue::null();
            if (n.name == "len") {
                return NumValue::of_int(
                    static_cast<std::int64_t>(strutil::codepoint_count(cell.to_text())));
            }
            if (cell.kind() != CellKind::Date) return NumValue::null();
            const CalDate& d = cell.as_date();
            if (n.name == "year") return NumValue::of_int(d.year);
            if (n.name == "month") return NumValue::of_int(d.month);
            return NumValue::of_int(d.day);
        }
        case Node::Binary: {
            NumValue a = eval_node(*n.lhs, t, row);
            NumValue b = eval_node(*n.rhs, t, row);
            if (a.is_null || b.is_null) return NumValue::null();
            if (n.op == '/') {
                if (b.as_double() == 0.0) return NumValue::null();
                return NumValue::of_double(a.as_double() / b.as_double());
            }
            if (a.is_int && b.is_int) {
                std::int64_t r = 0;
                bool overflow = false;
                switch (n.op) {
                    case '+': overflow = __builtin_add_overflow(a.i, b.i, &r); break;
                    case '-': overflow = __builtin_sub_overflow(a.i, b.i, &r); break;
                    case '*': overflow = __builtin_mul_overflow(a.i, b.i, &r); break;
                }
                if (!overflow) return NumValue::of_int(r);
            }
            double x = a.as_double(), y = b.as_double();
            switch (n.op) {
                case '+': return NumValue::of_double(x + y);
                case '-': return NumValue::of_double(x - y);
                default: return NumValue::of_double(x * y);
            }
        }
    }
    return NumValue::null();
}

}  // namespace

MathExpr MathExpr::parse(const std::string& text) {
    MathExpr e;
    e.source_ = text;
    e.root_ = MathParser(text).parse();
    return e;
}

std::vector<std::string> MathExpr::referenced_columns() const {
    std::vector<std::string> out;
    collect_columns(*root_, out);
    // De-duplicate, preserving first appearance.
    std::vector<std::string> uniq;
    for (auto& c : out) {
        bool seen = false;
        for (auto& u : uniq) {
            if (u == c) {
                seen = true;
                break;
            }
        }
        if (!seen) uniq.push_back(c);
    }
    return uniq;
}

CellValue MathExpr::evaluate(const Table& table, std::size_t row) const {
    NumValue v = eval_node(*root_, table, row);
    if (v.is_null) return CellValue::null();
    if (v.is_int) return CellValue::integer(v.i);
    return CellValue::floating(v.d);
}

}  // namespace canontab
