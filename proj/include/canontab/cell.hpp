#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>

namespace canontab {

enum class CellKind { Null, Boolean, Integer, Float, Text, Date };

const char* kind_name(CellKind k);
std::optional<CellKind> kind_from_name(const std::string& name);

// Calendar date, proleptic Gregorian, no timezone.
struct CalDate {
    int year = 0;
    int month = 1;
    int day = 1;

    bool operator==(const CalDate&) const = default;
    auto operator<=>(const CalDate&) const = default;

    static bool valid(int year, int month, int day);
    // "YYYY-MM-DD", zero-padded, with '-' sign for negative years.
    std::string to_iso() const;
};

// Tagged scalar cell. Integer/Float payloads are always finite; attempts to
// store NaN/Inf produce Null (callers that care check `is_null`).
class CellValue {
public:
    CellValue() : v_(std::monostate{}) {}

    static CellValue null() { return CellValue(); }
    static CellValue boolean(bool b) { return CellValue(Payload(b)); }
    static CellValue integer(std::int64_t i) { return CellValue(Payload(i)); }
    static CellValue floating(double d);  // non-finite -> Null
    static CellValue text(std::string s) { return CellValue(Payload(std::move(s))); }
    static CellValue date(CalDate d);  // invalid date -> Null

    CellKind kind() const;
    bool is_null() const { return kind() == CellKind::Null; }

    bool as_boolean() const { return std::get<bool>(v_); }
    std::int64_t as_integer() const { return std::get<std::int64_t>(v_); }
    double as_float() const { return std::get<double>(v_); }
    const std::string& as_text() const { return std::get<std::string>(v_); }
    const CalDate& as_date() const { return std::get<CalDate>(v_); }

    // Numeric value of Integer/Float cells.
    std::optional<double> numeric() const;

    // Canonical text rendering: "" for Null, "true"/"false", decimal integers,
    // shortest round-trip decimal for floats, ISO dates, Text verbatim.
    std::string to_text() const;

    // Strict equality: kind and payload both match.
    bool operator==(const CellValue& other) const { return v_ == other.v_; }

    // Total order used by sort: Null < Boolean < numeric < Text < Date,
    // Integer and Float compared by value within the numeric class.
    // Returns <0, 0, >0.
    static int compare(const CellValue& a, const CellValue& b);

private:
    using Payload = std::variant<std::monostate, bool, std::int64_t, double, std::string, CalDate>;
    explicit CellValue(Payload p) : v_(std::move(p)) {}
    Payload v_;
};

// Shortest decimal rendering that round-trips the double exactly.
std::string format_double(double d);

}  // namespace canontab
