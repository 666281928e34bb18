#include "canontab/cell.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace canontab {

const char* kind_name(CellKind k) {
    switch (k) {
        case CellKind::Null: return "null";
        case CellKind::Boolean: return "boolean";
        case CellKind::Integer: return "integer";
        case CellKind::Float: return "float";
        case CellKind::Text: return "text";
        case CellKind::Date: return "date";
    }
    return "null";
}

std::optional<CellKind> kind_from_name(const std::string& name) {
    if (name == "null") return CellKind::Null;
    if (name == "boolean") return CellKind::Boolean;
    if (name == "integer") return CellKind::Integer;
    if (name == "float") return CellKind::Float;
    if (name == "text") return CellKind::Text;
    if (name == "date") return CellKind::Date;
    return std::nullopt;
}

bool CalDate::valid(int year, int month, int day) {
    if (month < 1 || month > 12 || day < 1) return false;
    static constexpr std::array<int, 12> days{31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    int max_day = days[static_cast<std::size_t>(month - 1)];
    bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    if (month == 2 && leap) max_day = 29;
    return day <= max_day;
}

std::string CalDate::to_iso() const {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%s%04d-%02d-%02d", year < 0 ? "-" : "",
                  year < 0 ? -year : year, month, day);
    return buf;
}

CellValue CellValue::floating(double d) {
    if (!std::isfinite(d)) return null();
    return CellValue(Payload(d));
}

CellValue CellValue::date(CalDate d) {
    if (!CalDate::valid(d.year, d.month, d.day)) return null();
    return CellValue(Payload(d));
}

CellKind CellValue::kind() const {
    switch (v_.index()) {
        case 0: return CellKind::Null;
        case 1: return CellKind::Boolean;
        case 2: return CellKind::Integer;
        case 3: return CellKind::Float;
        case 4: return CellKind::Text;
        case 5: return CellKind::Date;
    }
    return CellKind::Null;
}

std::optional<double> CellValue::numeric() const {
    if (kind() == CellKind::Integer) return static_cast<double>(as_integer());
    if (kind() == CellKind::Float) return as_float();
    return std::nullopt;
}

std::string CellValue::to_text() const {
    switch (kind()) {
        case CellKind::Null: return "";
        case CellKind::Boolean: return as_boolean() ? "true" : "false";
        case CellKind::Integer: return std::to_string(as_integer());
        case CellKind::Float: return format_double(as_float());
        case CellKind::Text: return as_text();
        case CellKind::Date: return as_date().to_iso();
    }
    return "";
}

int CellValue::compare(const CellValue& a, const CellValue& b) {
    auto cls = [](CellKind k) {
        switch (k) {
            case CellKind::Null: return 0;
            case CellKind::Boolean: return 1;
            case CellKind::Integer:
            case CellKind::Float: return 2;
            case CellKind::Text: return 3;
            case CellKind::Date: return 4;
        }
        return 0;
    };
    int ca = cls(a.kind()), cb = cls(b.kind());
    if (ca != cb) return ca < cb ? -1 : 1;
    switch (ca) {
        case 0: return 0;
        case 1: {
            int x = a.as_boolean() ? 1 : 0, y = b.as_boolean() ? 1 : 0;
            return x == y ? 0 : (x < y ? -1 : 1);
        }
        case 2: {
            // Exact int-int compare avoids double rounding for large values.
            if (a.kind() == CellKind::Integer && b.kind() == CellKind::Integer) {
                auto x = a.as_integer(), y = b.as_integer();
                return x == y ? 0 : (x < y ? -1 : 1);
            }
            double x = *a.numeric(), y = *b.numeric();
            return x == y ? 0 : (x < y ? -1 : 1);
        }
        case 3: {
            int c = a.as_text().compare(b.as_text());
            return c == 0 ? 0 : (c < 0 ? -1 : 1);
        }
        case 4: {
            if (a.as_date() == b.as_date()) return 0;
            return a.as_date() < b.as_date() ? -1 : 1;
        }
    }
    return 0;
}

std::string format_double(double d) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, d);
    return std::string(buf, res.ptr);
}

}  // namespace canontab
