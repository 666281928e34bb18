#include "canontab/dates.hpp"

#include <array>
#include <cctype>

#include "canontab/strutil.hpp"

namespace canontab {

namespace {

const std::array<const char*, 12> kMonthsFull = {
    "january", "february", "march",     "april",   "may",      "june",
    "july",    "august",   "september", "october", "november", "december"};

// Month number from a name or common abbreviation ("sept" included), else 0.
int month_from_name(std::string_view word) {
    std::string w = strutil::to_lower_ascii(word);
    if (!w.empty() && w.back() == '.') w.pop_back();
    if (w.size() < 3) return 0;
    if (w == "sept") return 9;
    for (int m = 0; m < 12; ++m) {
        std::string_view full = kMonthsFull[static_cast<std::size_t>(m)];
        if (w == full || w == full.substr(0, 3)) return m + 1;
    }
    return 0;
}

struct Cursor {
    std::string_view s;
    std::size_t i = 0;

    bool eof() const { return i >= s.size(); }
    char peek() const { return s[i]; }
    void skip_spaces() {
        while (!eof() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    // Reads 1..max_digits digits, -1 when none.
    int read_int(int max_digits) {
        int v = 0, n = 0;
        while (!eof() && n < max_digits && std::isdigit(static_cast<unsigned char>(s[i]))) {
            v = v * 10 + (s[i] - '0');
            ++i;
            ++n;
        }
        return n ? v : -1;
    }
    std::string_view read_word() {
        std::size_t start = i;
        while (!eof() && (std::isalpha(static_cast<unsigned char>(s[i])) || s[i] == '.')) ++i;
        return s.substr(start, i - start);
    }
    bool skip_ordinal_suffix() {
        for (std::string_view suf : {"st", "nd", "rd", "th"}) {
            if (i + suf.size() <= s.size() &&
                strutil::to_lower_ascii(s.substr(i, suf.size())) == suf) {
                i += suf.size();
                return true;
            }
        }
        return false;
    }
};

std::optional<CalDate> checked(int y, int m, int d) {
    if (CalDate::valid(y, m, d)) return CalDate{y, m, d};
    return std::nullopt;
}

// YYYY-MM-DD (month/day may be one digit).
std::optional<CalDate> try_iso(std::string_view s) {
    Cursor c{s};
    int sign = 1;
    if (!c.eof() && c.peek() == '-') {
        sign = -1;
        ++c.i;
    }
    int y = c.read_int(4);
    if (y < 0 || c.eof() || c.peek() != '-') return std::nullopt;
    ++c.i;
    int m = c.read_int(2);
    if (m < 0 || c.eof() || c.peek() != '-') return std::nullopt;
    ++c.i;
    int d = c.read_int(2);
    if (d < 0 || !c.eof()) return std::nullopt;
    return checked(sign * y, m, d);
}

// "Month D, YYYY" / "Month Dth YYYY" (comma optional).
std::optional<CalDate> try_month_first(std::string_view s) {
    Cursor c{s};
    int m = month_from_name(c.read_word());
    if (m == 0) return std::nullopt;
    c.skip_spaces();
    int d = c.read_int(2);
    if (d < 0) return std::nullopt;
    c.skip_ordinal_suffix();
    c.skip_spaces();
    if (!c.eof() && c.peek() == ',') ++c.i;
    c.skip_spaces();
    int y = c.read_int(4);
    if (y < 0 || !c.eof()) return std::nullopt;
    return checked(y, m, d);
}

// "D Month YYYY" / "11th October 2020" (comma after month tolerated).
std::optional<CalDate> try_day_first_name(std::string_view s) {
    Cursor c{s};
    int d = c.read_int(2);
    if (d < 0) return std::nullopt;
    c.skip_ordinal_suffix();
    c.skip_spaces();
    if (!c.eof() && c.peek() == ' ') c.skip_spaces();
    int m = month_from_name(c.read_word());
    if (m == 0) return std::nullopt;
    c.skip_spaces();
    if (!c.eof() && c.peek() == ',') ++c.i;
    c.skip_spaces();
    int y = c.read_int(4);
    if (y < 0 || !c.eof()) return std::nullopt;
    return checked(y, m, d);
}

struct SlashParts {
    int a = -1, b = -1, y = -1;
};

std::optional<SlashParts> split_slash(std::string_view text) {
    std::string t = strutil::trim_unicode(text);
    Cursor cc{t};
    SlashParts p;
    p.a = cc.read_int(2);
    if (p.a < 0 || cc.eof() || cc.peek() != '/') return std::nullopt;
    ++cc.i;
    p.b = cc.read_int(2);
    if (p.b < 0 || cc.eof() || cc.peek() != '/') return std::nullopt;
    ++cc.i;
    p.y = cc.read_int(4);
    if (p.y < 0 || p.y < 1000 || !cc.eof()) return std::nullopt;
    return p;
}

}  // namespace

std::optional<CalDate> parse_date_builtin(std::string_view text) {
    std::string t = strutil::trim_unicode(text);
    if (t.empty()) return std::nullopt;
    if (auto d = try_iso(t)) return d;
    if (auto d = try_month_first(t)) return d;
    if (auto d = try_day_first_name(t)) return d;
    return std::nullopt;
}

std::optional<CalDate> parse_date_slash(std::string_view text, bool day_first) {
    auto p = split_slash(text);
    if (!p) return std::nullopt;
    int m = day_first ? p->b : p->a;
    int d = day_first ? p->a : p->b;
    return checked(p->y, m, d);
}

bool slash_date_forces_day_first(std::string_view text) {
    auto p = split_slash(text);
    return p && p->a > 12;
}

std::optional<CalDate> parse_date_format(std::string_view text, std::string_view format) {
    std::string t = strutil::trim_unicode(text);
    Cursor c{t};
    int y = -1, m = -1, d = -1;
    for (std::size_t f = 0; f < format.size(); ++f) {
        if (format[f] == '%' && f + 1 < format.size()) {
            char spec = format[++f];
            switch (spec) {
                case 'Y': y = c.read_int(4); if (y < 0) return std::nullopt; break;
                case 'm': m = c.read_int(2); if (m < 0) return std::nullopt; break;
                case 'd':
                    d = c.read_int(2);
                    if (d < 0) return std::nullopt;
                    c.skip_ordinal_suffix();
                    break;
                case 'b':
                case 'B': {
                    m = month_from_name(c.read_word());
                    if (m == 0) return std::nullopt;
                    break;
                }
                case '%':
                    if (c.eof() || c.peek() != '%') return std::nullopt;
                    ++c.i;
                    break;
                default: return std::nullopt;  // unknown specifier
            }
        } else if (format[f] == ' ') {
            if (c.eof() || (c.peek() != ' ' && c.peek() != '\t')) return std::nullopt;
            c.skip_spaces();
        } else {
            if (c.eof() || c.peek() != format[f]) return std::nullopt;
            ++c.i;
        }
    }
    if (!c.eof() || y < 0 || m < 0 || d < 0) return std::nullopt;
    return checked(y, m, d);
}

std::optional<CalDate> parse_date_text(std::string_view text,
                                       const std::vector<std::string>& formats,
                                       bool day_first) {
    for (const auto& f : formats) {
        if (auto v = parse_date_format(text, f)) return v;
    }
    if (auto v = parse_date_builtin(text)) return v;
    return parse_date_slash(strutil::trim_unicode(text), day_first);
}

}  // namespace canontab
