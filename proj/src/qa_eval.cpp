#include "canontab/qa_eval.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "canontab/dates.hpp"
#include "canontab/errors.hpp"
#include "canontab/strutil.hpp"

namespace canontab {

using nlohmann::json;

// ---------------------------------------------------------------------------
// QA response parsing

namespace {

// Content of the first <tag>...</tag> block (indices located on a lowercased
// copy so tags match case-insensitively); `openings` counts every opening tag
// so duplicates and nesting can be flagged.
std::optional<std::string> extract_block(const std::string& text, const std::string& lower,
                                         const std::string& tag, int& openings) {
    const std::string open = "<" + tag + ">";
    const std::string close = "</" + tag + ">";
    openings = 0;
    for (std::size_t at = lower.find(open); at != std::string::npos;
         at = lower.find(open, at + open.size())) {
        ++openings;
    }
    const std::size_t b = lower.find(open);
    if (b == std::string::npos) return std::nullopt;
    const std::size_t start = b + open.size();
    const std::size_t e = lower.find(close, start);
    if (e == std::string::npos) return std::nullopt;
    return text.substr(start, e - start);
}

SqlPlan parse_sql_block(const std::string& body) {
    SqlPlan plan;
    bool have_select = false;
    bool have_from = false;
    for (const std::string& raw_line : strutil::split(body, '\n')) {
        const std::string line = strutil::trim_ascii(raw_line);
        if (line.empty()) continue;
        const std::string lower = strutil::to_lower_ascii(line);
        auto value_after = [&](std::size_t label_len) {
            return strutil::trim_ascii(line.substr(label_len));
        };
        if (strutil::starts_with(lower, "select:")) {
            if (!have_select) plan.select = value_after(7);
            have_select = true;
        } else if (strutil::starts_with(lower, "from:")) {
            if (!have_from) plan.from = value_after(5);
            have_from = true;
        } else if (strutil::starts_with(lower, "where:")) {
            if (!plan.where) plan.where = value_after(6);
        } else if (strutil::starts_with(lower, "order by:")) {
            if (!plan.order_by) plan.order_by = value_after(9);
        } else if (strutil::starts_with(lower, "aggregation:")) {
            if (!plan.aggregation) plan.aggregation = value_after(12);
        }
    }
    return plan;
}

}  // namespace

json SqlPlan::to_json() const {
    json j{{"select", select}, {"from", from}};
    if (where) j["where"] = *where;
    if (order_by) j["order_by"] = *order_by;
    if (aggregation) j["aggregation"] = *aggregation;
    return j;
}

json QAResponse::to_json() const {
    json j{{"reasoning", reasoning}, {"answer", answer}, {"warnings", warnings}};
    if (sql_plan) j["sql_plan"] = sql_plan->to_json();
    return j;
}

QAResponse parse_qa_response(const std::string& text) {
    const std::string lower = strutil::to_lower_ascii(text);
    QAResponse out;

    int answer_tags = 0;
    auto answer = extract_block(text, lower, "answer", answer_tags);
    if (!answer) {
        throw ValidationError("qa response has no complete <answer> block");
    }
    out.answer = strutil::trim_unicode(*answer);
    if (answer_tags > 1) {
        out.warnings.push_back("multiple <answer> tags; using the first block");
    }

    int reasoning_tags = 0;
    if (auto block = extract_block(text, lower, "reasoning", reasoning_tags)) {
        out.reasoning = strutil::trim_unicode(*block);
    }
    if (reasoning_tags > 1) {
        out.warnings.push_back("multiple <reasoning> tags; using the first block");
    }

    int sql_tags = 0;
    if (auto block = extract_block(text, lower, "sql_plan", sql_tags)) {
        out.sql_plan = parse_sql_block(*block);
    }
    if (sql_tags > 1) {
        out.warnings.push_back("multiple <sql_plan> tags; using the first block");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Answer formatting

namespace {

// Precomposed Latin form for an ASCII base letter plus one combining mark,
// or 0 when the pair has no single-codepoint form.
std::uint32_t compose_accent(std::uint32_t base, std::uint32_t mark) {
    auto pick = [&](const char* bases, const std::uint32_t* composed) -> std::uint32_t {
        for (std::size_t i = 0; bases[i]; ++i) {
            if (static_cast<std::uint32_t>(bases[i]) == base) return composed[i];
        }
        return 0;
    };
    switch (mark) {
        case 0x300: {  // grave
            static const std::uint32_t t[] = {0xE0, 0xE8, 0xEC, 0xF2, 0xF9,
                                              0xC0, 0xC8, 0xCC, 0xD2, 0xD9};
            return pick("aeiouAEIOU", t);
        }
        case 0x301: {  // acute
            static const std::uint32_t t[] = {0xE1, 0xE9, 0xED, 0xF3, 0xFA, 0xFD,
                                              0xC1, 0xC9, 0xCD, 0xD3, 0xDA, 0xDD};
            return pick("aeiouyAEIOUY", t);
        }
        case 0x302: {  // circumflex
            static const std::uint32_t t[] = {0xE2, 0xEA, 0xEE, 0xF4, 0xFB,
                                              0xC2, 0xCA, 0xCE, 0xD4, 0xDB};
            return pick("aeiouAEIOU", t);
        }
        case 0x303: {  // tilde
            static const std::uint32_t t[] = {0xE3, 0xF5, 0xF1, 0xC3, 0xD5, 0xD1};
            return pick("aonAON", t);
        }
        case 0x308: {  // diaeresis
            static const std::uint32_t t[] = {0xE4, 0xEB, 0xEF, 0xF6, 0xFC, 0xFF,
                                              0xC4, 0xCB, 0xCF, 0xD6, 0xDC};
            return pick("aeiouyAEIOU", t);
        }
        case 0x30A: {  // ring above
            static const std::uint32_t t[] = {0xE5, 0xC5};
            return pick("aA", t);
        }
        case 0x327: {  // cedilla
            static const std::uint32_t t[] = {0xE7, 0xC7};
            return pick("cC", t);
        }
        default: return 0;
    }
}

const std::map<std::string, int>& roman_numerals() {
    static const std::map<std::string, int> map = {
        {"I", 1},    {"II", 2},    {"III", 3},   {"IV", 4},    {"V", 5},
        {"VI", 6},   {"VII", 7},   {"VIII", 8},  {"IX", 9},    {"X", 10},
        {"XI", 11},  {"XII", 12},  {"XIII", 13}, {"XIV", 14},  {"XV", 15},
        {"XVI", 16}, {"XVII", 17}, {"XVIII", 18}, {"XIX", 19}, {"XX", 20},
    };
    return map;
}

// [+-]?\d{1,3}(,\d{3})+(\.\d+)? — a number whose commas are digit grouping.
bool is_comma_grouped_number(const std::string& t) {
    std::size_t i = 0;
    if (i < t.size() && (t[i] == '+' || t[i] == '-')) ++i;
    std::size_t digits = 0;
    while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) {
        ++digits;
        ++i;
    }
    if (digits < 1 || digits > 3) return false;
    std::size_t groups = 0;
    while (i < t.size() && t[i] == ',') {
        ++i;
        for (int k = 0; k < 3; ++k, ++i) {
            if (i >= t.size() || !std::isdigit(static_cast<unsigned char>(t[i]))) return false;
        }
        ++groups;
    }
    if (groups == 0) return false;
    if (i < t.size() && t[i] == '.') {
        ++i;
        std::size_t frac = 0;
        while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) {
            ++frac;
            ++i;
        }
        if (frac == 0) return false;
    }
    return i == t.size();
}

std::vector<std::string> space_tokens(const std::string& s) {
    std::vector<std::string> out;
    for (auto& t : strutil::split(s, ' ')) {
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

}  // namespace

std::string format_answer(const std::string& raw) {
    // Compose accents, drop {@, ;, |}, and collapse whitespace in one
    // codepoint pass.
    std::vector<std::uint32_t> cps;
    for (std::size_t pos = 0; pos < raw.size();) {
        const std::uint32_t cp = strutil::decode_utf8(raw, pos);
        if (cp == '@' || cp == ';' || cp == '|') continue;
        if (!cps.empty()) {
            if (const std::uint32_t composed = compose_accent(cps.back(), cp)) {
                cps.back() = composed;
                continue;
            }
        }
        cps.push_back(cp);
    }
    std::string s;
    bool pending_space = false;
    for (const std::uint32_t cp : cps) {
        if (strutil::is_unicode_space(cp)) {
            pending_space = !s.empty();
            continue;
        }
        if (pending_space) s += ' ';
        pending_space = false;
        strutil::encode_utf8(cp, s);
    }

    if (auto date = parse_date_builtin(s)) return date->to_iso();

    std::vector<std::string> tokens = space_tokens(s);
    for (std::string& t : tokens) {
        const auto it = roman_numerals().find(t);
        if (it != roman_numerals().end()) {
            t = std::to_string(it->second);
            continue;
        }
        t = strutil::to_lower_ascii(t);
        if (is_comma_grouped_number(t)) {
            t.erase(std::remove(t.begin(), t.end(), ','), t.end());
        }
    }
    return join_tokens(tokens);
}

// ---------------------------------------------------------------------------
// F1

namespace {

std::string scalar_text(const json& v) {
    if (v.is_null()) return "";
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

std::vector<std::string> formatted_elements(const json& v) {
    std::vector<std::string> out;
    if (v.is_array()) {
        for (const json& e : v) out.push_back(format_answer(scalar_text(e)));
    } else {
        out.push_back(format_answer(scalar_text(v)));
    }
    return out;
}

std::vector<std::string> non_empty(std::vector<std::string> items) {
    items.erase(std::remove(items.begin(), items.end(), std::string()), items.end());
    return items;
}

std::size_t multiset_overlap(const std::vector<std::string>& a,
                             const std::vector<std::string>& b) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : a) ++counts[t];
    std::size_t overlap = 0;
    for (const auto& t : b) {
        auto it = counts.find(t);
        if (it != counts.end() && it->second > 0) {
            --it->second;
            ++overlap;
        }
    }
    return overlap;
}

}  // namespace

json EvalRecord::to_json() const {
    return {{"id", id},
            {"predicted", predicted},
            {"gold", gold},
            {"predicted_formatted", predicted_formatted},
            {"gold_formatted", gold_formatted},
            {"precision", precision},
            {"recall", recall},
            {"f1", f1}};
}

EvalRecord compute_f1(const json& predicted, const json& gold, bool exact_match) {
    EvalRecord rec;
    rec.predicted = predicted;
    rec.gold = gold;
    const std::vector<std::string> pred_elements = formatted_elements(predicted);
    const std::vector<std::string> gold_elements = formatted_elements(gold);
    rec.predicted_formatted = join_tokens(pred_elements);
    rec.gold_formatted = join_tokens(gold_elements);

    std::vector<std::string> p, g;
    if (exact_match) {
        p = non_empty(pred_elements);
        g = non_empty(gold_elements);
    } else {
        p = space_tokens(rec.predicted_formatted);
        g = space_tokens(rec.gold_formatted);
    }

    if (p.empty() && g.empty()) {
        rec.precision = rec.recall = rec.f1 = 1.0;
        return rec;
    }
    const std::size_t overlap = multiset_overlap(p, g);
    rec.precision = p.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(p.size());
    rec.recall = g.empty() ? 0.0 : static_cast<double>(overlap) / static_cast<double>(g.size());
    rec.f1 = (rec.precision + rec.recall) > 0.0
                 ? 2.0 * rec.precision * rec.recall / (rec.precision + rec.recall)
                 : 0.0;
    return rec;
}

// ---------------------------------------------------------------------------
// Agreement statistics

double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b) {
    if (labels_a.size() != labels_b.size()) {
        throw ValidationError("label sequences differ in length: " +
                              std::to_string(labels_a.size()) + " vs " +
                              std::to_string(labels_b.size()));
    }
    if (labels_a.empty()) throw ValidationError("cannot compute agreement over zero labels");

    const std::size_t n = labels_a.size();
    std::size_t matches = 0;
    std::map<std::string, std::size_t> count_a, count_b;
    for (std::size_t i = 0; i < n; ++i) {
        if (labels_a[i] == labels_b[i]) ++matches;
        ++count_a[labels_a[i]];
        ++count_b[labels_b[i]];
    }
    // pe as an exact integer ratio over n^2 keeps the degenerate case exact.
    std::uint64_t pe_num = 0;
    for (const auto& [label, ca] : count_a) {
        auto it = count_b.find(label);
        if (it != count_b.end()) pe_num += static_cast<std::uint64_t>(ca) * it->second;
    }
    const std::uint64_t n2 = static_cast<std::uint64_t>(n) * n;
    if (pe_num == n2) return matches == n ? 1.0 : 0.0;
    const double po = static_cast<double>(matches) / static_cast<double>(n);
    const double pe = static_cast<double>(pe_num) / static_cast<double>(n2);
    return (po - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<std::vector<std::string>>& label_matrix,
                    std::vector<std::string>* warnings) {
    if (label_matrix.empty()) throw ValidationError("cannot compute agreement over zero items");
    const std::size_t raters = label_matrix[0].size();
    if (raters < 2) throw ValidationError("every item needs at least two raters");
    for (std::size_t i = 0; i < label_matrix.size(); ++i) {
        if (label_matrix[i].size() != raters) {
            throw ValidationError("item " + std::to_string(i) + " has " +
                                  std::to_string(label_matrix[i].size()) + " ratings, expected " +
                                  std::to_string(raters));
        }
    }

    std::map<std::string, std::size_t> category_index;
    for (const auto& row : label_matrix) {
        for (const auto& label : row) category_index.emplace(label, category_index.size());
    }
    if (category_index.size() < 2) {
        if (warnings) {
            warnings->push_back("single rating category; agreement is trivially perfect");
        }
        return 1.0;
    }

    const std::size_t items = label_matrix.size();
    std::vector<std::size_t> column_sums(category_index.size(), 0);
    double p_bar = 0.0;
    for (const auto& row : label_matrix) {
        std::map<std::string, std::size_t> counts;
        for (const auto& label : row) ++counts[label];
        std::size_t sum_sq = 0;
        for (const auto& [label, c] : counts) {
            sum_sq += c * c;
            column_sums[category_index[label]] += c;
        }
        p_bar += static_cast<double>(sum_sq - raters) /
                 static_cast<double>(raters * (raters - 1));
    }
    p_bar /= static_cast<double>(items);

    double p_e = 0.0;
    for (const std::size_t sum : column_sums) {
        const double p = static_cast<double>(sum) / static_cast<double>(items * raters);
        p_e += p * p;
    }
    return (p_bar - p_e) / (1.0 - p_e);
}

double jaccard_agreement(const std::vector<std::set<std::string>>& sets_a,
                         const std::vector<std::set<std::string>>& sets_b) {
    if (sets_a.size() != sets_b.size()) {
        throw ValidationError("set lists differ in length: " + std::to_string(sets_a.size()) +
                              " vs " + std::to_string(sets_b.size()));
    }
    if (sets_a.empty()) throw ValidationError("cannot compute agreement over zero items");

    double sum = 0.0;
    for (std::size_t i = 0; i < sets_a.size(); ++i) {
        const auto& a = sets_a[i];
        const auto& b = sets_b[i];
        if (a.empty() && b.empty()) {
            sum += 1.0;
            continue;
        }
        std::size_t inter = 0;
        for (const auto& x : a) inter += b.count(x);
        sum += static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
    }
    return sum / static_cast<double>(sets_a.size());
}

// ---------------------------------------------------------------------------
// Challenge-set statistics

namespace {

std::vector<TypeBreakdown> breakdown(const std::vector<std::string>& labels) {
    std::vector<TypeBreakdown> out;
    for (const std::string& label : labels) {
        auto it = std::find_if(out.begin(), out.end(),
                               [&](const TypeBreakdown& t) { return t.label == label; });
        if (it == out.end()) {
            out.push_back({label, 1, 0.0});
        } else {
            ++it->count;
        }
    }
    for (TypeBreakdown& t : out) {
        t.percent = 100.0 * static_cast<double>(t.count) / static_cast<double>(labels.size());
    }
    return out;
}

json breakdown_json(const std::vector<TypeBreakdown>& items) {
    json out = json::array();
    for (const TypeBreakdown& t : items) {
        out.push_back({{"label", t.label}, {"count", t.count}, {"percent", t.percent}});
    }
    return out;
}

json pair_json(const std::pair<std::int64_t, std::int64_t>& p) {
    return json::array({p.first, p.second});
}

}  // namespace

json ChallengeStats::to_json() const {
    return {{"tables", tables},
            {"questions", questions},
            {"answer_types", breakdown_json(answer_types)},
            {"question_types", breakdown_json(question_types)},
            {"rows_cols",
             {{"mean", pair_json(mean)},
              {"median", pair_json(median)},
              {"min", pair_json(min)},
              {"max", pair_json(max)}}}};
}

ChallengeStats challenge_stats(const std::vector<ChallengeQuestion>& questions,
                               const std::vector<std::pair<std::size_t, std::size_t>>& tables) {
    ChallengeStats stats;
    stats.questions = questions.size();
    stats.tables = tables.size();

    std::vector<std::string> answer_labels, question_labels;
    for (const auto& q : questions) {
        answer_labels.push_back(q.answer_type);
        question_labels.push_back(q.question_type);
    }
    stats.answer_types = breakdown(answer_labels);
    stats.question_types = breakdown(question_labels);

    if (!tables.empty()) {
        std::vector<std::int64_t> rows, cols;
        std::int64_t row_sum = 0, col_sum = 0;
        for (const auto& [r, c] : tables) {
            rows.push_back(static_cast<std::int64_t>(r));
            cols.push_back(static_cast<std::int64_t>(c));
            row_sum += rows.back();
            col_sum += cols.back();
        }
        std::sort(rows.begin(), rows.end());
        std::sort(cols.begin(), cols.end());
        const std::int64_t n = static_cast<std::int64_t>(tables.size());
        stats.mean = {row_sum / n, col_sum / n};  // floored: sums are non-negative
        stats.median = {rows[(rows.size() - 1) / 2], cols[(cols.size() - 1) / 2]};
        stats.min = {rows.front(), cols.front()};
        stats.max = {rows.back(), cols.back()};
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Batch evaluation

json EvalReport::to_json() const {
    return {{"records", records.size()},
            {"mean_precision", mean_precision},
            {"mean_recall", mean_recall},
            {"mean_f1", mean_f1}};
}

std::string EvalReport::records_jsonl() const {
    std::string out;
    for (const EvalRecord& r : records) {
        out += r.to_json().dump();
        out += '\n';
    }
    return out;
}

namespace {

std::string id_text(const json& row, std::size_t line_no) {
    if (!row.contains("id")) {
        throw ParseError("line " + std::to_string(line_no) + ": missing 'id'");
    }
    return scalar_text(row["id"]);
}

std::vector<std::pair<std::size_t, json>> parse_jsonl(const std::string& text) {
    std::vector<std::pair<std::size_t, json>> rows;
    std::size_t line_no = 0;
    for (const std::string& line : strutil::split(text, '\n')) {
        ++line_no;
        const std::string trimmed = strutil::trim_ascii(line);
        if (trimmed.empty()) continue;
        json row;
        try {
            row = json::parse(trimmed);
        } catch (const json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
        if (!row.is_object()) {
            throw ParseError("line " + std::to_string(line_no) + ": expected a JSON object");
        }
        rows.emplace_back(line_no, std::move(row));
    }
    return rows;
}

EvalReport finish_report(std::vector<EvalRecord> records) {
    if (records.empty()) throw ValidationError("no records to evaluate");
    EvalReport report;
    report.records = std::move(records);
    for (const EvalRecord& r : report.records) {
        report.mean_precision += r.precision;
        report.mean_recall += r.recall;
        report.mean_f1 += r.f1;
    }
    const double n = static_cast<double>(report.records.size());
    report.mean_precision /= n;
    report.mean_recall /= n;
    report.mean_f1 /= n;
    return report;
}

}  // namespace

EvalReport evaluate_jsonl(const std::string& jsonl, bool exact_match) {
    std::vector<EvalRecord> records;
    for (const auto& [line_no, row] : parse_jsonl(jsonl)) {
        const std::string id = id_text(row, line_no);
        if (!row.contains("gold") || !row.contains("predicted")) {
            throw ParseError("line " + std::to_string(line_no) +
                             ": expected {id, gold, predicted}");
        }
        EvalRecord rec = compute_f1(row["predicted"], row["gold"], exact_match);
        rec.id = id;
        records.push_back(std::move(rec));
    }
    return finish_report(std::move(records));
}

EvalReport evaluate_split(const std::string& predictions_jsonl, const std::string& gold_jsonl,
                          bool exact_match) {
    std::vector<std::pair<std::string, json>> predictions;
    std::map<std::string, json> gold;

    for (const auto& [line_no, row] : parse_jsonl(predictions_jsonl)) {
        const std::string id = id_text(row, line_no);
        if (!row.contains("predicted")) {
            throw ParseError("predictions line " + std::to_string(line_no) +
                             ": missing 'predicted'");
        }
        for (const auto& [seen, unused] : predictions) {
            if (seen == id) {
                throw ValidationError("duplicate id '" + id + "' in predictions");
            }
        }
        predictions.emplace_back(id, row["predicted"]);
    }
    for (const auto& [line_no, row] : parse_jsonl(gold_jsonl)) {
        const std::string id = id_text(row, line_no);
        if (!row.contains("gold")) {
            throw ParseError("gold line " + std::to_string(line_no) + ": missing 'gold'");
        }
        if (!gold.emplace(id, row["gold"]).second) {
            throw ValidationError("duplicate id '" + id + "' in gold");
        }
    }

    std::vector<std::string> only_predictions, only_gold;
    for (const auto& [id, unused] : predictions) {
        if (!gold.count(id)) only_predictions.push_back(id);
    }
    for (const auto& [id, unused] : gold) {
        const bool present = std::any_of(predictions.begin(), predictions.end(),
                                         [&](const auto& p) { return p.first == id; });
        if (!present) only_gold.push_back(id);
    }
    if (!only_predictions.empty() || !only_gold.empty()) {
        std::string msg = "id mismatch between files;";
        if (!only_predictions.empty()) {
            msg += " only in predictions:";
            for (const auto& id : only_predictions) msg += " " + id;
            msg += ";";
        }
        if (!only_gold.empty()) {
            msg += " only in gold:";
            for (const auto& id : only_gold) msg += " " + id;
        }
        throw ValidationError(msg);
    }

    std::vector<EvalRecord> records;
    for (const auto& [id, predicted] : predictions) {
        EvalRecord rec = compute_f1(predicted, gold.at(id), exact_match);
        rec.id = id;
        records.push_back(std::move(rec));
    }
    return finish_report(std::move(records));
}

}  // namespace canontab
