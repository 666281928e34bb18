#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace canontab {

// ---------------------------------------------------------------------------
// QA response parsing

struct SqlPlan {
    std::string select;
    std::string from;
    std::optional<std::string> where;
    std::optional<std::string> order_by;
    std::optional<std::string> aggregation;

    nlohmann::json to_json() const;
};

struct QAResponse {
    std::string reasoning;  // empty when the block is absent
    std::string answer;
    std::optional<SqlPlan> sql_plan;
    std::vector<std::string> warnings;

    nlohmann::json to_json() const;
};

// Extracts the <reasoning>, <answer>, and <sql_plan> blocks (tags matched
// case-insensitively). Duplicated or nested tags keep the first block and
// record a warning. The sql_plan body is parsed line-wise into its labeled
// fields (SELECT/FROM/WHERE/ORDER BY/AGGREGATION). Throws ValidationError
// when the mandatory <answer> block is missing.
QAResponse parse_qa_response(const std::string& text);

// ---------------------------------------------------------------------------
// Answer formatting and F1

// Canonical surface form used for scoring. In order: compose common Latin
// accent sequences, strip the non-semantic characters {@, ;, |}, collapse
// whitespace, rewrite a whole-string date to ISO ("Jan 5, 2018" ->
// "2018-01-05"), rewrite standalone uppercase Roman numerals I..XX to digits,
// lowercase, and strip digit-grouping commas from numeric tokens ("1,234" ->
// "1234"). Total and idempotent.
std::string format_answer(const std::string& raw);

struct EvalRecord {
    std::string id;
    nlohmann::json predicted;
    nlohmann::json gold;
    std::string predicted_formatted;
    std::string gold_formatted;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    nlohmann::json to_json() const;
};

// Token-multiset F1 between formatted answers. Scalars are formatted whole;
// array answers format each element and join them (order-insensitive by
// construction). Both-empty counts as a perfect match. With `exact_match`,
// scalars score 1/0 on formatted equality and arrays are matched as multisets
// of whole formatted elements instead of tokens.
EvalRecord compute_f1(const nlohmann::json& predicted, const nlohmann::json& gold,
                      bool exact_match = false);

// ---------------------------------------------------------------------------
// Agreement statistics

// Cohen's kappa over two aligned label sequences. Chance agreement is the
// product of the raters' marginals. Degenerate p_e == 1 is defined as 1.0
// when observed agreement is also perfect, else 0.0. Throws ValidationError
// on length mismatch or empty input.
double cohen_kappa(const std::vector<std::string>& labels_a,
                   const std::vector<std::string>& labels_b);

// Fleiss' kappa over an items x raters label matrix. Every item needs the
// same rater count >= 2. A single rating category across the whole matrix is
// degenerate: returns 1.0 and records a warning when `warnings` is supplied.
double fleiss_kappa(const std::vector<std::vector<std::string>>& label_matrix,
                    std::vector<std::string>* warnings = nullptr);

// Mean per-item Jaccard coefficient |A∩B|/|A∪B| over aligned lists of label
// sets; a both-empty pair counts 1.0. Throws ValidationError on length
// mismatch or empty input.
double jaccard_agreement(const std::vector<std::set<std::string>>& sets_a,
                         const std::vector<std::set<std::string>>& sets_b);

// ---------------------------------------------------------------------------
// Challenge-set statistics

struct TypeBreakdown {
    std::string label;
    std::size_t count = 0;
    double percent = 0.0;
};

struct ChallengeQuestion {
    std::string answer_type;
    std::string question_type;
};

struct ChallengeStats {
    std::size_t tables = 0;
    std::size_t questions = 0;
    std::vector<TypeBreakdown> answer_types;    // first-appearance order
    std::vector<TypeBreakdown> question_types;
    // Tuple-valued (rows, cols) summaries; the mean is floored and the median
    // is the lower median, per component.
    std::pair<std::int64_t, std::int64_t> mean{0, 0};
    std::pair<std::int64_t, std::int64_t> median{0, 0};
    std::pair<std::int64_t, std::int64_t> min{0, 0};
    std::pair<std::int64_t, std::int64_t> max{0, 0};

    nlohmann::json to_json() const;
};

ChallengeStats challenge_stats(const std::vector<ChallengeQuestion>& questions,
                               const std::vector<std::pair<std::size_t, std::size_t>>& tables);

// ---------------------------------------------------------------------------
// Batch evaluation

struct EvalReport {
    std::vector<EvalRecord> records;
    double mean_precision = 0.0;
    double mean_recall = 0.0;
    double mean_f1 = 0.0;

    nlohmann::json to_json() const;     // aggregate report
    std::string records_jsonl() const;  // one EvalRecord per line
};

// One JSON object per line: {"id", "gold", "predicted"} ("question" allowed
// and ignored). Throws ParseError on malformed lines (with line numbers) and
// ValidationError when no records remain.
EvalReport evaluate_jsonl(const std::string& jsonl, bool exact_match = false);

// Two-file form: predictions lines {"id", "predicted"}, gold lines
// {"id", "gold"}. The id sets must match exactly; orphans on either side are
// listed in the error.
EvalReport evaluate_split(const std::string& predictions_jsonl, const std::string& gold_jsonl,
                          bool exact_match = false);

}  // namespace canontab
