#include "canontab/llm.hpp"

#include <algorithm>

#include "canontab/errors.hpp"
#include "canontab/table_io.hpp"

namespace canontab {

namespace {

// Stage-1 template; slots: {{table_title}}, {{column_description_text}},
// {{raw_markdown_table}}.
constexpr const char* kIssueTemplate = R"TPL(You are generating analysis questions from a raw, unprocessed table.

Table Title:
"{{table_title}}"

Column Descriptions:
{{column_description_text}}

Table (Markdown):
{{raw_markdown_table}}

Objective:
- Produce between 12-20 diverse, realistic questions that expose structural or
  semantic deficiencies in the raw table.
- Questions should not be reliably answerable directly from this raw table
  without cleaning, structuring, or transforming the data.

Output format:
- Return ONLY a JSON ARRAY (no prose, no explanation, no markdown, no backticks).
- The entire response MUST be valid JSON starting with [ and ending with ].
- Each item MUST be a JSON OBJECT with these exact keys:
  - "qid": string like "Q1", "Q2", ... (contiguous, no gaps)
  - "text": natural language question (escape internal quotes with backslash)
  - "depends_on": list of raw column names, or ["unknown"] if unclear
  - "requires": list of preprocessing needs
  - "failure_reason": short phrase explaining why the raw table is insufficient

Constraints:
- Output ONLY the JSON array. No text before or after.
- Use double quotes for all strings.
- Escape quotes inside strings with backslash.
- No trailing commas.)TPL";

// Stage-2 template; slots: {Transformation Operations List}, {Examples}.
// The concrete inputs (title, descriptions, table, stage-1 artifact) are
// appended under an INPUTS heading.
constexpr const char* kPlanTemplate = R"TPL(You are STEP_2_PLANNER, a specialist that designs JSON transformation plans
for arbitrary tabular data.


You NEVER write code. You only output a MACHINE-EXECUTABLE PLAN in JSON
that another system will implement.


You are given:


- TABLE_TITLE: short description of the table.
- COLUMN_DESCRIPTIONS: optional text describing columns.
- RAW_TABLE_MD: the raw table in Markdown (one header row, many data rows).
- STEP1_JSON: the FULL Step-1 output, with structure:


 {
   "questions": [ ... ],
   "issues": [ ... ]
 }


Each issue in STEP1_JSON["issues"] has at least:
 - issue_id
 - description
 - cols
 - blocking_questions or similar fields


Each question in STEP1_JSON["questions"] has at least:
 - qid
 - text
 - depends_on
 - and possibly other metadata




YOUR JOB (STEP 2)




Design a transformation plan that:


1. FIXES ALL ISSUES
2. OPENS UP THE TABLE with derived columns
3. RESPECT THE RAW SNAPSHOT POLICY




PLAN STRUCTURE




Output ONE JSON OBJECT with this shape:


{
 "table_id": string,
 "strategy": string,
 "steps": [
   {
     "step_id": string,
     "op": string,
     "description": string,
     "reads": [string],
     "writes": [string],
     "params": { ... },
     "fixes_issues": [string],
     "depends_on": [string]
   }
 ],
 "final_output": {
   "primary_key": [string],
   "columns": [
     {
       "name": string,
       "role": "canonical" | "derived" | "helper" | "raw_snapshot"
     }
   ]
 }
}




{Transformation Operations List}
The operator list above defines the STANDARD operator vocabulary and SHOULD be
used whenever possible. However, the planner is not strictly closed-world.


If a required transformation cannot be faithfully expressed using the listed
operators, the planner MAY propose a "custom" operation.




CRITICAL CONSTRAINTS (MUST FOLLOW)




1. **NEVER use explode_entities** - It creates duplicate rows which breaks the table structure.
  Instead, extract information into new columns while keeping row count the same.


2. **ROW COUNT MUST STAY THE SAME** - The output table must have exactly the same number of rows
  as the input table. Do not split, explode, or duplicate rows.


3. **derive_conditional format** - Use this EXACT format for conditions:
  {
    "condition": "column_name contains 'value'", 
    "value": true
  }
  OR for comparisons:
  {
    "condition": "column_name > 5",
    "value": true
  }
  DO NOT use complex expressions like "X in ['a', 'b']" - use multiple contains checks instead.


4. **derive_math format** - For string length use: "len(column_name)"
  For date parts use: "year(column_name)", "month(column_name)", "day(column_name)"
  For arithmetic use simple expressions: "column_a + column_b"


5. **extract_regex patterns** - Include commas in numeric patterns: use "[0-9,]+" not "[0-9]+"
  to properly extract numbers like "1,234,567"


6. **parse_number patterns** - Same as above, use "[0-9,]+" to match comma-separated numbers.


COLUMN RETENTION STRATEGY - SMART LOSSLESS


PRINCIPLE: No information loss, but no redundancy either.


WHEN TO KEEP ORIGINAL COLUMN:
- Derived columns capture only PART of the information
- Original contains semantic value not captured (units, notes, context)
- Example: "John Smith (PhD)" -> extract first_name, last_name -> KEEP original (PhD is lost)
- Example: "Gold medal in 100m" -> extract medal_type -> KEEP original (event info lost)


WHEN TO DROP ORIGINAL COLUMN (use select at end):
- Derived columns capture ALL the information completely
- Example: "1990-2005" -> extract start_year=1990, end_year=2005 -> DROP original (fully captured)
- Example: "240,928" -> extract value_numeric=240928 -> DROP original (fully captured)
- Example: "Yes" / "No" -> derive is_active boolean -> DROP original (fully captured)


MANDATORY PARSING FOR ISSUES:
- Issue "mixed number and text" -> use parse_number or extract_regex
- Issue "embedded in string" -> use extract_regex
- Issue "mixed units" -> use parse_number + extract_regex for unit
- Issue "string concatenation" -> use extract_regex or derive_conditional


DERIVED COLUMNS TO ADD (when applicable):
- Date/Year ranges (e.g., "1990-2005") -> ADD: start_year, end_year, duration_years
- Person names with extra info -> ADD: first_name, last_name (assess if original needed)
- Numbers with units -> ADD: value_numeric, unit
- Percentages -> ADD: percent_numeric


DO NOT USE raw_snapshot:
- If you need original value, just KEEP the original column
- raw_snapshot creates unnecessary _raw suffix duplicates
- SKIP keep_raw_snapshot operations entirely


USE select OPERATION WISELY:
- At END of plan, use select to choose final columns
- INCLUDE: columns where original has extra info not captured by derived
- EXCLUDE: columns that are FULLY captured by derived columns
- ALWAYS INCLUDE: _row_id and all derived columns


FINAL OUTPUT STRUCTURE:
- Columns: [Essential Original Columns] + [All Derived Columns]
- Row count: EXACTLY same as input (no row changes)
- No duplicate column names
- No redundant data (no column that is subset of another)


{Examples}



Return ONLY the JSON object. No markdown, no backticks, no comments.)TPL";

// Downstream QA template; slots: {table_name}, {column_description},
// {transformed_table}, {question}.
constexpr const char* kQaTemplate = R"TPL(You are answering a question about a structured table. Analyze the table and find the answer.

## TABLE: {table_name}

### Columns:
{column_description}

### Data:
{transformed_table}

---

## QUESTION: {question}

---


1. **Interpret the question** - Identify what information is being requested

2. **Identify relevant columns** - Determine which column(s) contain the needed data

3. **Determine filtering criteria** - Identify any row-level conditions (e.g., specific entity, date, value)

4. **Identify required operation** - Determine if aggregation is needed:
   - Counting: COUNT
   - Maximum/minimum: MAX/MIN or ORDER BY with LIMIT
   - Summation: SUM
   - Lookup: Direct selection

5. **Extract the answer** - Locate the answer in the table data

<reasoning>
[Step-by-step analysis]
</reasoning>

<answer>
[Extracted answer value]
</answer>

<sql_plan>
SELECT: [target column]
FROM: {table_name}
WHERE: [filter condition if applicable]
ORDER BY: [ordering if applicable]
AGGREGATION: [function if applicable]
</sql_plan>)TPL";

struct OpDoc {
    const char* name;
    const char* description;
};

constexpr OpDoc kOperatorDocs[] = {
    {"add_row_id", "Adds a unique, stable row identifier column to the table."},
    {"rename", "Renames columns according to a provided name mapping."},
    {"select", "Selects and retains a specified subset of columns."},
    {"parse_date_text", "Parses free-text date strings into a normalized date representation."},
    {"parse_number", "Extracts numeric values (and optional units) from text fields."},
    {"extract_regex", "Extracts structured groups from a column using a regular expression."},
    {"derive_conditional", "Creates a new column based on conditional rules applied row-wise."},
    {"derive_math", "Derives a new column by applying a mathematical expression over existing columns."},
    {"map_values", "Maps raw values in a column to normalized or canonical values."},
    {"replace_value", "Replaces exact cell values with specified alternatives."},
    {"replace_string", "Performs string replacement within column values (optionally regex-based)."},
    {"cast_column", "Casts a column to a specified data type."},
    {"fillna_static", "Fills missing values using a fixed constant."},
    {"fillna_dynamic", "Fills missing values using a dynamic rule (e.g., forward fill)."},
    {"combine_columns", "Combines multiple columns into a single column using a separator."},
    {"trim_whitespace", "Removes leading and trailing whitespace from column values."},
    {"filter_rows", "Filters rows based on a boolean condition."},
    {"sort", "Sorts rows according to one or more columns."},
    {"deduplicate_rows", "Removes duplicate rows, optionally using a column subset."},
    {"keep_raw_snapshot", "Preserves original raw values in a snapshot column."},
    {"bin_numeric", "Discretizes numeric values into bins with optional labels."},
    {"one_hot", "Expands a categorical column into one-hot encoded indicator columns."},
    {"custom", "Applies a user-defined transformation not covered by built-in operators."},
};

std::string replace_all(std::string s, const std::string& from, const std::string& to) {
    std::size_t at = 0;
    while ((at = s.find(from, at)) != std::string::npos) {
        s.replace(at, from.size(), to);
        at += to.size();
    }
    return s;
}

// Python-style list repr, matching how the reference code-generation prompt
// interpolates column lists.
std::string py_list(const std::vector<std::string>& items) {
    std::string out = "[";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += '\'';
        for (char c : items[i]) {
            if (c == '\\' || c == '\'') out += '\\';
            out += c;
        }
        out += '\'';
    }
    return out + "]";
}

std::string pad_left(const std::string& s, std::size_t width) {
    return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

// DataFrame-style preview of the first rows: index column plus right-aligned
// values, two-space gutters, no trailing newline.
std::string sample_preview(const Table& df, const std::vector<std::string>& cols,
                           std::size_t max_rows) {
    std::size_t n = std::min(max_rows, df.row_count());
    std::vector<std::vector<std::string>> text;
    for (const auto& name : cols) {
        std::size_t c = *df.column_index(name);
        std::vector<std::string> column{name};
        for (std::size_t r = 0; r < n; ++r) {
            const CellValue& v = df.cell(r, c);
            column.push_back(v.is_null() ? "NaN" : v.to_text());
        }
        text.push_back(std::move(column));
    }
    std::vector<std::size_t> width(text.size(), 0);
    for (std::size_t i = 0; i < text.size(); ++i) {
        for (const auto& s : text[i]) width[i] = std::max(width[i], s.size());
    }
    std::size_t index_width = std::to_string(n == 0 ? 0 : n - 1).size();

    std::string out(index_width, ' ');
    for (std::size_t i = 0; i < text.size(); ++i) out += "  " + pad_left(text[i][0], width[i]);
    for (std::size_t r = 0; r < n; ++r) {
        out += "\n" + pad_left(std::to_string(r), index_width);
        for (std::size_t i = 0; i < text.size(); ++i) {
            out += "  " + pad_left(text[i][r + 1], width[i]);
        }
    }
    return out;
}

std::string code_prompt(const Table& df, const PlanStep& step) {
    std::string sample_data;
    if (df.row_count() > 0) {
        std::vector<std::string> relevant;
        for (const auto& c : step.reads) {
            if (df.has_column(c)) relevant.push_back(c);
        }
        if (relevant.empty()) {
            const auto names = df.column_names();
            for (std::size_t i = 0; i < names.size() && i < 3; ++i) relevant.push_back(names[i]);
        }
        sample_data = "\n**Sample Data (first 3 rows)**:\n" + sample_preview(df, relevant, 3) + "\n";
    }
    std::string out = "\nYou are a Python Data Engineer. Write a snippet to transform a DataFrame `df`.\n\n";
    out += "**CONTEXT**:\n- Current columns: " + py_list(df.column_names()) + "\n";
    out += "- DataFrame shape: " + std::to_string(df.row_count()) + " rows X " +
           std::to_string(df.column_count()) + " columns" + sample_data + "\n";
    out += "**TASK**: " + step.description + "\n\n";
    out += "**OPERATION**: " + step.op + "\n";
    const nlohmann::json params =
        step.params.is_null() ? nlohmann::json::object() : step.params;
    out += "**Parameters**: " + params.dump(2) + "\n";
    out += "**Input Columns (reads)**: " + py_list(step.reads) + "\n";
    out += "**Output Columns (writes)**: " + py_list(step.writes) + "\n\n";
    out += "**CRITICAL REQUIREMENTS**:\n";
    out += "1. ALL output columns " + py_list(step.writes) + " MUST be created\n";
    out += "2. If extraction/parsing fails, use the ORIGINAL column value as fallback\n";
    out += "3. Do NOT create columns with all NaN values\n";
    out += "4. Handle missing data gracefully (use .fillna(), coalesce, etc.)\n";
    out += "5. Do NOT drop rows unless explicitly required by the operation\n";
    out += "6. Test your regex/extraction patterns against the sample data above\n\n";
    out += "**EXAMPLE PATTERNS**:\n```python\n";
    out += "# For extraction with fallback:\n";
    out += "df['new_col'] = df['source_col'].str.extract(r'pattern')[0]\n";
    out += "df['new_col'] = df['new_col'].fillna(df['source_col'])  # Fallback!\n\n";
    out += "# For parsing with error handling:\n";
    out += "df['parsed'] = pd.to_datetime(df['date_col'], errors='coerce')\n\n";
    out += "# For transformations:\n";
    out += "df['clean'] = df['raw'].str.strip().str.lower()\n```";
    return out;
}

std::string default_column_description(const Table& t) {
    std::string out;
    for (const Column& c : t.columns()) {
        out += "- " + c.name + " (" +
               (c.declared_kind ? kind_name(*c.declared_kind) : kind_name(CellKind::Text)) + ")\n";
    }
    if (!out.empty()) out.pop_back();
    return out;
}

}  // namespace

std::string operator_vocabulary_text() {
    std::string out = "TRANSFORMATION OPERATIONS LIST\n";
    for (const OpDoc& d : kOperatorDocs) {
        out += std::string("\n- ") + d.name + ": " + d.description;
    }
    return out;
}

std::string build_stage_prompt(Stage stage, const Table& table, const PromptInputs& extras) {
    const std::string title = extras.title.empty() ? table.title() : extras.title;
    switch (stage) {
        case Stage::Issue: {
            std::string p = kIssueTemplate;
            p = replace_all(p, "{{table_title}}", title);
            p = replace_all(p, "{{column_description_text}}", extras.column_descriptions);
            p = replace_all(p, "{{raw_markdown_table}}", serialize_markdown(table, 50));
            return p;
        }
        case Stage::Plan: {
            if (!extras.probes) {
                throw ValidationError("the plan prompt requires the stage-1 probe artifact");
            }
            std::string p = kPlanTemplate;
            p = replace_all(p, "{Transformation Operations List}", operator_vocabulary_text());
            p = replace_all(p, "{Examples}", extras.examples);
            p += "\n\nINPUTS\n\nTABLE_TITLE:\n\"" + title + "\"\n\nCOLUMN_DESCRIPTIONS:\n" +
                 extras.column_descriptions + "\n\nRAW_TABLE_MD:\n" +
                 serialize_markdown(table, 50) + "\nSTEP1_JSON:\n" + extras.probes->to_json().dump(2);
            return p;
        }
        case Stage::Code: {
            if (!extras.step) throw ValidationError("the code prompt requires a plan step");
            return code_prompt(table, *extras.step);
        }
        case Stage::Qa: {
            if (extras.question.empty()) throw ValidationError("the qa prompt requires a question");
            std::string p = kQaTemplate;
            p = replace_all(p, "{table_name}", table.table_id());
            p = replace_all(p, "{column_description}",
                            extras.column_descriptions.empty() ? default_column_description(table)
                                                               : extras.column_descriptions);
            p = replace_all(p, "{transformed_table}", serialize_markdown(table, 50));
            p = replace_all(p, "{question}", extras.question);
            return p;
        }
    }
    throw ValidationError("unknown prompt stage");
}

}  // namespace canontab
