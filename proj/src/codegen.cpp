#include "canontab/codegen.hpp"

#include <cstdlib>

#include "canontab/cache.hpp"
#include "canontab/errors.hpp"
#include "canontab/strutil.hpp"
#include "canontab/table_io.hpp"

namespace canontab {

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (const char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    out += "'";
    return out;
}

}  // namespace

std::string extract_python_snippet(const std::string& completion) {
    const std::vector<std::string> lines = strutil::split(completion, '\n');
    std::size_t open = lines.size();
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (strutil::starts_with(strutil::trim_ascii(lines[i]), "```")) {
            open = i;
            break;
        }
    }
    if (open == lines.size()) return completion;
    std::size_t close = open;  // no closing fence: take everything after the opening
    for (std::size_t i = lines.size(); i-- > open + 1;) {
        if (strutil::trim_ascii(lines[i]) == "```") {
            close = i;
            break;
        }
    }
    std::string out;
    const std::size_t end = close == open ? lines.size() : close;
    for (std::size_t i = open + 1; i < end; ++i) {
        if (!out.empty()) out += '\n';
        out += lines[i];
    }
    return out;
}

std::function<Table(const PlanStep&, const Table&)> make_codegen_fallback(
    ProviderClient& provider, TokenLedger& ledger, StageConfig code_config, Sleeper& sleeper,
    std::filesystem::path work_root, std::mutex* ledger_mutex) {
    return [&provider, &ledger, &sleeper, code_config, work_root = std::move(work_root),
            ledger_mutex](const PlanStep& step, const Table& view) -> Table {
        PromptInputs inputs;
        inputs.step = &step;
        const std::string prompt = build_stage_prompt(Stage::Code, view, inputs);

        auto meter = [&](std::int64_t in, std::int64_t out) {
            if (ledger_mutex) {
                std::lock_guard<std::mutex> lock(*ledger_mutex);
                ledger.add(view.table_id(), Stage::Code, in, out);
            } else {
                ledger.add(view.table_id(), Stage::Code, in, out);
            }
        };

        Completion completion;
        try {
            completion = run_stage_with_retry(provider, prompt, code_config, sleeper);
        } catch (const ProviderError& e) {
            meter(e.input_tokens(), e.output_tokens());
            throw;
        }
        meter(completion.input_tokens, completion.output_tokens);

        const std::filesystem::path dir = work_root /
                                          strutil::sanitize_identifier(view.table_id()) /
                                          strutil::sanitize_identifier(step.step_id);
        std::filesystem::create_directories(dir);
        write_file_atomic(dir / "input.csv", write_csv(view));

        std::string script = "import pandas as pd\n\n";
        script += "df = pd.read_csv(\"input.csv\", dtype=str, keep_default_na=False)\n\n";
        script += "# --- generated snippet ---\n";
        script += extract_python_snippet(completion.text);
        script += "\n# --- end of generated snippet ---\n\n";
        script += "df.to_csv(\"output.csv\", index=False)\n";
        write_file_atomic(dir / "step.py", script);

        std::error_code ec;
        std::filesystem::remove(dir / "output.csv", ec);  // never reuse a stale run

        const std::string command =
            "cd " + shell_quote(dir.string()) + " && python3 step.py > stdout.txt 2> stderr.txt";
        const int rc = std::system(command.c_str());
        if (rc != 0) {
            std::string err = read_file_if_exists(dir / "stderr.txt").value_or("");
            if (err.size() > 400) err = "..." + err.substr(err.size() - 400);
            throw ExecutionError("generated code for step '" + step.step_id + "' failed: " +
                                     (err.empty() ? "python3 exited with status " +
                                                        std::to_string(rc)
                                                  : err),
                                 step.step_id);
        }
        const auto output = read_file_if_exists(dir / "output.csv");
        if (!output) {
            throw ExecutionError(
                "generated code for step '" + step.step_id + "' produced no output.csv",
                step.step_id);
        }
        return ingest_csv(*output, view.table_id(), view.title());
    };
}

}  // namespace canontab
