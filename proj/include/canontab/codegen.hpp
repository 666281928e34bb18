#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>

#include "canontab/llm.hpp"
#include "canontab/table.hpp"

namespace canontab {

// Strips one outer markdown code fence (``` or ```python) from a completion
// and returns the inner snippet; unfenced text comes back unchanged.
std::string extract_python_snippet(const std::string& completion);

// Provider-backed execution for `custom` steps missing from the registry:
// asks the code stage for a pandas snippet operating on `df`, runs it via
// python3 against the step's reads view in a scratch directory under
// work_root/<table>/<step>/, and re-ingests the produced CSV (cells come back
// as text; the executor revalidates row count and written columns).
// The scratch directory keeps input.csv, step.py, output.csv, and stderr.txt
// for inspection.
//
// Code-stage tokens are metered per table under `ledger` (serialized through
// `ledger_mutex` when given). The handler throws ExecutionError when python3
// or the snippet fails, and lets provider errors propagate.
//
// The snippet runs with the invoking user's privileges; enable only for
// trusted providers or reviewed transcripts.
std::function<Table(const PlanStep&, const Table&)> make_codegen_fallback(
    ProviderClient& provider, TokenLedger& ledger, StageConfig code_config, Sleeper& sleeper,
    std::filesystem::path work_root, std::mutex* ledger_mutex = nullptr);

}  // namespace canontab
