#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canontab/errors.hpp"
#include "canontab/plan.hpp"
#include "canontab/table.hpp"

namespace canontab {

// ---------------------------------------------------------------------------
// Stages and per-stage inference settings

enum class Stage { Issue, Plan, Code, Qa };

const char* stage_name(Stage s);
std::optional<Stage> stage_from_name(const std::string& name);

struct StageConfig {
    Stage stage = Stage::Issue;
    int max_output_tokens = 8000;
    double temperature = 0.2;
    int retries = 10;
    double initial_delay_s = 2.0;  // doubles on every retry

    static StageConfig defaults(Stage s);
    // Applies {"max_output_tokens", "temperature", "retries", "initial_delay_s"}
    // overrides on top of the stage defaults. Unknown keys are rejected.
    static StageConfig from_json(Stage s, const nlohmann::json& overrides);
};

// ---------------------------------------------------------------------------
// Probe artifact (stage-1 output)

struct Probe {
    std::string qid;   // "Q1", "Q2", ... contiguous
    std::string text;
    std::vector<std::string> depends_on;  // raw column names, or ["unknown"]
    std::vector<std::string> needs;       // serialized as "requires"
    std::string failure_reason;
};

struct Issue {
    std::string issue_id;  // "I1", "I2", ... in first-appearance order
    std::string description;
    std::vector<std::string> cols;
    std::vector<std::string> blocking_questions;
};

struct ProbeArtifact {
    std::vector<Probe> probes;
    std::vector<Issue> issues;

    // {"questions": [...], "issues": [...]} — the planner's STEP1_JSON shape.
    nlohmann::json to_json() const;
    static ProbeArtifact from_json(const nlohmann::json& j);
};

// Strict parse of a stage-1 completion: the entire text must be one JSON array
// of 12..20 objects with exactly the keys {qid, text, depends_on, requires,
// failure_reason} and contiguous qids "Q1..Qn". Any deviation (prose, fences,
// gaps, extra keys) throws ValidationError so the caller can regenerate.
ProbeArtifact parse_probe_response(const std::string& text);

// Groups probes by their distinct depends_on sets (first-appearance order,
// ids "I1..Ik"); ["unknown"] maps to an issue with no cols. Descriptions are
// the distinct failure reasons of the member probes.
std::vector<Issue> derive_issues(const std::vector<Probe>& probes);

// ---------------------------------------------------------------------------
// Prompt construction

struct PromptInputs {
    std::string title;                 // defaults to table.title()
    std::string column_descriptions;   // free text; qa derives one when empty
    std::string examples;              // plan stage {Examples} slot
    const ProbeArtifact* probes = nullptr;  // required for the plan stage
    const PlanStep* step = nullptr;         // required for the code stage
    std::string question;                   // required for the qa stage
};

// The operator vocabulary block substituted into the planner prompt:
// one "- name: description" line per operator.
std::string operator_vocabulary_text();

std::string build_stage_prompt(Stage stage, const Table& table,
                               const PromptInputs& extras = {});

// ---------------------------------------------------------------------------
// Providers

struct Completion {
    std::string text;
    std::int64_t input_tokens = 0;
    std::int64_t output_tokens = 0;
};

// Transport/provider failure. Transient errors are retried with backoff;
// permanent ones abort immediately. Token counts are carried when the
// provider metered the failed call.
class ProviderError : public Error {
public:
    ProviderError(const std::string& msg, bool transient, std::int64_t input_tokens = 0,
                  std::int64_t output_tokens = 0)
        : Error(msg),
          transient_(transient),
          input_tokens_(input_tokens),
          output_tokens_(output_tokens) {}

    bool transient() const { return transient_; }
    std::int64_t input_tokens() const { return input_tokens_; }
    std::int64_t output_tokens() const { return output_tokens_; }

private:
    bool transient_;
    std::int64_t input_tokens_;
    std::int64_t output_tokens_;
};

class ProviderClient {
public:
    virtual ~ProviderClient() = default;
    virtual Completion complete(const std::string& prompt, const StageConfig& cfg) = 0;
};

class Sleeper {
public:
    virtual ~Sleeper() = default;
    virtual void sleep_for(double seconds) = 0;
};

class RealSleeper : public Sleeper {
public:
    void sleep_for(double seconds) override;
};

// Calls the provider with exponential backoff: after transient failure k
// (1-based) sleeps initial_delay·2^(k−1) seconds, gives up after cfg.retries
// attempts (re-throwing a permanent ProviderError that carries the token
// counts metered across the failed attempts).
Completion run_stage_with_retry(ProviderClient& client, const std::string& prompt,
                                const StageConfig& cfg, Sleeper& sleeper);

// Whitespace-chunk token approximation used when a provider does not meter
// usage itself (mock/offline providers).
std::int64_t approximate_tokens(const std::string& text);

// Test/dev provider: replies are scripted in order; an empty queue fails.
class ScriptedProvider : public ProviderClient {
public:
    struct Reply {
        std::string text;
        std::optional<std::string> error;  // set -> throw instead of replying
        bool transient = false;
        std::int64_t input_tokens = -1;   // -1 -> whitespace approximation
        std::int64_t output_tokens = -1;
    };

    void reply(std::string text);
    void fail_transient(std::string message);
    void fail_permanent(std::string message);
    void push(Reply r);

    std::size_t calls() const { return calls_; }
    const std::vector<std::string>& prompts() const { return prompts_; }

    Completion complete(const std::string& prompt, const StageConfig& cfg) override;

private:
    std::vector<Reply> queue_;
    std::size_t next_ = 0;
    std::size_t calls_ = 0;
    std::vector<std::string> prompts_;
};

// Credential-free deterministic provider: parses the table back out of the
// prompt and fabricates minimally useful completions (generic probes, an
// add_row_id plan, an "unknown" answer). Lets the full pipeline run offline.
class OfflineProvider : public ProviderClient {
public:
    Completion complete(const std::string& prompt, const StageConfig& cfg) override;
};

// Records every completion of an inner provider as <sha256(prompt)>.json
// under a directory, so later runs can replay them byte-identically.
class RecordingProvider : public ProviderClient {
public:
    RecordingProvider(ProviderClient& inner, std::string directory);
    Completion complete(const std::string& prompt, const StageConfig& cfg) override;

private:
    ProviderClient& inner_;
    std::string dir_;
};

// Serves recorded transcripts; a prompt without a recording is a permanent
// error (replay must be exact, never silently live).
class ReplayProvider : public ProviderClient {
public:
    explicit ReplayProvider(std::string directory);
    Completion complete(const std::string& prompt, const StageConfig& cfg) override;

private:
    std::string dir_;
};

// Live provider speaking the OpenAI-style chat-completions protocol against
// `base_url` (e.g. "https://api.example.com"). Transport failures and HTTP
// 408/429/5xx are transient; any other non-2xx status is permanent. Token
// counts come from the reply's usage block, falling back to the whitespace
// approximation. TLS endpoints need a build with OpenSSL available.
class HttpProvider : public ProviderClient {
public:
    HttpProvider(std::string base_url, std::string api_key, std::string model);
    Completion complete(const std::string& prompt, const StageConfig& cfg) override;

private:
    std::string base_url_;
    std::string api_key_;
    std::string model_;
};

// ---------------------------------------------------------------------------
// Token accounting

struct TokenLedger {
    struct Entry {
        std::string table_id;
        std::string stage;
        std::int64_t input_tokens = 0;
        std::int64_t output_tokens = 0;
    };

    std::vector<Entry> entries;  // first-add order, one entry per (table, stage)

    void add(const std::string& table_id, Stage stage, std::int64_t input_tokens,
             std::int64_t output_tokens);
    std::int64_t total() const;  // Σ tables Σ stages (in + out)
    std::int64_t table_total(const std::string& table_id) const;

    std::string to_csv() const;
    nlohmann::json to_json() const;
    static TokenLedger from_json(const nlohmann::json& j);
};

}  // namespace canontab
