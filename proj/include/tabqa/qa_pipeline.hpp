#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabqa/answer.hpp"
#include "tabqa/dataset_store.hpp"
#include "tabqa/example_bank.hpp"
#include "tabqa/llm_gateway.hpp"
#include "tabqa/sql_engine.hpp"

namespace tabqa {

struct QuestionRecord {
    std::string question_id;
    std::string dataset_id;
    std::string text;
    std::optional<AnswerType> expected_type;
};

enum class Decision { accept, flag };

struct VerificationVerdict {
    bool format_valid = true;
    bool relevant = true;
    Decision decision = Decision::accept;
    std::string rationale;
};

/// Maps a verifier reply onto a verdict. Only a reply whose first word is
/// REJECT flags; anything else, including prose, accepts. A rejection whose
/// reason mentions "format" clears `format_valid`, any other clears `relevant`.
VerificationVerdict interpret_verdict(std::string_view reply);

struct VerificationRun {
    VerificationVerdict verdict;
    std::string prompt_hash;  ///< empty when no completion was made
    std::string reply;
};

/// Format check locally, then one verifier completion for relevance. A parse
/// failure flags without calling the provider; a provider failure accepts.
VerificationRun verify(const QuestionRecord& question, const std::optional<AnswerValue>& answer,
                       std::string_view raw, const std::string& column_headers, const PromptTemplate& tmpl,
                       Gateway& gateway, bool fatal_replay_miss = false);

struct AttemptRecord {
    int index = 0;
    QueryMode mode = QueryMode::row_retrieval;
    std::vector<std::string> example_questions;
    std::string sql_prompt_hash;
    std::string raw_sql_response;
    std::string sql;
    /// Set when the attempt stopped early; the stage names where.
    std::optional<std::string> error;
    std::string error_stage;  ///< example_selection, sql_generation, sql_validation, sql_execution, answer_extraction
    std::string error_kind;
    std::string result_digest;
    std::int64_t result_rows = 0;
    std::int64_t result_total_rows = 0;
    bool result_truncated = false;
    std::string answer_prompt_hash;
    std::string raw_answer;
    std::optional<AnswerValue> parsed_answer;
    std::string parse_error;
    std::string verify_prompt_hash;
    std::string verifier_reply;
    VerificationVerdict verdict;
};

enum class FinalStatus { approved_first_pass, approved_after_reprocess, failed };

std::string_view to_string(FinalStatus status) noexcept;
std::string_view to_string(Decision decision) noexcept;

struct QaOutcome {
    std::string question_id;
    std::string dataset_id;
    std::string question;
    std::optional<AnswerType> expected_type;
    std::string table_name;
    std::int64_t dataset_rows = 0;
    std::vector<AttemptRecord> attempts;
    AnswerValue final_answer = NoAnswer{};
    FinalStatus final_status = FinalStatus::failed;

    int attempt_count() const noexcept { return static_cast<int>(attempts.size()); }
    bool approved() const noexcept { return final_status != FinalStatus::failed; }
    /// First attempt flagged by verification or failed in SQL.
    bool first_attempt_flagged() const noexcept {
        return !attempts.empty() && attempts.front().verdict.decision == Decision::flag;
    }
};

struct PipelineConfig {
    int max_attempts = 2;
    std::size_t examples_per_prompt = 2;
    int schema_sample_rows = 3;
    ExecuteOptions execute;
    std::size_t result_max_bytes = 8192;
    /// Rethrow replay misses instead of folding them into the trace.
    bool fatal_replay_miss = false;
};

/// Runs the stages for one question: example selection, SQL generation,
/// execution, answer extraction and verification. Attempt 1 works in row
/// retrieval mode; flagged questions are re-run in value-targeted mode until
/// approved or `max_attempts` is reached.
///
/// Everything it reads (store, bank, templates) must be frozen for the run;
/// a Pipeline may be shared by worker threads.
class Pipeline {
public:
    Pipeline(const DatasetStore& store, const ExampleBank& bank, const TemplateSet& templates, Gateway& gateway,
             PipelineConfig config);

    /// Attempt 1 only. A flagged result has final_status `failed` until reprocessed.
    QaOutcome first_pass(const QuestionRecord& question, const DatasetHandle& handle) const;

    /// Further value-targeted attempts appended to `outcome`.
    QaOutcome reprocess(const QuestionRecord& question, const DatasetHandle& handle, QaOutcome outcome) const;

    /// first_pass, then reprocess when flagged.
    QaOutcome run_question(const QuestionRecord& question, const DatasetHandle& handle) const;

    const PipelineConfig& config() const noexcept { return config_; }

private:
    AttemptRecord run_attempt(const QuestionRecord& question, const DatasetHandle& handle, int index,
                              QueryMode mode) const;
    void settle(QaOutcome& outcome) const;

    const DatasetStore& store_;
    const ExampleBank& bank_;
    const TemplateSet& templates_;
    Gateway& gateway_;
    PipelineConfig config_;
};

/// Applies reprocessed outcomes over a first pass. Every first-pass id
/// appears once, in first-pass order; flagged ids take the reprocessed
/// outcome when one is given.
std::vector<QaOutcome> merge_results(const std::vector<QaOutcome>& first_pass,
                                     const std::vector<QaOutcome>& reprocessed);

/// Runs `job(i)` for i in [0, n) on up to `parallelism` threads. Exceptions
/// from jobs are rethrown (the first one by index) after all threads join.
void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& job);

/// One trace record. Key order is fixed and no timing data is included, so
/// equal outcomes serialize to identical bytes.
nlohmann::ordered_json to_json(const QaOutcome& outcome);
nlohmann::ordered_json to_json(const AnswerValue& value);

/// Collects trace records from concurrent workers and writes them ordered
/// by question index.
class TraceSink {
public:
    void append(std::size_t index, nlohmann::ordered_json record);
    void write(std::ostream& out) const;
    std::size_t size() const;

private:
    mutable std::mutex mutex_;
    std::map<std::size_t, nlohmann::ordered_json> records_;
};

}  // namespace tabqa
