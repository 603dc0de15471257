#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tabqa/answer.hpp"
#include "tabqa/qa_pipeline.hpp"

namespace tabqa {

enum class ProviderMode { live, record, replay };
enum class EmbedderKind { pseudo, provider };

std::string_view to_string(ProviderMode mode) noexcept;

/// Settings for one CLI run. Loaded from a flat `key = value` file; relative
/// paths in the file are taken relative to the file's directory.
struct RunConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string chat_model = "gpt-4o";
    std::string embedding_model = "text-embedding-ada-002";
    ProviderMode mode = ProviderMode::live;
    EmbedderKind embedder = EmbedderKind::provider;
    int parallelism = 4;
    int row_cap = 50;
    int max_attempts = 2;
    int examples_per_prompt = 2;
    int sql_timeout_ms = 5000;
    int request_timeout_ms = 60000;
    int max_retries = 3;
    bool lite = false;
    int lite_rows = 20;
    bool strict = false;
    std::filesystem::path db_path = "tabqa.db";
    std::filesystem::path fixture_dir;
    std::filesystem::path bank_path = "data/bank/examples.jsonl";
    std::filesystem::path template_dir;
    std::filesystem::path dataset_dir;
    std::filesystem::path out_dir = "tabqa-out";

    /// Throws ConfigError on an unknown key, a malformed value or a
    /// violated invariant (replay without fixture_dir).
    static RunConfig parse(std::string_view text, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& path);

    void check() const;
};

struct GoldRecord {
    std::string question_id;
    AnswerValue gold;
};

/// Question file lines: {"id", "dataset", "question", "type"?}.
std::vector<QuestionRecord> load_questions(const std::filesystem::path& path);

/// Gold file lines: {"id", "answer", "type"?}. Without a type the variant
/// follows the JSON value.
std::vector<GoldRecord> load_gold(const std::filesystem::path& path);

/// Converts one JSON answer into a value, typed when `type` is given.
AnswerValue answer_from_json(const nlohmann::json& value, std::optional<AnswerType> type);

/// Booleans by value, numbers within relative 1e-6 (absolute 1e-9 near
/// zero), categories after trim and case-fold, lists element-wise in order.
/// `strict` turns every comparison into exact equality.
bool compare_answer(const AnswerValue& predicted, const AnswerValue& gold, bool strict = false);

/// Fraction of outcomes whose final answer matches gold. Failed outcomes
/// count as incorrect. Throws DataError when gold lacks an outcome id.
double accuracy(const std::vector<QaOutcome>& outcomes, const std::vector<GoldRecord>& gold, bool strict = false);

struct StageReport {
    std::size_t questions = 0;
    std::size_t approved_first_pass = 0;
    std::size_t approved_after_reprocess = 0;
    std::size_t failed = 0;
    std::size_t first_attempt_flagged = 0;
    std::size_t attempts = 0;
    std::size_t sql_errors = 0;
    std::map<std::string, std::size_t> errors_by_stage;

    double flag_rate() const;
    double recovery_rate() const;
    double sql_error_rate() const;
};

/// Statistics over trace records as written by `to_json(QaOutcome)`.
StageReport compute_report(const std::vector<nlohmann::ordered_json>& trace);
std::vector<nlohmann::ordered_json> read_trace(const std::filesystem::path& path);
void print_report(const StageReport& report, std::ostream& out);

struct BenchRun {
    std::vector<QaOutcome> outcomes;  ///< merged, in question order
    double accuracy = 0;
    std::size_t correct = 0;
    StageReport report;
    /// Dataset id to table checksum, taken before the run.
    std::map<std::string, std::string> checksums;
};

/// Runs every question (first pass, then reprocessing of flagged ones,
/// then merge), scores against gold and writes `predictions.txt`,
/// `trace.jsonl` and `summary.json` to `config.out_dir`. A non-null
/// `provider` replaces the one `config.mode` would create.
BenchRun run_benchmark(const RunConfig& config, const std::filesystem::path& questions_path,
                       const std::filesystem::path& gold_path, std::shared_ptr<Provider> provider = nullptr);

/// One line per question, in order, for the predictions file.
std::string prediction_line(const AnswerValue& value);

/// Process exit code for an error class.
int exit_code_for(ErrorClass error_class) noexcept;

/// Entry point behind the `tabqa` executable.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace tabqa
