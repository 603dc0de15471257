#include "tabqa/qa_pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <set>
#include <thread>

#include "tabqa/hash.hpp"

namespace tabqa {

namespace {

std::string trim_copy(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

/// Restricts `all` to the placeholders `tmpl` actually uses.
Bindings bind_for(const PromptTemplate& tmpl, const Bindings& all) {
    Bindings out;
    for (const auto& p : tmpl.placeholders()) {
        if (auto it = all.find(p); it != all.end()) out.emplace(it->first, it->second);
    }
    return out;
}

bool is_replay_miss(const ProviderError& e) { return e.kind() == ProviderErrorKind::replay_miss; }

VerificationVerdict failed_stage(const std::string& stage, const std::string& why) {
    return VerificationVerdict{false, true, Decision::flag, stage + " failed: " + why};
}

}  // namespace

std::string_view to_string(FinalStatus status) noexcept {
    switch (status) {
    case FinalStatus::approved_first_pass: return "approved_first_pass";
    case FinalStatus::approved_after_reprocess: return "approved_after_reprocess";
    case FinalStatus::failed: return "failed";
    }
    return "failed";
}

std::string_view to_string(Decision decision) noexcept {
    return decision == Decision::accept ? "accept" : "flag";
}

// --- verification ------------------------------------------------------------------

VerificationVerdict interpret_verdict(std::string_view reply) {
    auto text = trim_copy(reply);
    auto first_line = text.substr(0, text.find('\n'));
    std::string head;
    for (char c : first_line.substr(0, 6)) head.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (head != "REJECT") {
        bool explicit_accept = head.starts_with("ACCEPT");
        return VerificationVerdict{true, true, Decision::accept,
                                   explicit_accept ? "accepted" : "no explicit rejection; accepted by default"};
    }
    auto reason = trim_copy(std::string_view(first_line).substr(6));
    while (!reason.empty() && (reason.front() == ':' || reason.front() == '-' || reason.front() == ' ')) {
        reason.erase(reason.begin());
    }
    std::string lowered = reason;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    VerificationVerdict v;
    v.decision = Decision::flag;
    v.rationale = reason.empty() ? "rejected" : reason;
    if (lowered.find("format") != std::string::npos) {
        v.format_valid = false;
    } else {
        v.relevant = false;
    }
    return v;
}

VerificationRun verify(const QuestionRecord& question, const std::optional<AnswerValue>& answer,
                       std::string_view raw, const std::string& column_headers, const PromptTemplate& tmpl,
                       Gateway& gateway, bool fatal_replay_miss) {
    VerificationRun run;
    if (!answer) {
        std::string expected = question.expected_type ? std::string(to_string(*question.expected_type)) : "any type";
        run.verdict = VerificationVerdict{false, true, Decision::flag,
                                          "format: answer does not parse as " + expected};
        return run;
    }
    if (question.expected_type && answer_type(*answer) != question.expected_type) {
        run.verdict = VerificationVerdict{false, true, Decision::flag, "format: answer type mismatch"};
        return run;
    }
    (void)raw;

    Bindings all{{"question", question.text}, {"result", canonical_text(*answer)}, {"column_headers", column_headers}};
    auto prompt = render(tmpl, bind_for(tmpl, all));
    run.prompt_hash = FixtureStore::key(to_string(tmpl.id()), prompt);
    try {
        run.reply = gateway.complete(tmpl.id(), std::move(prompt)).text;
        run.verdict = interpret_verdict(run.reply);
    } catch (const ProviderError& e) {
        if (fatal_replay_miss && is_replay_miss(e)) throw;
        run.verdict = VerificationVerdict{true, true, Decision::accept, "verifier unavailable"};
    }
    return run;
}

// --- pipeline -----------------------------------------------------------------------

Pipeline::Pipeline(const DatasetStore& store, const ExampleBank& bank, const TemplateSet& templates, Gateway& gateway,
                   PipelineConfig config)
    : store_(store), bank_(bank), templates_(templates), gateway_(gateway), config_(config) {
    if (config_.max_attempts < 1) {
        throw ConfigError("max_attempts must be at least 1");
    }
}

AttemptRecord Pipeline::run_attempt(const QuestionRecord& question, const DatasetHandle& handle, int index,
                                    QueryMode mode) const {
    AttemptRecord a;
    a.index = index;
    a.mode = mode;
    std::string stage = "example_selection";

    auto stop = [&](const std::string& kind, const std::string& what) {
        a.error = what;
        a.error_stage = stage;
        a.error_kind = kind;
        a.verdict = failed_stage(stage, what);
    };

    try {
        auto schema = store_.schema_info(handle, config_.schema_sample_rows);
        auto query_embedding = gateway_.embed(question.text);
        auto examples = bank_.select_examples(query_embedding, config_.examples_per_prompt, mode);
        for (const auto& e : examples) a.example_questions.push_back(e.question);

        stage = "sql_generation";
        const auto sql_id = mode == QueryMode::row_retrieval ? TemplateId::sql_row_retrieval
                                                             : TemplateId::sql_value_targeted;
        const auto& sql_tmpl = templates_.get(sql_id);
        Bindings sql_bindings{{"table_info", schema.table_info()},
                              {"examples", render_examples(examples)},
                              {"question", question.text},
                              {"column_headers", schema.column_headers()}};
        auto sql_prompt = render(sql_tmpl, bind_for(sql_tmpl, sql_bindings));
        a.sql_prompt_hash = FixtureStore::key(to_string(sql_id), sql_prompt);
        a.raw_sql_response = gateway_.complete(sql_id, std::move(sql_prompt)).text;

        stage = "sql_validation";
        a.sql = extract_sql(a.raw_sql_response);
        auto query = validate_query(a.sql, mode);

        stage = "sql_execution";
        auto result = execute(query, store_, handle, config_.execute);
        a.result_rows = static_cast<std::int64_t>(result.rows.size());
        a.result_total_rows = result.total_rows;

        stage = "answer_extraction";
        const auto& answer_tmpl = templates_.get(TemplateId::final_answer);
        Bindings answer_bindings{{"question", question.text},
                                 {"column_headers", schema.column_headers()},
                                 {"table_info", schema.table_info()},
                                 {"result", ""}};
        auto frame = render(answer_tmpl, bind_for(answer_tmpl, answer_bindings));
        const auto limit = gateway_.options().max_prompt_bytes;
        std::size_t budget = limit > frame.size() ? limit - frame.size() : 0;
        auto result_text = serialize_result(result, std::min(config_.result_max_bytes, budget));
        auto shown = parse_result_text(result_text);
        a.result_truncated = shown.truncated;
        a.result_digest = sha256_hex(result_text).substr(0, 16);
        answer_bindings["result"] = result_text;
        auto answer_prompt = render(answer_tmpl, bind_for(answer_tmpl, answer_bindings));
        a.answer_prompt_hash = FixtureStore::key(to_string(TemplateId::final_answer), answer_prompt);
        a.raw_answer = gateway_.complete(TemplateId::final_answer, std::move(answer_prompt)).text;

        try {
            a.parsed_answer = parse_answer(a.raw_answer, question.expected_type);
        } catch (const AnswerParseError& e) {
            a.parse_error = e.what();
        }

        stage = "verification";
        auto run = verify(question, a.parsed_answer, a.raw_answer, schema.column_headers(),
                          templates_.get(TemplateId::verification), gateway_, config_.fatal_replay_miss);
        a.verify_prompt_hash = run.prompt_hash;
        a.verifier_reply = run.reply;
        a.verdict = run.verdict;
    } catch (const SqlError& e) {
        stop(std::string(to_string(e.kind())), e.what());
    } catch (const ProviderError& e) {
        if (config_.fatal_replay_miss && is_replay_miss(e)) throw;
        stop("provider", e.what());
    } catch (const Error& e) {
        stop("error", e.what());
    }
    return a;
}

void Pipeline::settle(QaOutcome& outcome) const {
    const auto& last = outcome.attempts.back();
    if (last.verdict.decision == Decision::accept && last.parsed_answer) {
        outcome.final_answer = *last.parsed_answer;
        outcome.final_status = outcome.attempts.size() == 1 ? FinalStatus::approved_first_pass
                                                            : FinalStatus::approved_after_reprocess;
        return;
    }
    outcome.final_status = FinalStatus::failed;
    outcome.final_answer = empty_answer(outcome.expected_type);
    for (auto it = outcome.attempts.rbegin(); it != outcome.attempts.rend(); ++it) {
        if (it->parsed_answer) {
            outcome.final_answer = *it->parsed_answer;
            break;
        }
    }
}

QaOutcome Pipeline::first_pass(const QuestionRecord& question, const DatasetHandle& handle) const {
    QaOutcome outcome;
    outcome.question_id = question.question_id;
    outcome.dataset_id = question.dataset_id;
    outcome.question = question.text;
    outcome.expected_type = question.expected_type;
    outcome.table_name = handle.table_name;
    outcome.dataset_rows = handle.row_count;
    outcome.attempts.push_back(run_attempt(question, handle, 1, QueryMode::row_retrieval));
    settle(outcome);
    return outcome;
}

QaOutcome Pipeline::reprocess(const QuestionRecord& question, const DatasetHandle& handle, QaOutcome outcome) const {
    while (outcome.attempt_count() < config_.max_attempts && !outcome.approved()) {
        outcome.attempts.push_back(
            run_attempt(question, handle, outcome.attempt_count() + 1, QueryMode::value_targeted));
        settle(outcome);
    }
    return outcome;
}

QaOutcome Pipeline::run_question(const QuestionRecord& question, const DatasetHandle& handle) const {
    auto outcome = first_pass(question, handle);
    if (outcome.first_attempt_flagged()) outcome = reprocess(question, handle, std::move(outcome));
    return outcome;
}

// --- merge -----------------------------------------------------------------------------

std::vector<QaOutcome> merge_results(const std::vector<QaOutcome>& first_pass,
                                     const std::vector<QaOutcome>& reprocessed) {
    std::map<std::string, std::size_t> position;
    for (std::size_t i = 0; i < first_pass.size(); ++i) {
        if (!position.emplace(first_pass[i].question_id, i).second) {
            throw DataError("duplicate question id in first pass: " + first_pass[i].question_id);
        }
    }
    std::map<std::string, const QaOutcome*> replacement;
    for (const auto& r : reprocessed) {
        auto it = position.find(r.question_id);
        if (it == position.end()) {
            throw DataError("reprocessed question id not in first pass: " + r.question_id);
        }
        if (!first_pass[it->second].first_attempt_flagged()) {
            throw DataError("reprocessed question id was not flagged: " + r.question_id);
        }
        if (!replacement.emplace(r.question_id, &r).second) {
            throw DataError("duplicate question id in reprocessed results: " + r.question_id);
        }
    }
    std::vector<QaOutcome> merged;
    merged.reserve(first_pass.size());
    for (const auto& o : first_pass) {
        auto it = replacement.find(o.question_id);
        merged.push_back(it == replacement.end() ? o : *it->second);
    }
    return merged;
}

void parallel_for(std::size_t n, int parallelism, const std::function<void(std::size_t)>& job) {
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                job(i);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const auto threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, parallelism)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

// --- trace ------------------------------------------------------------------------------

nlohmann::ordered_json to_json(const AnswerValue& value) {
    nlohmann::ordered_json j;
    auto type = answer_type(value);
    j["type"] = type ? nlohmann::ordered_json(std::string(to_string(*type))) : nlohmann::ordered_json(nullptr);
    j["text"] = canonical_text(value);
    struct Visitor {
        nlohmann::ordered_json operator()(const Boolean& b) const { return b.value; }
        nlohmann::ordered_json operator()(const Number& n) const { return n.value; }
        nlohmann::ordered_json operator()(const Category& c) const { return c.value; }
        nlohmann::ordered_json operator()(const CategoryList& l) const { return l.values; }
        nlohmann::ordered_json operator()(const NumberList& l) const { return l.values; }
        nlohmann::ordered_json operator()(const NoAnswer&) const { return nullptr; }
    };
    j["value"] = std::visit(Visitor{}, value);
    return j;
}

nlohmann::ordered_json to_json(const QaOutcome& o) {
    nlohmann::ordered_json j;
    j["question_id"] = o.question_id;
    j["dataset_id"] = o.dataset_id;
    j["question"] = o.question;
    j["expected_type"] = o.expected_type ? nlohmann::ordered_json(std::string(to_string(*o.expected_type)))
                                         : nlohmann::ordered_json(nullptr);
    j["table_name"] = o.table_name;
    j["dataset_rows"] = o.dataset_rows;
    j["attempt_count"] = o.attempt_count();
    j["final_status"] = std::string(to_string(o.final_status));
    j["final_answer"] = to_json(o.final_answer);
    auto attempts = nlohmann::ordered_json::array();
    for (const auto& a : o.attempts) {
        nlohmann::ordered_json aj;
        aj["index"] = a.index;
        aj["mode"] = std::string(to_string(a.mode));
        aj["examples"] = a.example_questions;
        aj["sql_prompt_hash"] = a.sql_prompt_hash;
        aj["raw_sql_response"] = a.raw_sql_response;
        aj["sql"] = a.sql;
        aj["error"] = a.error ? nlohmann::ordered_json(*a.error) : nlohmann::ordered_json(nullptr);
        aj["error_stage"] = a.error_stage;
        aj["error_kind"] = a.error_kind;
        aj["result_digest"] = a.result_digest;
        aj["result_rows"] = a.result_rows;
        aj["result_total_rows"] = a.result_total_rows;
        aj["result_truncated"] = a.result_truncated;
        aj["answer_prompt_hash"] = a.answer_prompt_hash;
        aj["raw_answer"] = a.raw_answer;
        aj["parsed_answer"] = a.parsed_answer ? to_json(*a.parsed_answer) : nlohmann::ordered_json(nullptr);
        aj["parse_error"] = a.parse_error;
        aj["verify_prompt_hash"] = a.verify_prompt_hash;
        aj["verifier_reply"] = a.verifier_reply;
        aj["verdict"] = {{"format_valid", a.verdict.format_valid},
                         {"relevant", a.verdict.relevant},
                         {"decision", std::string(to_string(a.verdict.decision))},
                         {"rationale", a.verdict.rationale}};
        attempts.push_back(std::move(aj));
    }
    j["attempts"] = std::move(attempts);
    return j;
}

void TraceSink::append(std::size_t index, nlohmann::ordered_json record) {
    std::lock_guard lock(mutex_);
    records_[index] = std::move(record);
}

void TraceSink::write(std::ostream& out) const {
    std::lock_guard lock(mutex_);
    for (const auto& [index, record] : records_) out << record.dump() << '\n';
}

std::size_t TraceSink::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

}  // namespace tabqa
