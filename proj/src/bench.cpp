#include "tabqa/bench.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "tabqa/dataset_store.hpp"
#include "tabqa/example_bank.hpp"
#include "tabqa/llm_gateway.hpp"

namespace tabqa {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::string casefold(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string read_file(const fs::path& path, ErrorClass cls) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        if (cls == ErrorClass::config) throw ConfigError("cannot read " + path.string());
        throw DataError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string ratio(std::size_t num, std::size_t den) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f (%zu/%zu)", den ? static_cast<double>(num) / den : 0.0, num, den);
    return buf;
}

// --- config values ---------------------------------------------------------------------

int parse_int(const std::string& key, const std::string& value, int min) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw ConfigError("config key '" + key + "' expects an integer, got '" + value + "'");
    }
    if (v < min) throw ConfigError("config key '" + key + "' must be at least " + std::to_string(min));
    return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
    auto v = casefold(value);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError("config key '" + key + "' expects true or false, got '" + value + "'");
}

fs::path parse_path(const std::string& value, const fs::path& base_dir) {
    fs::path p(value);
    if (value.empty() || value == ":memory:" || p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

// --- JSON Lines input ------------------------------------------------------------------

template <class Fn>
void for_each_json_line(const fs::path& path, Fn&& fn) {
    auto text = read_file(path, ErrorClass::data);
    std::istringstream in(text);
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        json j;
        try {
            j = json::parse(t);
        } catch (const json::parse_error& e) {
            throw DataError(path.string() + ":" + std::to_string(number) + ": invalid JSON: " + e.what());
        }
        if (!j.is_object()) throw DataError(path.string() + ":" + std::to_string(number) + ": expected an object");
        try {
            fn(j);
        } catch (const Error& e) {
            throw DataError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
}

std::string id_field(const json& j) {
    if (!j.contains("id")) throw DataError("missing field 'id'");
    const auto& id = j.at("id");
    if (id.is_string()) return id.get<std::string>();
    if (id.is_number_integer()) return std::to_string(id.get<long long>());
    throw DataError("field 'id' must be a string or integer");
}

std::string string_field(const json& j, const char* name) {
    if (!j.contains(name) || !j.at(name).is_string()) {
        throw DataError(std::string("missing string field '") + name + "'");
    }
    return j.at(name).get<std::string>();
}

std::optional<AnswerType> type_field(const json& j) {
    if (!j.contains("type") || j.at("type").is_null()) return std::nullopt;
    if (!j.at("type").is_string()) throw DataError("field 'type' must be a string");
    return parse_answer_type(j.at("type").get<std::string>());
}

std::string element_text(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_null()) throw DataError("null inside a gold answer");
    return v.dump();
}

double element_number(const json& v) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        if (auto d = parse_number(v.get<std::string>())) return *d;
    }
    throw DataError("gold value " + v.dump() + " is not a number");
}

// --- runtime wiring --------------------------------------------------------------------

struct Session {
    RunConfig config;
    std::unique_ptr<DatasetStore> store;
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<ExampleBank> bank;
    TemplateSet templates;
};

std::shared_ptr<Provider> make_provider(const RunConfig& config) {
    if (config.mode == ProviderMode::replay) {
        return std::make_shared<ReplayProvider>(std::make_shared<FixtureStore>(config.fixture_dir));
    }
    const char* key = std::getenv("TABQA_API_KEY");
    if (key == nullptr || *key == '\0') {
        throw ConfigError("TABQA_API_KEY is not set; " + std::string(to_string(config.mode)) +
                          " mode needs an API key");
    }
    auto http = std::make_shared<HttpProvider>(
        HttpProviderConfig{config.base_url, config.chat_model, config.embedding_model, key});
    if (config.mode == ProviderMode::record) {
        return std::make_shared<RecordingProvider>(http, std::make_shared<FixtureStore>(config.fixture_dir));
    }
    return http;
}

Session open_session(const RunConfig& config) {
    Session s;
    s.config = config;
    if (config.db_path != ":memory:" && config.db_path.has_parent_path()) {
        fs::create_directories(config.db_path.parent_path());
    }
    s.store = std::make_unique<DatasetStore>(config.db_path.string());
    return s;
}

void attach_provider(Session& s, std::shared_ptr<Provider> provider) {
    const auto& config = s.config;
    if (!provider) {
        config.check();
        provider = make_provider(config);
    }
    GatewayOptions options;
    options.model_name = config.chat_model;
    options.embedding_model = config.embedding_model;
    options.timeout_ms = config.request_timeout_ms;
    options.max_in_flight = std::max(1, config.parallelism);
    options.retry.max_retries = config.max_retries;
    if (config.embedder == EmbedderKind::pseudo) options.pseudo_embedder = PseudoEmbedder{};
    s.gateway = std::make_unique<Gateway>(std::move(provider), options);

    s.templates = config.template_dir.empty() ? TemplateSet::defaults() : TemplateSet::load(config.template_dir);
    if (!fs::exists(config.bank_path)) throw ConfigError("example bank not found: " + config.bank_path.string());
    auto* gw = s.gateway.get();
    s.bank = std::make_unique<ExampleBank>(build_bank(
        config.bank_path, [gw](std::string_view t) { return gw->embed(t); }, gw->embedder_key(),
        config.embedder == EmbedderKind::provider));
}

DatasetHandle resolve_dataset(Session& s, const std::string& dataset_id) {
    auto handle = s.store->find(dataset_id);
    if (!handle && !s.config.dataset_dir.empty()) {
        auto csv = s.config.dataset_dir / (dataset_id + ".csv");
        if (fs::exists(csv)) handle = s.store->ingest(csv, dataset_id);
    }
    if (!handle) throw DataError("unknown dataset '" + dataset_id + "'");
    if (s.config.lite) return s.store->sample_lite(*handle, s.config.lite_rows);
    return *handle;
}

PipelineConfig pipeline_config(const RunConfig& config) {
    PipelineConfig p;
    p.max_attempts = config.max_attempts;
    p.examples_per_prompt = static_cast<std::size_t>(config.examples_per_prompt);
    p.execute.row_cap = static_cast<std::size_t>(config.row_cap);
    p.execute.timeout_ms = config.sql_timeout_ms;
    p.fatal_replay_miss = config.mode == ProviderMode::replay;
    return p;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << text;
}

// --- subcommands -----------------------------------------------------------------------

int cmd_ingest(const RunConfig& config, const fs::path& file, const std::string& id, std::ostream& out) {
    auto s = open_session(config);
    auto handle = s.store->ingest(file, id);
    auto schema = s.store->schema_info(handle, 0);
    out << "ingested " << handle.dataset_id << ": table " << handle.table_name << ", " << handle.row_count
        << " rows, " << schema.columns.size() << " columns\n";
    for (const auto& c : schema.columns) {
        out << "  " << c.name << ' ' << sql_type_name(c.type);
        if (c.name != c.original_name) out << "  (\"" << c.original_name << "\")";
        out << '\n';
    }
    return 0;
}

int cmd_ask(const RunConfig& config, const std::string& dataset_id, const std::string& question,
            const std::string& type, std::ostream& out, std::ostream& err) {
    QuestionRecord q{"ask", dataset_id, question, std::nullopt};
    if (!type.empty()) q.expected_type = parse_answer_type(type);
    auto s = open_session(config);
    auto handle = resolve_dataset(s, dataset_id);
    attach_provider(s, nullptr);

    Pipeline pipeline(*s.store, *s.bank, s.templates, *s.gateway, pipeline_config(config));
    auto outcome = pipeline.run_question(q, handle);

    fs::create_directories(config.out_dir);
    auto trace_path = config.out_dir / "ask-trace.jsonl";
    write_text(trace_path, to_json(outcome).dump() + "\n");

    bool provider_only = std::all_of(outcome.attempts.begin(), outcome.attempts.end(),
                                     [](const AttemptRecord& a) { return a.error_kind == "provider"; });
    if (!outcome.approved() && provider_only) {
        err << "provider error: " << outcome.attempts.back().error.value_or("unknown") << '\n';
        err << "trace: " << trace_path.string() << '\n';
        return exit_code_for(ErrorClass::provider);
    }
    out << "answer: " << prediction_line(outcome.final_answer) << '\n';
    out << "status: " << to_string(outcome.final_status) << '\n';
    out << "trace: " << trace_path.string() << '\n';
    return 0;
}

int cmd_bench(const RunConfig& config, const fs::path& questions_path, const fs::path& gold_path,
              std::ostream& out) {
    auto run = run_benchmark(config, questions_path, gold_path);
    const auto& r = run.report;
    out << "accuracy: " << ratio(run.correct, run.outcomes.size()) << '\n';
    out << "approved: " << r.approved_first_pass + r.approved_after_reprocess << " (first pass "
        << r.approved_first_pass << ", after reprocess " << r.approved_after_reprocess << "), failed: " << r.failed
        << '\n';
    out << "predictions: " << (config.out_dir / "predictions.txt").string() << '\n';
    out << "trace: " << (config.out_dir / "trace.jsonl").string() << '\n';
    return 0;
}

int cmd_report(const fs::path& trace_path, std::ostream& out) {
    print_report(compute_report(read_trace(trace_path)), out);
    return 0;
}

}  // namespace

std::string_view to_string(ProviderMode mode) noexcept {
    switch (mode) {
    case ProviderMode::live: return "live";
    case ProviderMode::record: return "record";
    case ProviderMode::replay: return "replay";
    }
    return "live";
}

// --- RunConfig -------------------------------------------------------------------------

RunConfig RunConfig::parse(std::string_view text, const fs::path& base_dir) {
    RunConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::set<std::string> seen;
    for (int number = 1; std::getline(in, line); ++number) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
        }
        auto key = trim(std::string_view(t).substr(0, eq));
        auto value = trim(std::string_view(t).substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (!seen.insert(key).second) throw ConfigError("config key '" + key + "' given twice");

        if (key == "base_url") c.base_url = value;
        else if (key == "chat_model") c.chat_model = value;
        else if (key == "embedding_model") c.embedding_model = value;
        else if (key == "mode") {
            if (value == "live") c.mode = ProviderMode::live;
            else if (value == "record") c.mode = ProviderMode::record;
            else if (value == "replay") c.mode = ProviderMode::replay;
            else throw ConfigError("config key 'mode' expects live, record or replay, got '" + value + "'");
        } else if (key == "embedder") {
            if (value == "pseudo") c.embedder = EmbedderKind::pseudo;
            else if (value == "provider") c.embedder = EmbedderKind::provider;
            else throw ConfigError("config key 'embedder' expects pseudo or provider, got '" + value + "'");
        }
        else if (key == "parallelism") c.parallelism = parse_int(key, value, 1);
        else if (key == "row_cap") c.row_cap = parse_int(key, value, 1);
        else if (key == "max_attempts") c.max_attempts = parse_int(key, value, 1);
        else if (key == "examples_per_prompt") c.examples_per_prompt = parse_int(key, value, 0);
        else if (key == "sql_timeout_ms") c.sql_timeout_ms = parse_int(key, value, 1);
        else if (key == "request_timeout_ms") c.request_timeout_ms = parse_int(key, value, 1);
        else if (key == "max_retries") c.max_retries = parse_int(key, value, 0);
        else if (key == "lite") c.lite = parse_bool(key, value);
        else if (key == "lite_rows") c.lite_rows = parse_int(key, value, 1);
        else if (key == "strict") c.strict = parse_bool(key, value);
        else if (key == "db_path") c.db_path = parse_path(value, base_dir);
        else if (key == "fixture_dir") c.fixture_dir = parse_path(value, base_dir);
        else if (key == "bank_path") c.bank_path = parse_path(value, base_dir);
        else if (key == "template_dir") c.template_dir = parse_path(value, base_dir);
        else if (key == "dataset_dir") c.dataset_dir = parse_path(value, base_dir);
        else if (key == "out_dir") c.out_dir = parse_path(value, base_dir);
        else if (key == "api_key") throw ConfigError("the API key is read from TABQA_API_KEY only, not from config");
        else throw ConfigError("unknown config key '" + key + "'");
    }
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    auto text = read_file(path, ErrorClass::config);
    auto base = fs::absolute(path).parent_path();
    return parse(text, base);
}

void RunConfig::check() const {
    if (mode != ProviderMode::live && fixture_dir.empty()) {
        throw ConfigError(std::string(to_string(mode)) + " mode requires fixture_dir");
    }
    if (mode == ProviderMode::replay && !fs::is_directory(fixture_dir)) {
        throw ConfigError("fixture directory not found: " + fixture_dir.string());
    }
    if (parallelism < 1) throw ConfigError("parallelism must be positive");
    if (max_attempts < 1) throw ConfigError("max_attempts must be at least 1");
}

// --- questions and gold ----------------------------------------------------------------

std::vector<QuestionRecord> load_questions(const fs::path& path) {
    std::vector<QuestionRecord> out;
    std::set<std::string> ids;
    for_each_json_line(path, [&](const json& j) {
        QuestionRecord q{id_field(j), string_field(j, "dataset"), string_field(j, "question"), type_field(j)};
        if (!ids.insert(q.question_id).second) throw DataError("duplicate question id '" + q.question_id + "'");
        out.push_back(std::move(q));
    });
    return out;
}

AnswerValue answer_from_json(const json& v, std::optional<AnswerType> type) {
    if (v.is_null()) throw DataError("gold answer is null");
    if (!type) {
        if (v.is_boolean()) return Boolean{v.get<bool>()};
        if (v.is_number()) return Number{v.get<double>()};
        if (v.is_string()) return Category{v.get<std::string>()};
        if (v.is_array()) {
            bool numbers = !v.empty() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
            type = numbers ? AnswerType::list_number : AnswerType::list_category;
        } else {
            throw DataError("unsupported gold answer " + v.dump());
        }
    }
    switch (*type) {
    case AnswerType::boolean:
        if (v.is_boolean()) return Boolean{v.get<bool>()};
        if (v.is_string()) {
            auto s = casefold(trim(v.get<std::string>()));
            if (s == "true") return Boolean{true};
            if (s == "false") return Boolean{false};
        }
        throw DataError("gold value " + v.dump() + " is not a boolean");
    case AnswerType::number: return Number{element_number(v)};
    case AnswerType::category: return Category{element_text(v)};
    case AnswerType::list_category: {
        if (!v.is_array()) throw DataError("gold value " + v.dump() + " is not a list");
        CategoryList l;
        for (const auto& e : v) l.values.push_back(element_text(e));
        return l;
    }
    case AnswerType::list_number: {
        if (!v.is_array()) throw DataError("gold value " + v.dump() + " is not a list");
        NumberList l;
        for (const auto& e : v) l.values.push_back(element_number(e));
        return l;
    }
    }
    throw DataError("unsupported gold answer " + v.dump());
}

std::vector<GoldRecord> load_gold(const fs::path& path) {
    std::vector<GoldRecord> out;
    std::set<std::string> ids;
    for_each_json_line(path, [&](const json& j) {
        auto id = id_field(j);
        if (!j.contains("answer")) throw DataError("missing field 'answer'");
        if (!ids.insert(id).second) throw DataError("duplicate gold id '" + id + "'");
        out.push_back(GoldRecord{id, answer_from_json(j.at("answer"), type_field(j))});
    });
    return out;
}

// --- scoring ---------------------------------------------------------------------------

bool compare_answer(const AnswerValue& predicted, const AnswerValue& gold, bool strict) {
    if (predicted.index() != gold.index()) return false;
    auto number_eq = [strict](double a, double b) {
        if (strict) return a == b;
        double diff = std::fabs(a - b);
        return diff <= 1e-9 || diff <= 1e-6 * std::max(std::fabs(a), std::fabs(b));
    };
    auto text_eq = [strict](const std::string& a, const std::string& b) {
        if (strict) return a == b;
        return casefold(trim(a)) == casefold(trim(b));
    };
    if (auto p = std::get_if<Boolean>(&predicted)) return p->value == std::get<Boolean>(gold).value;
    if (auto p = std::get_if<Number>(&predicted)) return number_eq(p->value, std::get<Number>(gold).value);
    if (auto p = std::get_if<Category>(&predicted)) return text_eq(p->value, std::get<Category>(gold).value);
    if (auto p = std::get_if<CategoryList>(&predicted)) {
        const auto& g = std::get<CategoryList>(gold).values;
        return p->values.size() == g.size() && std::equal(p->values.begin(), p->values.end(), g.begin(), text_eq);
    }
    if (auto p = std::get_if<NumberList>(&predicted)) {
        const auto& g = std::get<NumberList>(gold).values;
        return p->values.size() == g.size() && std::equal(p->values.begin(), p->values.end(), g.begin(), number_eq);
    }
    return false;
}

double accuracy(const std::vector<QaOutcome>& outcomes, const std::vector<GoldRecord>& gold, bool strict) {
    std::map<std::string, const AnswerValue*> by_id;
    for (const auto& g : gold) by_id[g.question_id] = &g.gold;
    if (outcomes.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& o : outcomes) {
        auto it = by_id.find(o.question_id);
        if (it == by_id.end()) throw DataError("no gold answer for question '" + o.question_id + "'");
        if (o.approved() && compare_answer(o.final_answer, *it->second, strict)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

// --- report ----------------------------------------------------------------------------

double StageReport::flag_rate() const {
    return questions ? static_cast<double>(first_attempt_flagged) / questions : 0.0;
}

double StageReport::recovery_rate() const {
    return first_attempt_flagged ? static_cast<double>(approved_after_reprocess) / first_attempt_flagged : 0.0;
}

double StageReport::sql_error_rate() const {
    return attempts ? static_cast<double>(sql_errors) / attempts : 0.0;
}

StageReport compute_report(const std::vector<nlohmann::ordered_json>& trace) {
    StageReport r;
    for (const auto& record : trace) {
        ++r.questions;
        auto status = record.value("final_status", std::string());
        if (status == "approved_first_pass") ++r.approved_first_pass;
        else if (status == "approved_after_reprocess") ++r.approved_after_reprocess;
        else ++r.failed;
        const auto& attempts = record.at("attempts");
        if (!attempts.empty() && attempts.front().at("verdict").value("decision", "") == "flag") {
            ++r.first_attempt_flagged;
        }
        for (const auto& a : attempts) {
            ++r.attempts;
            auto stage = a.value("error_stage", std::string());
            if (stage.empty()) continue;
            ++r.errors_by_stage[stage];
            if (stage == "sql_validation" || stage == "sql_execution") ++r.sql_errors;
        }
    }
    return r;
}

std::vector<nlohmann::ordered_json> read_trace(const fs::path& path) {
    std::vector<nlohmann::ordered_json> out;
    auto text = read_file(path, ErrorClass::data);
    std::istringstream in(text);
    std::string line;
    for (int number = 1; std::getline(in, line); ++number) {
        if (trim(line).empty()) continue;
        try {
            auto j = nlohmann::ordered_json::parse(line);
            if (!j.is_object() || !j.contains("attempts") || !j.at("attempts").is_array()) {
                throw DataError("not a trace record");
            }
            out.push_back(std::move(j));
        } catch (const nlohmann::ordered_json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

void print_report(const StageReport& r, std::ostream& out) {
    out << "questions: " << r.questions << '\n';
    out << "approved (first pass): " << r.approved_first_pass << '\n';
    out << "approved (after reprocess): " << r.approved_after_reprocess << '\n';
    out << "failed: " << r.failed << '\n';
    out << "flag rate: " << ratio(r.first_attempt_flagged, r.questions) << '\n';
    out << "reprocess recovery rate: " << ratio(r.approved_after_reprocess, r.first_attempt_flagged) << '\n';
    out << "SQL error rate: " << ratio(r.sql_errors, r.attempts) << '\n';
    if (!r.errors_by_stage.empty()) {
        out << "errors by stage:\n";
        for (const auto& [stage, count] : r.errors_by_stage) out << "  " << stage << ": " << count << '\n';
    }
}

BenchRun run_benchmark(const RunConfig& config, const fs::path& questions_path, const fs::path& gold_path,
                       std::shared_ptr<Provider> provider) {
    auto questions = load_questions(questions_path);
    auto gold = load_gold(gold_path);
    std::set<std::string> gold_ids;
    for (const auto& g : gold) gold_ids.insert(g.question_id);
    for (const auto& q : questions) {
        if (!gold_ids.count(q.question_id)) throw DataError("no gold answer for question '" + q.question_id + "'");
    }

    auto s = open_session(config);
    std::map<std::string, DatasetHandle> handles;
    for (const auto& q : questions) {
        if (!handles.count(q.dataset_id)) handles.emplace(q.dataset_id, resolve_dataset(s, q.dataset_id));
    }
    attach_provider(s, std::move(provider));
    BenchRun run;
    for (const auto& h : s.store->list()) run.checksums[h.dataset_id] = s.store->table_checksum(h);

    Pipeline pipeline(*s.store, *s.bank, s.templates, *s.gateway, pipeline_config(config));
    const auto n = questions.size();
    std::vector<QaOutcome> first(n);
    parallel_for(n, config.parallelism, [&](std::size_t i) {
        first[i] = pipeline.first_pass(questions[i], handles.at(questions[i].dataset_id));
    });
    std::vector<std::size_t> flagged;
    for (std::size_t i = 0; i < n; ++i) {
        if (first[i].first_attempt_flagged()) flagged.push_back(i);
    }
    std::vector<QaOutcome> reprocessed(flagged.size());
    parallel_for(flagged.size(), config.parallelism, [&](std::size_t j) {
        auto i = flagged[j];
        reprocessed[j] = pipeline.reprocess(questions[i], handles.at(questions[i].dataset_id), first[i]);
    });
    run.outcomes = merge_results(first, reprocessed);

    for (const auto& h : s.store->list()) {
        auto it = run.checksums.find(h.dataset_id);
        if (it != run.checksums.end() && it->second != s.store->table_checksum(h)) {
            throw DataError("table for dataset '" + h.dataset_id + "' changed during the run");
        }
    }

    TraceSink sink;
    std::string predictions;
    std::vector<nlohmann::ordered_json> records;
    for (std::size_t i = 0; i < n; ++i) {
        records.push_back(to_json(run.outcomes[i]));
        sink.append(i, records.back());
        predictions += prediction_line(run.outcomes[i].final_answer) + '\n';
    }
    run.accuracy = accuracy(run.outcomes, gold, config.strict);
    run.correct = static_cast<std::size_t>(std::llround(run.accuracy * static_cast<double>(n)));
    run.report = compute_report(records);

    fs::create_directories(config.out_dir);
    write_text(config.out_dir / "predictions.txt", predictions);
    std::ostringstream trace;
    sink.write(trace);
    write_text(config.out_dir / "trace.jsonl", trace.str());

    nlohmann::ordered_json summary;
    summary["questions"] = n;
    summary["correct"] = run.correct;
    summary["accuracy"] = run.accuracy;
    summary["strict"] = config.strict;
    summary["lite"] = config.lite;
    summary["mode"] = std::string(to_string(config.mode));
    summary["approved_first_pass"] = run.report.approved_first_pass;
    summary["approved_after_reprocess"] = run.report.approved_after_reprocess;
    summary["failed"] = run.report.failed;
    summary["flag_rate"] = run.report.flag_rate();
    summary["recovery_rate"] = run.report.recovery_rate();
    summary["sql_error_rate"] = run.report.sql_error_rate();
    summary["table_checksums"] = run.checksums;
    write_text(config.out_dir / "summary.json", summary.dump(2) + "\n");
    return run;
}

std::string prediction_line(const AnswerValue& value) {
    auto text = canonical_text(value);
    std::replace(text.begin(), text.end(), '\n', ' ');
    text.erase(std::remove(text.begin(), text.end(), '\r'), text.end());
    return text;
}

int exit_code_for(ErrorClass error_class) noexcept {
    switch (error_class) {
    case ErrorClass::config: return 2;
    case ErrorClass::provider: return 4;
    case ErrorClass::data:
    case ErrorClass::sql:
    case ErrorClass::answer: return 3;
    }
    return 1;
}

// --- CLI -------------------------------------------------------------------------------

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Table question answering over CSV datasets via generated SQL", "tabqa"};
    app.require_subcommand(1);

    std::string config_path, db_override, out_override;
    app.add_option("--config", config_path, "Run configuration file (key = value)");
    app.add_option("--db", db_override, "Dataset database path, overrides db_path");

    std::string ingest_file, ingest_id;
    auto* ingest = app.add_subcommand("ingest", "Load a CSV file as a dataset");
    ingest->add_option("file", ingest_file, "CSV file")->required();
    ingest->add_option("--id", ingest_id, "Dataset id")->required();

    std::string ask_dataset, ask_question, ask_type;
    auto* ask = app.add_subcommand("ask", "Answer one question about a dataset");
    ask->add_option("dataset_id", ask_dataset)->required();
    ask->add_option("question", ask_question)->required();
    ask->add_option("--type", ask_type, "Expected answer type");

    std::string questions_file, gold_file;
    auto* bench = app.add_subcommand("bench", "Run a question set and score it against gold answers");
    bench->add_option("questions", questions_file, "Questions (JSON Lines)")->required();
    bench->add_option("gold", gold_file, "Gold answers (JSON Lines)")->required();

    bool lite = false, strict = false;
    std::string replay_dir, record_dir;
    int parallelism = 0;
    for (auto* sub : {ask, bench}) {
        sub->add_flag("--lite", lite, "Sample each dataset down to 20 rows");
        sub->add_option("--replay", replay_dir, "Serve provider calls from this fixture directory");
        sub->add_option("--record", record_dir, "Store provider responses in this fixture directory");
        sub->add_option("--out", out_override, "Output directory");
        sub->add_option("--parallelism", parallelism, "Questions processed concurrently");
    }
    bench->add_flag("--strict", strict, "Exact answer comparison, no normalization");

    std::string trace_file;
    auto* report = app.add_subcommand("report", "Per-stage statistics for a trace file");
    report->add_option("trace", trace_file, "trace.jsonl written by bench")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : exit_code_for(ErrorClass::config);
    }

    try {
        RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
        if (!db_override.empty()) config.db_path = db_override;
        if (!out_override.empty()) config.out_dir = out_override;
        if (lite) config.lite = true;
        if (strict) config.strict = true;
        if (parallelism > 0) config.parallelism = parallelism;
        if (!replay_dir.empty() && !record_dir.empty()) throw ConfigError("--replay and --record are exclusive");
        if (!replay_dir.empty()) {
            config.mode = ProviderMode::replay;
            config.fixture_dir = replay_dir;
        }
        if (!record_dir.empty()) {
            config.mode = ProviderMode::record;
            config.fixture_dir = record_dir;
        }

        if (*ingest) return cmd_ingest(config, ingest_file, ingest_id, out);
        if (*ask) return cmd_ask(config, ask_dataset, ask_question, ask_type, out, err);
        if (*bench) return cmd_bench(config, questions_file, gold_file, out);
        if (*report) return cmd_report(trace_file, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.error_class());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace tabqa
