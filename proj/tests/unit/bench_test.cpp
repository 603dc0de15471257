#include "tabqa/bench.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <random>
#include <sstream>

#include "scripted_provider.hpp"
#include "test_util.hpp"

namespace tabqa {
namespace {

using testing::TempDir;
using testing::write_file;

// --- config ------------------------------------------------------------------------

TEST(RunConfig, ParsesTypedValuesAndResolvesPaths) {
    auto c = RunConfig::parse(
        "# comment\nmode = replay\nparallelism = 3\nlite = true\nfixture_dir = fx\ndb_path = :memory:\n"
        "bank_path = /abs/bank.jsonl\nembedder = pseudo\n",
        "/base");
    EXPECT_EQ(c.mode, ProviderMode::replay);
    EXPECT_EQ(c.parallelism, 3);
    EXPECT_TRUE(c.lite);
    EXPECT_EQ(c.fixture_dir, std::filesystem::path("/base/fx"));
    EXPECT_EQ(c.db_path, std::filesystem::path(":memory:"));
    EXPECT_EQ(c.bank_path, std::filesystem::path("/abs/bank.jsonl"));
    EXPECT_EQ(c.embedder, EmbedderKind::pseudo);
}

TEST(RunConfig, Errors) {
    EXPECT_THROW(RunConfig::parse("colour = blue\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("parallelism = 0\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("parallelism = many\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("lite = maybe\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("mode = dream\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("api_key = sk-123\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("row_cap = 5\nrow_cap = 6\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("just words\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("mode = replay\n").check(), ConfigError);
}

// --- scoring -----------------------------------------------------------------------

TEST(CompareAnswer, Examples) {
    EXPECT_TRUE(compare_answer(Number{3.5000001e0}, Number{3.5}));
    EXPECT_TRUE(compare_answer(Category{"Paris "}, Category{"paris"}));
    EXPECT_FALSE(compare_answer(CategoryList{{"dog", "cat"}}, CategoryList{{"cat", "dog"}}));
    EXPECT_FALSE(compare_answer(Number{1}, Category{"1"}));
    EXPECT_FALSE(compare_answer(NoAnswer{}, Category{""}));
    EXPECT_TRUE(compare_answer(Number{1e-10}, Number{0}));
    EXPECT_FALSE(compare_answer(Number{3.51}, Number{3.5}));
    EXPECT_TRUE(compare_answer(NumberList{{1, 2}}, NumberList{{1.0000000001, 2}}));
}

TEST(CompareAnswer, StrictDisablesNormalization) {
    EXPECT_FALSE(compare_answer(Category{"Paris "}, Category{"paris"}, true));
    EXPECT_FALSE(compare_answer(Number{3.5000001}, Number{3.5}, true));
    EXPECT_TRUE(compare_answer(Category{"paris"}, Category{"paris"}, true));
}

AnswerValue random_answer(std::mt19937& rng) {
    static const std::vector<std::string> words = {"Paris", " paris", "PARIS ", "Rome", "", "a b"};
    switch (rng() % 5) {
    case 0: return Boolean{rng() % 2 == 0};
    case 1: return Number{static_cast<double>(rng() % 5) * 0.5};
    case 2: return Category{words[rng() % words.size()]};
    case 3: return CategoryList{{words[rng() % words.size()], words[rng() % words.size()]}};
    default: return NumberList{{static_cast<double>(rng() % 3)}};
    }
}

TEST(CompareAnswer, ReflexiveAndSymmetric) {
    std::mt19937 rng(9);
    for (int i = 0; i < 2000; ++i) {
        auto a = random_answer(rng);
        auto b = random_answer(rng);
        EXPECT_TRUE(compare_answer(a, a));
        EXPECT_EQ(compare_answer(a, b), compare_answer(b, a));
    }
}

QaOutcome scored(const std::string& id, AnswerValue answer, bool approved = true) {
    QaOutcome o;
    o.question_id = id;
    o.final_answer = std::move(answer);
    o.final_status = approved ? FinalStatus::approved_first_pass : FinalStatus::failed;
    return o;
}

TEST(Accuracy, Counting) {
    std::vector<GoldRecord> gold = {{"a", Number{1}}, {"b", Number{2}}, {"c", Number{3}}, {"d", Number{4}}};
    std::vector<QaOutcome> out = {scored("a", Number{1}), scored("b", Number{2}), scored("c", Number{3}),
                                  scored("d", Number{5})};
    EXPECT_DOUBLE_EQ(accuracy(out, gold), 0.75);
    for (auto& o : out) o.final_status = FinalStatus::failed;
    EXPECT_DOUBLE_EQ(accuracy(out, gold), 0.0);
    EXPECT_THROW(accuracy({scored("z", Number{1})}, gold), DataError);
}

TEST(Accuracy, PermutationInvariant) {
    std::mt19937 rng(2);
    std::vector<GoldRecord> gold;
    std::vector<QaOutcome> out;
    for (int i = 0; i < 50; ++i) {
        gold.push_back({std::to_string(i), Number{static_cast<double>(i % 3)}});
        out.push_back(scored(std::to_string(i), Number{static_cast<double>(rng() % 3)}, rng() % 4 != 0));
    }
    auto base = accuracy(out, gold);
    for (int t = 0; t < 20; ++t) {
        std::shuffle(out.begin(), out.end(), rng);
        std::shuffle(gold.begin(), gold.end(), rng);
        EXPECT_DOUBLE_EQ(accuracy(out, gold), base);
    }
}

// --- files -------------------------------------------------------------------------

TEST(GoldFile, TypedAndUntypedAnswers) {
    TempDir dir;
    auto path = write_file(dir / "gold.jsonl",
                           "{\"id\": \"a\", \"type\": \"boolean\", \"answer\": \"True\"}\n"
                           "{\"id\": 2, \"answer\": 3.5}\n"
                           "{\"id\": \"c\", \"type\": \"list[number]\", \"answer\": [\"1,000\", 2]}\n"
                           "{\"id\": \"d\", \"answer\": [\"x\", \"y\"]}\n"
                           "{\"id\": \"e\", \"type\": \"category\", \"answer\": 7}\n");
    auto gold = load_gold(path);
    ASSERT_EQ(gold.size(), 5u);
    EXPECT_EQ(gold[0].gold, AnswerValue(Boolean{true}));
    EXPECT_EQ(gold[1].question_id, "2");
    EXPECT_EQ(gold[1].gold, AnswerValue(Number{3.5}));
    EXPECT_EQ(gold[2].gold, AnswerValue(NumberList{{1000, 2}}));
    EXPECT_EQ(gold[3].gold, AnswerValue(CategoryList{{"x", "y"}}));
    EXPECT_EQ(gold[4].gold, AnswerValue(Category{"7"}));
}

TEST(GoldFile, Errors) {
    TempDir dir;
    EXPECT_THROW(load_gold(write_file(dir / "a.jsonl", "{\"id\": \"a\", \"answer\": 1}\n{\"id\": \"a\", \"answer\": 2}\n")),
                 DataError);
    EXPECT_THROW(load_gold(write_file(dir / "b.jsonl", "{\"id\": \"a\", \"type\": \"number\", \"answer\": \"x\"}\n")),
                 DataError);
    EXPECT_THROW(load_gold(write_file(dir / "c.jsonl", "not json\n")), DataError);
    EXPECT_THROW(load_gold(dir / "missing.jsonl"), DataError);
}

TEST(QuestionFile, LoadsBundledToySet) {
    auto qs = load_questions(testing::source_path("data/toy/questions.jsonl"));
    ASSERT_EQ(qs.size(), 10u);
    std::set<AnswerType> types;
    for (const auto& q : qs) types.insert(*q.expected_type);
    EXPECT_EQ(types.size(), 5u);
}

TEST(PredictionLine, SingleLine) {
    EXPECT_EQ(prediction_line(Category{"a\nb\r"}), "a b");
    EXPECT_EQ(prediction_line(NoAnswer{}), "");
}

// --- report ------------------------------------------------------------------------

TEST(Report, Rates) {
    std::vector<nlohmann::ordered_json> trace;
    auto record = [](const std::string& status, std::vector<std::pair<std::string, std::string>> attempts) {
        nlohmann::ordered_json j;
        j["final_status"] = status;
        j["attempts"] = nlohmann::ordered_json::array();
        for (auto& [decision, stage] : attempts) {
            j["attempts"].push_back({{"error_stage", stage}, {"verdict", {{"decision", decision}}}});
        }
        return j;
    };
    trace.push_back(record("approved_first_pass", {{"accept", ""}}));
    trace.push_back(record("approved_after_reprocess", {{"flag", "sql_execution"}, {"accept", ""}}));
    trace.push_back(record("failed", {{"flag", ""}, {"flag", "sql_validation"}}));
    trace.push_back(record("approved_first_pass", {{"accept", ""}}));
    auto r = compute_report(trace);
    EXPECT_EQ(r.questions, 4u);
    EXPECT_DOUBLE_EQ(r.flag_rate(), 0.5);
    EXPECT_DOUBLE_EQ(r.recovery_rate(), 0.5);
    EXPECT_DOUBLE_EQ(r.sql_error_rate(), 2.0 / 6.0);
    EXPECT_EQ(r.errors_by_stage.at("sql_execution"), 1u);
}

// --- cli ---------------------------------------------------------------------------

int cli(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
    args.insert(args.begin(), "tabqa");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (out_text) *out_text = out.str();
    if (err_text) *err_text = err.str();
    return code;
}

const std::string kToyConfig = testing::source_path("data/toy/tabqa.conf").string();
const std::string kToyQuestions = testing::source_path("data/toy/questions.jsonl").string();
const std::string kToyGold = testing::source_path("data/toy/gold.jsonl").string();

TEST(Cli, BenchReplay) {
    TempDir dir;
    std::string out, err;
    ASSERT_EQ(cli({"--config", kToyConfig, "bench", kToyQuestions, kToyGold, "--out", dir.path().string()}, &out, &err),
              0)
        << err;
    EXPECT_NE(out.find("accuracy: 0.9000 (9/10)"), std::string::npos) << out;
    auto predictions = testing::read_text(dir / "predictions.txt");
    EXPECT_EQ(std::count(predictions.begin(), predictions.end(), '\n'), 10);
    ASSERT_EQ(cli({"report", (dir / "trace.jsonl").string()}, &out), 0);
    EXPECT_NE(out.find("reprocess recovery rate: 0.6667 (2/3)"), std::string::npos) << out;
}

TEST(Cli, AskUnknownDatasetNamesIt) {
    std::string err;
    EXPECT_EQ(cli({"--config", kToyConfig, "ask", "no_such_set", "Anything?"}, nullptr, &err), 3);
    EXPECT_NE(err.find("no_such_set"), std::string::npos) << err;
}

TEST(Cli, AskReplay) {
    TempDir dir;
    std::string out;
    ASSERT_EQ(cli({"--config", kToyConfig, "ask", "staff", "Which city does the highest-paid employee live in?",
                   "--type", "category", "--out", dir.path().string()},
                  &out),
              0);
    EXPECT_NE(out.find("answer: Austin"), std::string::npos) << out;
    EXPECT_TRUE(std::filesystem::exists(dir / "ask-trace.jsonl"));
}

TEST(Cli, IngestThenAskMissesFixtures) {
    TempDir dir;
    auto csv = write_file(dir / "n.csv", testing::numbered_csv(5));
    std::string db = (dir / "store.db").string(), out, err;
    ASSERT_EQ(cli({"--db", db, "ingest", csv.string(), "--id", "numbers"}, &out, &err), 0) << err;
    EXPECT_NE(out.find("5 rows"), std::string::npos) << out;
    EXPECT_EQ(cli({"--db", db, "ingest", csv.string(), "--id", "numbers"}), 3);
    // Replay without a recording for this prompt is a provider error.
    EXPECT_EQ(cli({"--config", kToyConfig, "--db", db, "ask", "numbers", "How many rows?", "--out",
                   dir.path().string()},
                  nullptr, &err),
              4)
        << err;
}

TEST(Cli, UsageAndConfigErrors) {
    TempDir dir;
    EXPECT_EQ(cli({"frobnicate"}), 2);
    EXPECT_EQ(cli({}), 2);
    EXPECT_EQ(cli({"--config", (dir / "none.conf").string(), "report", "x"}), 2);
    auto bad = write_file(dir / "bad.conf", "colour = blue\n");
    EXPECT_EQ(cli({"--config", bad.string(), "report", "x"}), 2);
    EXPECT_EQ(cli({"report", (dir / "missing.jsonl").string()}), 3);
}

TEST(Cli, LiveModeNeedsKey) {
    const char* saved = std::getenv("TABQA_API_KEY");
    std::string keep = saved ? saved : "";
    ::unsetenv("TABQA_API_KEY");
    TempDir dir;
    auto csv = write_file(dir / "n.csv", testing::numbered_csv(3));
    std::string db = (dir / "store.db").string(), err;
    ASSERT_EQ(cli({"--db", db, "ingest", csv.string(), "--id", "n"}), 0);
    EXPECT_EQ(cli({"--db", db, "ask", "n", "How many rows?"}, nullptr, &err), 2);
    EXPECT_NE(err.find("TABQA_API_KEY"), std::string::npos) << err;
    if (saved) ::setenv("TABQA_API_KEY", keep.c_str(), 1);
}

// --- library runs ------------------------------------------------------------------

TEST(RunBenchmark, LiteTablesHaveTwentyRows) {
    TempDir dir;
    write_file(dir / "data" / "hundred.csv", testing::numbered_csv(100));
    write_file(dir / "q.jsonl", "{\"id\": \"1\", \"dataset\": \"hundred\", \"question\": \"How many rows are there?\", "
                                "\"type\": \"number\"}\n");
    write_file(dir / "g.jsonl", "{\"id\": \"1\", \"answer\": 20}\n");
    RunConfig config;
    config.db_path = ":memory:";
    config.dataset_dir = dir / "data";
    config.bank_path = testing::source_path("data/bank/examples.jsonl");
    config.embedder = EmbedderKind::pseudo;
    config.lite = true;
    config.out_dir = dir / "out";
    testing::Script s{"How many rows are there?", "SELECT * FROM {table};", "SELECT COUNT(*) FROM {table};", {"20"}};
    auto provider = std::make_shared<testing::ScriptedProvider>(std::vector<testing::Script>{s});
    auto run = run_benchmark(config, dir / "q.jsonl", dir / "g.jsonl", provider);
    ASSERT_EQ(run.outcomes.size(), 1u);
    EXPECT_EQ(run.outcomes[0].dataset_rows, 20);
    EXPECT_EQ(run.outcomes[0].attempts[0].result_total_rows, 20);
    EXPECT_DOUBLE_EQ(run.accuracy, 1.0);
    auto trace = read_trace(config.out_dir / "trace.jsonl");
    EXPECT_EQ(trace[0]["dataset_rows"], 20);
}

TEST(RunBenchmark, MissingGoldFailsBeforeRunning) {
    TempDir dir;
    write_file(dir / "q.jsonl", "{\"id\": \"1\", \"dataset\": \"x\", \"question\": \"Q?\"}\n");
    write_file(dir / "g.jsonl", "{\"id\": \"2\", \"answer\": 1}\n");
    RunConfig config;
    EXPECT_THROW(run_benchmark(config, dir / "q.jsonl", dir / "g.jsonl",
                               std::make_shared<testing::ScriptedProvider>(std::vector<testing::Script>{})),
                 DataError);
}

TEST(ToyFixtures, RegenerateIdentically) {
    TempDir dir;
    auto config = RunConfig::load(kToyConfig);
    config.mode = ProviderMode::record;
    config.fixture_dir = dir / "fixtures";
    config.out_dir = dir / "out";
    config.parallelism = 1;
    auto store = std::make_shared<FixtureStore>(config.fixture_dir);
    auto provider = std::make_shared<RecordingProvider>(
        std::make_shared<testing::ScriptedProvider>(testing::toy_scripts()), store);
    std::filesystem::create_directories(config.fixture_dir);
    run_benchmark(config, kToyQuestions, kToyGold, provider);

    auto bundled = testing::source_path("data/toy/fixtures");
    std::set<std::string> regenerated, shipped;
    for (const auto& e : std::filesystem::directory_iterator(config.fixture_dir)) regenerated.insert(e.path().filename());
    for (const auto& e : std::filesystem::directory_iterator(bundled)) shipped.insert(e.path().filename());
    EXPECT_EQ(regenerated, shipped);
    for (const auto& name : regenerated) {
        EXPECT_EQ(testing::read_text(config.fixture_dir / name), testing::read_text(bundled / name)) << name;
    }
}

}  // namespace
}  // namespace tabqa
