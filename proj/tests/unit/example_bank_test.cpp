#include "tabqa/example_bank.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "tabqa/llm_gateway.hpp"
#include "test_util.hpp"

namespace tabqa {
namespace {

EmbeddingVector vec(std::vector<double> v) { return EmbeddingVector(std::move(v)); }

ExamplePair pair(const std::string& q, QueryMode mode = QueryMode::row_retrieval) {
    std::string sql = mode == QueryMode::row_retrieval ? "SELECT * FROM t" : "SELECT a FROM t";
    return ExamplePair{q, sql, PatternTag::filtering, mode};
}

/// Plain dot / (norm * norm) over doubles.
double reference_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

TEST(Cosine, Examples) {
    EXPECT_NEAR(cosine_similarity(vec({0.6, 0.8}), vec({0.6, 0.8})), 1.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(vec({1, 0}), vec({0, 1})), 0.0, 1e-12);
    EXPECT_NEAR(cosine_similarity(vec({1, 1}), vec({1, 0})), 0.70710678, 1e-8);
    EXPECT_NEAR(cosine_similarity(vec({1, 1}), vec({1, 0})), reference_cosine({1, 1}, {1, 0}), 1e-9);
}

TEST(Cosine, DimensionMismatch) {
    EXPECT_THROW(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), DataError);
}

TEST(Cosine, ScaleInvariant) {
    std::mt19937 rng(3);
    std::normal_distribution<double> n;
    for (int i = 0; i < 200; ++i) {
        std::vector<double> a(8), b(8);
        for (auto& x : a) x = n(rng);
        for (auto& x : b) x = n(rng);
        double s = std::exp(n(rng) * 3);
        auto scaled = a;
        for (auto& x : scaled) x *= s;
        EXPECT_NEAR(cosine_similarity(vec(a), vec(b)), cosine_similarity(vec(scaled), vec(b)), 1e-12);
    }
}

TEST(EmbeddingVector, RejectsDegenerate) {
    EXPECT_THROW(vec({}), DataError);
    EXPECT_THROW(vec({0, 0}), DataError);
    EXPECT_THROW(vec({1, NAN}), DataError);
}

TEST(ExampleBank, DimensionFixedByFirstInsert) {
    ExampleBank bank;
    bank.add_example(pair("a"), vec(std::vector<double>(8, 1.0)));
    EXPECT_EQ(bank.dim(), 8u);
    EXPECT_THROW(bank.add_example(pair("b"), vec(std::vector<double>(4, 1.0))), DataError);
}

TEST(ExampleBank, DuplicateQuestionAndMode) {
    ExampleBank bank;
    bank.add_example(pair("a"), vec({1, 0}));
    EXPECT_THROW(bank.add_example(pair("a"), vec({0, 1})), DataError);
    EXPECT_NO_THROW(bank.add_example(pair("a", QueryMode::value_targeted), vec({0, 1})));
}

TEST(ExampleBank, RejectsModeMismatch) {
    ExampleBank bank;
    EXPECT_THROW(bank.add_example(ExamplePair{"q", "SELECT a FROM t", PatternTag::sorting, QueryMode::row_retrieval},
                                  vec({1, 0})),
                 DataError);
}

TEST(ExampleBank, SelectTopTwo) {
    ExampleBank bank;
    bank.add_example(pair("e1"), vec({1, 0}));
    bank.add_example(pair("e2"), vec({0, 1}));
    bank.add_example(pair("e3"), vec({0.9, 0.1}));
    auto top = bank.select_examples(vec({1, 0}), 2, QueryMode::row_retrieval);
    ASSERT_EQ(top.size(), 2u);
    EXPECT_EQ(top[0].question, "e1");
    EXPECT_EQ(top[1].question, "e3");
}

TEST(ExampleBank, KEqualsSizeReturnsAllSorted) {
    ExampleBank bank;
    bank.add_example(pair("e1"), vec({0, 1}));
    bank.add_example(pair("e2"), vec({1, 0}));
    bank.add_example(pair("e3"), vec({1, 1}));
    auto all = bank.select_examples(vec({1, 0}), 3, QueryMode::row_retrieval);
    ASSERT_EQ(all.size(), 3u);
    EXPECT_EQ(all[0].question, "e2");
    EXPECT_EQ(all[1].question, "e3");
    EXPECT_EQ(all[2].question, "e1");
}

TEST(ExampleBank, TiesKeepInsertionOrder) {
    ExampleBank bank;
    bank.add_example(pair("late"), vec({0, 1}));
    bank.add_example(pair("first"), vec({1, 0}));
    bank.add_example(pair("second"), vec({1, 0}));
    auto top = bank.select_examples(vec({1, 0}), 2, QueryMode::row_retrieval);
    EXPECT_EQ(top[0].question, "first");
    EXPECT_EQ(top[1].question, "second");
}

TEST(ExampleBank, SelectFiltersByModeAndNeedsEnough) {
    ExampleBank bank;
    bank.add_example(pair("r1"), vec({1, 0}));
    bank.add_example(pair("v1", QueryMode::value_targeted), vec({1, 0}));
    auto v = bank.select_examples(vec({1, 0}), 1, QueryMode::value_targeted);
    ASSERT_EQ(v.size(), 1u);
    EXPECT_EQ(v[0].question, "v1");
    EXPECT_THROW(bank.select_examples(vec({1, 0}), 2, QueryMode::value_targeted), DataError);
}

TEST(ExampleBank, MatchesBruteForce) {
    std::mt19937 rng(5);
    std::normal_distribution<double> n;
    std::vector<std::vector<double>> raw;
    ExampleBank bank;
    for (int i = 0; i < 25; ++i) {
        std::vector<double> v(6);
        for (auto& x : v) x = n(rng);
        if (i % 5 == 4) v = raw[i - 1];  // exact duplicates exercise the tie rule
        raw.push_back(v);
        bank.add_example(pair("q" + std::to_string(i)), vec(v));
    }
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> q(6);
        for (auto& x : q) x = n(rng);
        if (trial % 10 == 0) q = raw[trial % 25];
        std::vector<std::pair<double, int>> scored;
        for (int i = 0; i < 25; ++i) scored.emplace_back(reference_cosine(q, raw[i]), i);
        std::stable_sort(scored.begin(), scored.end(), [](auto& a, auto& b) { return a.first > b.first; });
        auto got = bank.select_examples(vec(q), 3, QueryMode::row_retrieval);
        for (int k = 0; k < 3; ++k) ASSERT_EQ(got[k].question, "q" + std::to_string(scored[k].second));
    }
}

TEST(ExampleFile, LoadsBundledBank) {
    auto pairs = load_example_file(testing::source_path("data/bank/examples.jsonl"));
    EXPECT_EQ(pairs.size(), 50u);
    std::map<PatternTag, int> per_tag;
    for (const auto& p : pairs) {
        if (p.mode == QueryMode::row_retrieval) ++per_tag[p.pattern_tag];
    }
    EXPECT_EQ(per_tag.size(), 7u);
    for (auto [tag, count] : per_tag) EXPECT_GE(count, 3) << to_string(tag);
}

TEST(ExampleFile, BadLinesNameTheLine) {
    testing::TempDir dir;
    auto path = testing::write_file(dir / "bank.jsonl", "# comment\n{\"question\": \"q\"}\n");
    try {
        load_example_file(path);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos) << e.what();
    }
}

TEST(BuildBank, CacheIsReused) {
    testing::TempDir dir;
    auto bank_path = testing::write_file(
        dir / "bank.jsonl",
        "{\"question\": \"How many?\", \"sql\": \"SELECT * FROM t\", \"pattern_tag\": \"aggregation\", "
        "\"mode\": \"row_retrieval\"}\n"
        "{\"question\": \"How many?\", \"sql\": \"SELECT COUNT(*) FROM t\", \"pattern_tag\": \"aggregation\", "
        "\"mode\": \"value_targeted\"}\n");
    PseudoEmbedder pseudo;
    int calls = 0;
    auto embed = [&](std::string_view t) {
        ++calls;
        return pseudo.embed(t);
    };
    auto first = build_bank(bank_path, embed, "k");
    EXPECT_EQ(calls, 1);  // one distinct question
    EXPECT_TRUE(std::filesystem::exists(embedding_cache_path(bank_path, "k")));
    auto second = build_bank(bank_path, embed, "k");
    EXPECT_EQ(calls, 1);
    EXPECT_EQ(first.embeddings(), second.embeddings());
    build_bank(bank_path, embed, "other", false);
    EXPECT_EQ(calls, 2);
    EXPECT_FALSE(std::filesystem::exists(embedding_cache_path(bank_path, "other")));
}

}  // namespace
}  // namespace tabqa
