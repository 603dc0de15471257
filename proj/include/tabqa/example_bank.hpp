#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tabqa/error.hpp"

namespace tabqa {

enum class PatternTag { filtering, aggregation, grouping, sorting, join, subquery, conditional };

/// Row retrieval returns whole matching rows (`SELECT *`); value targeted
/// projects the specific value or aggregate that answers the question.
enum class QueryMode { row_retrieval, value_targeted };

std::string_view to_string(PatternTag tag) noexcept;
std::string_view to_string(QueryMode mode) noexcept;
PatternTag parse_pattern_tag(std::string_view text);
QueryMode parse_query_mode(std::string_view text);

struct ExamplePair {
    std::string question;
    std::string sql;
    PatternTag pattern_tag = PatternTag::filtering;
    QueryMode mode = QueryMode::row_retrieval;

    friend bool operator==(const ExamplePair&, const ExamplePair&) = default;
};

/// Throws DataError unless the pair is non-empty and its SQL matches its mode.
void check_example(const ExamplePair& pair);

/// Finite, non-zero, non-empty vector of reals.
class EmbeddingVector {
public:
    explicit EmbeddingVector(std::vector<double> values);

    std::size_t dim() const noexcept { return values_.size(); }
    std::span<const double> values() const noexcept { return values_; }
    double norm() const noexcept { return norm_; }

    friend bool operator==(const EmbeddingVector& a, const EmbeddingVector& b) { return a.values_ == b.values_; }

private:
    std::vector<double> values_;
    double norm_ = 0;
};

/// dot(a, b) / (|a| |b|), clamped to [-1, 1].
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct ScoredExample {
    const ExamplePair* pair;
    double similarity;
    std::size_t insertion_index;
};

/// Exact-scan store of few-shot examples. Build it, then treat it as frozen:
/// `select` is const and safe to call concurrently.
class ExampleBank {
public:
    void add_example(ExamplePair pair, EmbeddingVector embedding);

    /// The `k` examples of `mode` most similar to `query`, most similar first.
    /// Exact ties keep insertion order.
    std::vector<ExamplePair> select_examples(const EmbeddingVector& query, std::size_t k = 2,
                                             QueryMode mode = QueryMode::row_retrieval) const;

    std::vector<ScoredExample> rank(const EmbeddingVector& query, QueryMode mode) const;

    std::size_t size() const noexcept { return pairs_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t count(QueryMode mode) const noexcept;
    const std::vector<ExamplePair>& pairs() const noexcept { return pairs_; }
    const std::vector<EmbeddingVector>& embeddings() const noexcept { return embeddings_; }

private:
    std::vector<ExamplePair> pairs_;
    std::vector<EmbeddingVector> embeddings_;
    std::size_t dim_ = 0;
};

/// Reads a JSON Lines bank file: one object per line with `question`, `sql`,
/// `pattern_tag` and `mode`. Blank lines and lines starting with `#` or `//`
/// are ignored.
std::vector<ExamplePair> load_example_file(const std::filesystem::path& path);

using Embedder = std::function<EmbeddingVector(std::string_view)>;

/// Loads the bank file and embeds each question, reusing vectors from the
/// sidecar cache `<bank>.<embedder_key>.emb.json` and writing back any newly
/// computed ones. Cache entries are keyed by the SHA-256 of the question.
/// With `use_cache` false every question is embedded and nothing is written.
ExampleBank build_bank(const std::filesystem::path& bank_path, const Embedder& embed,
                       const std::string& embedder_key, bool use_cache = true);

std::filesystem::path embedding_cache_path(const std::filesystem::path& bank_path,
                                           const std::string& embedder_key);

}  // namespace tabqa
