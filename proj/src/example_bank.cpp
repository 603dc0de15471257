#include "tabqa/example_bank.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "tabqa/hash.hpp"

namespace tabqa {

namespace {

std::string upper_prefix(std::string_view sql, std::size_t n) {
    std::string out;
    for (char c : sql) {
        if (out.size() >= n) break;
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty() && out.back() != ' ') out.push_back(' ');
            continue;
        }
        out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    }
    return out;
}

std::string sanitize_key(const std::string& key) {
    std::string out;
    for (char c : key) {
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '.' ? c : '_');
    }
    return out;
}

}  // namespace

std::string_view to_string(PatternTag tag) noexcept {
    switch (tag) {
    case PatternTag::filtering: return "filtering";
    case PatternTag::aggregation: return "aggregation";
    case PatternTag::grouping: return "grouping";
    case PatternTag::sorting: return "sorting";
    case PatternTag::join: return "join";
    case PatternTag::subquery: return "subquery";
    case PatternTag::conditional: return "conditional";
    }
    return "filtering";
}

std::string_view to_string(QueryMode mode) noexcept {
    return mode == QueryMode::row_retrieval ? "row_retrieval" : "value_targeted";
}

PatternTag parse_pattern_tag(std::string_view text) {
    for (auto tag : {PatternTag::filtering, PatternTag::aggregation, PatternTag::grouping, PatternTag::sorting,
                     PatternTag::join, PatternTag::subquery, PatternTag::conditional}) {
        if (to_string(tag) == text) return tag;
    }
    throw DataError("unknown pattern_tag '" + std::string(text) + "'");
}

QueryMode parse_query_mode(std::string_view text) {
    if (text == "row_retrieval") return QueryMode::row_retrieval;
    if (text == "value_targeted") return QueryMode::value_targeted;
    throw DataError("unknown mode '" + std::string(text) + "'");
}

void check_example(const ExamplePair& pair) {
    if (pair.question.empty() || pair.sql.empty()) {
        throw DataError("example question and sql must be non-empty");
    }
    bool star = upper_prefix(pair.sql, 8) == "SELECT *";
    if (pair.mode == QueryMode::row_retrieval && !star) {
        throw DataError("row_retrieval example must start with SELECT *: " + pair.question);
    }
    if (pair.mode == QueryMode::value_targeted && star) {
        throw DataError("value_targeted example must project specific columns: " + pair.question);
    }
}

EmbeddingVector::EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {
    if (values_.empty()) {
        throw DataError("embedding must have at least one dimension");
    }
    double sq = 0;
    for (double v : values_) {
        if (!std::isfinite(v)) throw DataError("embedding contains a non-finite value");
        sq += v * v;
    }
    norm_ = std::sqrt(sq);
    if (norm_ == 0) {
        throw DataError("embedding has zero norm");
    }
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) {
        throw DataError("embedding dimension mismatch: " + std::to_string(a.dim()) + " vs " +
                        std::to_string(b.dim()));
    }
    auto av = a.values();
    auto bv = b.values();
    double dot = std::inner_product(av.begin(), av.end(), bv.begin(), 0.0);
    return std::clamp(dot / (a.norm() * b.norm()), -1.0, 1.0);
}

void ExampleBank::add_example(ExamplePair pair, EmbeddingVector embedding) {
    check_example(pair);
    if (!pairs_.empty() && embedding.dim() != dim_) {
        throw DataError("embedding dimension " + std::to_string(embedding.dim()) + " does not match bank dimension " +
                        std::to_string(dim_));
    }
    for (const auto& p : pairs_) {
        if (p.question == pair.question && p.mode == pair.mode) {
            throw DataError("duplicate example (" + std::string(to_string(pair.mode)) + "): " + pair.question);
        }
    }
    dim_ = embedding.dim();
    pairs_.push_back(std::move(pair));
    embeddings_.push_back(std::move(embedding));
}

std::size_t ExampleBank::count(QueryMode mode) const noexcept {
    return static_cast<std::size_t>(
        std::count_if(pairs_.begin(), pairs_.end(), [mode](const auto& p) { return p.mode == mode; }));
}

std::vector<ScoredExample> ExampleBank::rank(const EmbeddingVector& query, QueryMode mode) const {
    std::vector<ScoredExample> scored;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
        if (pairs_[i].mode != mode) continue;
        scored.push_back({&pairs_[i], cosine_similarity(query, embeddings_[i]), i});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const ScoredExample& a, const ScoredExample& b) { return a.similarity > b.similarity; });
    return scored;
}

std::vector<ExamplePair> ExampleBank::select_examples(const EmbeddingVector& query, std::size_t k,
                                                      QueryMode mode) const {
    if (count(mode) < k) {
        throw DataError("bank holds " + std::to_string(count(mode)) + " " + std::string(to_string(mode)) +
                        " examples, " + std::to_string(k) + " requested");
    }
    auto scored = rank(query, mode);
    std::vector<ExamplePair> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(*scored[i].pair);
    return out;
}

std::vector<ExamplePair> load_example_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read example bank '" + path.string() + "'");
    }
    std::vector<ExamplePair> out;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#' || line.compare(first, 2, "//") == 0) continue;
        try {
            auto j = nlohmann::json::parse(line);
            ExamplePair pair{j.at("question").get<std::string>(), j.at("sql").get<std::string>(),
                             parse_pattern_tag(j.at("pattern_tag").get<std::string>()),
                             parse_query_mode(j.at("mode").get<std::string>())};
            check_example(pair);
            out.push_back(std::move(pair));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

std::filesystem::path embedding_cache_path(const std::filesystem::path& bank_path, const std::string& embedder_key) {
    auto p = bank_path;
    p += "." + sanitize_key(embedder_key) + ".emb.json";
    return p;
}

ExampleBank build_bank(const std::filesystem::path& bank_path, const Embedder& embed,
                       const std::string& embedder_key, bool use_cache) {
    auto pairs = load_example_file(bank_path);
    auto cache_path = embedding_cache_path(bank_path, embedder_key);

    std::map<std::string, std::vector<double>> cache;
    if (std::ifstream in(cache_path); use_cache && in) {
        try {
            auto j = nlohmann::json::parse(in);
            if (j.value("embedder", std::string{}) == embedder_key) {
                cache = j.at("vectors").get<std::map<std::string, std::vector<double>>>();
            }
        } catch (const nlohmann::json::exception&) {
            cache.clear();  // unreadable cache is rebuilt
        }
    }

    bool dirty = false;
    ExampleBank bank;
    for (auto& pair : pairs) {
        auto key = sha256_hex(pair.question);
        auto it = cache.find(key);
        if (it == cache.end()) {
            auto v = embed(pair.question);
            it = cache.emplace(key, std::vector<double>(v.values().begin(), v.values().end())).first;
            dirty = true;
        }
        bank.add_example(std::move(pair), EmbeddingVector(it->second));
    }

    if (use_cache && dirty) {
        nlohmann::json j;
        j["embedder"] = embedder_key;
        j["vectors"] = cache;
        std::ofstream out(cache_path);
        if (out) out << j.dump() << '\n';
    }
    return bank;
}

}  // namespace tabqa
