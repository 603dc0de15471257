#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "tabqa/error.hpp"
#include "tabqa/example_bank.hpp"

namespace tabqa {

// --- prompt templates ----------------------------------------------------------

enum class TemplateId { sql_row_retrieval, sql_value_targeted, final_answer, verification };

std::string_view to_string(TemplateId id) noexcept;
TemplateId parse_template_id(std::string_view text);

inline constexpr std::array<std::string_view, 5> kPlaceholders = {"table_info", "column_headers", "question",
                                                                  "result", "examples"};

/// Thrown for malformed templates and for bindings that do not match one.
class TemplateError : public Error {
public:
    explicit TemplateError(const std::string& what) : Error(ErrorClass::config, what) {}
};

/// Prompt body with `{name}` markers. Only `{identifier}` sequences count as
/// markers; any other brace text is literal. Every marker must be one of
/// `kPlaceholders`.
class PromptTemplate {
public:
    PromptTemplate(TemplateId id, std::string body);

    TemplateId id() const noexcept { return id_; }
    const std::string& body() const noexcept { return body_; }

    /// Distinct placeholder names, in order of first appearance.
    const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }

private:
    TemplateId id_;
    std::string body_;
    std::vector<std::string> placeholders_;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

/// Single-pass substitution. Bindings must name exactly the template's
/// placeholders; binding values are inserted verbatim and never rescanned.
std::string render(const PromptTemplate& tmpl, const Bindings& bindings);

/// The `{examples}` binding: one "Question: ...\nSQL: ..." block per pair,
/// blank-line separated, in the given order.
std::string render_examples(std::span<const ExamplePair> examples);

PromptTemplate default_template(TemplateId id);

struct TemplateSet {
    std::vector<PromptTemplate> templates;

    const PromptTemplate& get(TemplateId id) const;

    static TemplateSet defaults();

    /// Reads `<template_id>.txt` from `dir`; ids with no file keep the default body.
    static TemplateSet load(const std::filesystem::path& dir);
};

// --- provider contract ---------------------------------------------------------

struct CompletionRequest {
    TemplateId template_id = TemplateId::final_answer;
    std::string prompt;
    std::string model_name;
    double temperature = 0.0;
    int max_tokens = 1024;
    int timeout_ms = 60000;
};

struct ProviderResponse {
    std::string text;  ///< verbatim, never trimmed here
    std::int64_t latency_ms = 0;
    std::string provider_id;
};

enum class ProviderErrorKind { timeout, http_status, transport, replay_miss, bad_response, prompt_too_large };

class ProviderError : public Error {
public:
    ProviderError(ProviderErrorKind kind, const std::string& what, int status = 0)
        : Error(ErrorClass::provider, what), kind_(kind), status_(status) {}

    ProviderErrorKind kind() const noexcept { return kind_; }
    int status() const noexcept { return status_; }

    /// Timeouts, transport failures, 429 and 5xx are worth another try.
    bool retryable() const noexcept {
        switch (kind_) {
        case ProviderErrorKind::timeout:
        case ProviderErrorKind::transport: return true;
        case ProviderErrorKind::http_status: return status_ == 429 || status_ >= 500;
        default: return false;
        }
    }

private:
    ProviderErrorKind kind_;
    int status_;
};

class Provider {
public:
    virtual ~Provider() = default;
    virtual ProviderResponse complete(const CompletionRequest& request) = 0;
    virtual EmbeddingVector embed(std::string_view text) = 0;
    virtual std::string id() const = 0;
};

// --- retry -------------------------------------------------------------------------

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_delay{500};
    double multiplier = 2.0;
    std::chrono::milliseconds max_delay{8000};
    /// Replaced in tests to avoid real sleeping.
    std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
        std::this_thread::sleep_for(d);
    };

    std::chrono::milliseconds delay_for(int retry) const;
};

/// Calls `fn`, retrying retryable ProviderErrors up to `policy.max_retries`
/// times with exponential backoff. The last error is rethrown.
template <class Fn>
auto with_retry(const RetryPolicy& policy, Fn&& fn) -> decltype(fn()) {
    for (int retry = 0;; ++retry) {
        try {
            return fn();
        } catch (const ProviderError& e) {
            if (!e.retryable() || retry >= policy.max_retries) throw;
            policy.sleep(policy.delay_for(retry));
        }
    }
}

// --- concrete providers ----------------------------------------------------------------

/// Deterministic offline embedder: signed feature hashing of lowercased word
/// unigrams and bigrams plus one feature for the exact input string.
class PseudoEmbedder {
public:
    explicit PseudoEmbedder(std::size_t dim = 256) : dim_(dim) {}

    EmbeddingVector embed(std::string_view text) const;
    std::size_t dim() const noexcept { return dim_; }
    std::string key() const { return "pseudo-" + std::to_string(dim_); }

private:
    std::size_t dim_;
};

struct HttpProviderConfig {
    std::string base_url;         ///< e.g. https://api.openai.com/v1
    std::string chat_model;
    std::string embedding_model;
    std::string api_key;
};

/// OpenAI-compatible chat-completions and embeddings client.
class HttpProvider final : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config);

    ProviderResponse complete(const CompletionRequest& request) override;
    EmbeddingVector embed(std::string_view text) override;
    std::string id() const override { return "http:" + config_.chat_model; }

private:
    std::string post(const std::string& path, const std::string& body, int timeout_ms);

    HttpProviderConfig config_;
    std::string origin_;       ///< scheme://host[:port]
    std::string path_prefix_;  ///< e.g. /v1
};

/// Directory of content-addressed response files, `<key>.txt`.
/// Reads may run concurrently; writes are exclusive.
class FixtureStore {
public:
    explicit FixtureStore(std::filesystem::path dir);

    /// SHA-256 of `tag`, a newline, and the prompt with CRLF/CR folded to LF.
    static std::string key(std::string_view tag, std::string_view prompt);

    std::optional<std::string> get(const std::string& key) const;
    void put(const std::string& key, const std::string& text);
    const std::filesystem::path& dir() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
};

inline constexpr std::string_view kEmbeddingFixtureTag = "embedding";

/// Serves completions (and embeddings) from a fixture store; a miss is fatal.
class ReplayProvider final : public Provider {
public:
    explicit ReplayProvider(std::shared_ptr<FixtureStore> store) : store_(std::move(store)) {}

    ProviderResponse complete(const CompletionRequest& request) override;
    EmbeddingVector embed(std::string_view text) override;
    std::string id() const override { return "replay"; }

private:
    std::shared_ptr<FixtureStore> store_;
};

/// Forwards to `inner` and stores every response in the fixture store.
class RecordingProvider final : public Provider {
public:
    RecordingProvider(std::shared_ptr<Provider> inner, std::shared_ptr<FixtureStore> store)
        : inner_(std::move(inner)), store_(std::move(store)) {}

    ProviderResponse complete(const CompletionRequest& request) override;
    EmbeddingVector embed(std::string_view text) override;
    std::string id() const override { return "record:" + inner_->id(); }

private:
    std::shared_ptr<Provider> inner_;
    std::shared_ptr<FixtureStore> store_;
};

// --- gateway ---------------------------------------------------------------------------

struct GatewayOptions {
    std::string model_name = "gpt-4o";
    /// Names the embedding cache when vectors come from the provider.
    std::string embedding_model = "text-embedding-ada-002";
    double temperature = 0.0;
    int max_tokens = 1024;
    int timeout_ms = 60000;
    std::size_t max_prompt_bytes = 32768;
    int max_in_flight = 4;
    RetryPolicy retry;
    /// When set, embeddings come from this instead of the provider.
    std::optional<PseudoEmbedder> pseudo_embedder;
};

/// What the pipeline talks to: applies request defaults, the retry policy,
/// the prompt size limit and a bound on concurrent in-flight requests.
class Gateway {
public:
    Gateway(std::shared_ptr<Provider> provider, GatewayOptions options);

    ProviderResponse complete(TemplateId id, std::string prompt);
    EmbeddingVector embed(std::string_view text);

    std::string embedder_key() const;
    const GatewayOptions& options() const noexcept { return options_; }
    std::uint64_t request_count() const noexcept { return requests_.load(); }

private:
    std::shared_ptr<Provider> provider_;
    GatewayOptions options_;
    std::counting_semaphore<> in_flight_;
    std::atomic<std::uint64_t> requests_{0};
};

}  // namespace tabqa
