#include "tabqa/llm_gateway.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include "tabqa/hash.hpp"

namespace tabqa {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string normalize_newlines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r') {
            out.push_back('\n');
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
        } else {
            out.push_back(text[i]);
        }
    }
    return out;
}

std::string excerpt(const std::string& body) {
    constexpr std::size_t kMax = 200;
    return body.size() <= kMax ? body : body.substr(0, kMax) + "...";
}

}  // namespace

// --- retry ---------------------------------------------------------------------

std::chrono::milliseconds RetryPolicy::delay_for(int retry) const {
    double ms = static_cast<double>(initial_delay.count()) * std::pow(multiplier, retry);
    ms = std::min(ms, static_cast<double>(max_delay.count()));
    return std::chrono::milliseconds(static_cast<std::int64_t>(ms));
}

// --- pseudo embedder ---------------------------------------------------------------

EmbeddingVector PseudoEmbedder::embed(std::string_view text) const {
    if (text.empty()) {
        throw DataError("cannot embed empty text");
    }
    std::vector<double> v(dim_, 0.0);
    auto add = [&](std::string_view feature, double weight) {
        auto h = fnv1a(feature);
        v[h % dim_] += (h >> 63) ? -weight : weight;
    };

    std::vector<std::string> words;
    std::string word;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            word.push_back(static_cast<char>(std::tolower(c)));
        } else if (!word.empty()) {
            words.push_back(std::move(word));
            word.clear();
        }
    }
    if (!word.empty()) words.push_back(std::move(word));

    for (std::size_t i = 0; i < words.size(); ++i) {
        add("w:" + words[i], 1.0);
        if (i + 1 < words.size()) add("b:" + words[i] + " " + words[i + 1], 0.5);
    }
    add(std::string("s:").append(text), 0.25);

    if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) v[0] = 1.0;
    return EmbeddingVector(std::move(v));
}

// --- http provider -------------------------------------------------------------------

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    const auto& url = config_.base_url;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("provider base URL must include a scheme: '" + url + "'");
    }
    auto path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpProvider::post(const std::string& path, const std::string& body, int timeout_ms) {
    httplib::Client client(origin_);
    auto timeout = std::chrono::milliseconds(timeout_ms);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_bearer_token_auth(config_.api_key);

    auto res = client.Post(path_prefix_ + path, body, "application/json");
    if (!res) {
        auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read) {
            throw ProviderError(ProviderErrorKind::timeout, "provider request timed out after " +
                                                                std::to_string(timeout_ms) + " ms (" +
                                                                httplib::to_string(err) + ")");
        }
        throw ProviderError(ProviderErrorKind::transport, "provider request failed: " + httplib::to_string(err));
    }
    if (res->status < 200 || res->status >= 300) {
        throw ProviderError(ProviderErrorKind::http_status,
                            "provider returned HTTP " + std::to_string(res->status) + ": " + excerpt(res->body),
                            res->status);
    }
    return res->body;
}

ProviderResponse HttpProvider::complete(const CompletionRequest& request) {
    nlohmann::json body = {
        {"model", request.model_name.empty() ? config_.chat_model : request.model_name},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    auto start = std::chrono::steady_clock::now();
    auto raw = post("/chat/completions", body.dump(), request.timeout_ms);
    auto elapsed = std::chrono::steady_clock::now() - start;
    try {
        auto j = nlohmann::json::parse(raw);
        auto text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        return ProviderResponse{std::move(text),
                                std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count(), id()};
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(ProviderErrorKind::bad_response,
                            std::string("unexpected chat completion payload: ") + e.what());
    }
}

EmbeddingVector HttpProvider::embed(std::string_view text) {
    if (text.empty()) {
        throw DataError("cannot embed empty text");
    }
    nlohmann::json body = {{"model", config_.embedding_model}, {"input", std::string(text)}};
    auto raw = post("/embeddings", body.dump(), 60000);
    try {
        auto j = nlohmann::json::parse(raw);
        return EmbeddingVector(j.at("data").at(0).at("embedding").get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(ProviderErrorKind::bad_response, std::string("unexpected embedding payload: ") + e.what());
    }
}

// --- fixtures ---------------------------------------------------------------------

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string FixtureStore::key(std::string_view tag, std::string_view prompt) {
    Sha256 sha;
    sha.update(tag).update("\n").update(normalize_newlines(prompt));
    return sha.hex_digest();
}

std::optional<std::string> FixtureStore::get(const std::string& key) const {
    std::shared_lock lock(mutex_);
    std::ifstream in(dir_ / (key + ".txt"), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void FixtureStore::put(const std::string& key, const std::string& text) {
    std::unique_lock lock(mutex_);
    std::filesystem::create_directories(dir_);
    auto path = dir_ / (key + ".txt");
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        out << text;
        if (!out) throw DataError("cannot write fixture '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

ProviderResponse ReplayProvider::complete(const CompletionRequest& request) {
    auto tag = to_string(request.template_id);
    auto key = FixtureStore::key(tag, request.prompt);
    auto text = store_->get(key);
    if (!text) {
        throw ProviderError(ProviderErrorKind::replay_miss,
                            "replay miss for template " + std::string(tag) + " (prompt hash " + key + ")");
    }
    return ProviderResponse{std::move(*text), 0, id()};
}

EmbeddingVector ReplayProvider::embed(std::string_view text) {
    if (text.empty()) {
        throw DataError("cannot embed empty text");
    }
    auto key = FixtureStore::key(kEmbeddingFixtureTag, text);
    auto stored = store_->get(key);
    if (!stored) {
        throw ProviderError(ProviderErrorKind::replay_miss, "replay miss for embedding (prompt hash " + key + ")");
    }
    try {
        return EmbeddingVector(nlohmann::json::parse(*stored).get<std::vector<double>>());
    } catch (const nlohmann::json::exception& e) {
        throw ProviderError(ProviderErrorKind::bad_response, "corrupt embedding fixture " + key + ": " + e.what());
    }
}

ProviderResponse RecordingProvider::complete(const CompletionRequest& request) {
    auto response = inner_->complete(request);
    store_->put(FixtureStore::key(to_string(request.template_id), request.prompt), response.text);
    return response;
}

EmbeddingVector RecordingProvider::embed(std::string_view text) {
    auto v = inner_->embed(text);
    nlohmann::json j = std::vector<double>(v.values().begin(), v.values().end());
    store_->put(FixtureStore::key(kEmbeddingFixtureTag, text), j.dump());
    return v;
}

// --- gateway --------------------------------------------------------------------------

Gateway::Gateway(std::shared_ptr<Provider> provider, GatewayOptions options)
    : provider_(std::move(provider)), options_(std::move(options)), in_flight_(std::max(1, options_.max_in_flight)) {
    if (!provider_) {
        throw ConfigError("gateway requires a provider");
    }
}

ProviderResponse Gateway::complete(TemplateId id, std::string prompt) {
    if (prompt.empty()) {
        throw ProviderError(ProviderErrorKind::bad_response, "refusing to send an empty prompt");
    }
    if (prompt.size() > options_.max_prompt_bytes) {
        throw ProviderError(ProviderErrorKind::prompt_too_large,
                            std::string(to_string(id)) + " prompt is " + std::to_string(prompt.size()) +
                                " bytes, limit is " + std::to_string(options_.max_prompt_bytes));
    }
    CompletionRequest request{id, std::move(prompt), options_.model_name, options_.temperature, options_.max_tokens,
                              options_.timeout_ms};
    return with_retry(options_.retry, [&] {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{in_flight_};
        ++requests_;
        return provider_->complete(request);
    });
}

EmbeddingVector Gateway::embed(std::string_view text) {
    if (text.empty()) {
        throw DataError("cannot embed empty text");
    }
    if (options_.pseudo_embedder) return options_.pseudo_embedder->embed(text);
    return with_retry(options_.retry, [&] {
        in_flight_.acquire();
        struct Release {
            std::counting_semaphore<>& s;
            ~Release() { s.release(); }
        } release{in_flight_};
        ++requests_;
        return provider_->embed(text);
    });
}

std::string Gateway::embedder_key() const {
    return options_.pseudo_embedder ? options_.pseudo_embedder->key() : options_.embedding_model;
}

}  // namespace tabqa
