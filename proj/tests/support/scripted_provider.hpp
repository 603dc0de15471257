#pragma once

#include <atomic>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "tabqa/llm_gateway.hpp"

namespace tabqa::testing {

/// Canned replies for one question. SQL replies are chosen by template
/// (row retrieval or value targeted); answer and verifier replies by how many
/// times that question has asked so far, repeating the last entry.
/// `{table}` in SQL replies becomes the table name found in the prompt.
struct Script {
    std::string question;
    std::string sql_row_retrieval;
    std::string sql_value_targeted;
    std::vector<std::string> answers;
    std::vector<std::string> verdicts{"ACCEPT"};
};

/// Deterministic stand-in for a chat model. Prompts for unknown questions
/// get a generic `SELECT *` and the answer "unknown".
class ScriptedProvider final : public Provider {
public:
    explicit ScriptedProvider(std::vector<Script> scripts);

    ProviderResponse complete(const CompletionRequest& request) override;
    EmbeddingVector embed(std::string_view text) override;
    std::string id() const override { return "scripted"; }

    std::size_t calls(TemplateId id) const;
    std::size_t embed_calls() const noexcept { return embed_calls_.load(); }

private:
    const Script* match(std::string_view prompt) const;

    std::vector<Script> scripts_;
    PseudoEmbedder embedder_;
    mutable std::mutex mutex_;
    std::map<std::pair<std::string, TemplateId>, std::size_t> seen_;
    std::map<TemplateId, std::size_t> calls_;
    std::atomic<std::size_t> embed_calls_{0};
};

/// Table name from the first `CREATE TABLE <name>` in a prompt.
std::string table_in_prompt(std::string_view prompt);

/// The ten scripted questions that produce the bundled toy fixtures.
std::vector<Script> toy_scripts();

}  // namespace tabqa::testing
