#include "scripted_provider.hpp"

namespace tabqa::testing {

namespace {

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
    for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
        text.replace(pos, from.size(), to);
    }
    return text;
}

}  // namespace

ScriptedProvider::ScriptedProvider(std::vector<Script> scripts) : scripts_(std::move(scripts)) {}

std::string table_in_prompt(std::string_view prompt) {
    constexpr std::string_view marker = "CREATE TABLE ";
    auto pos = prompt.find(marker);
    if (pos == std::string_view::npos) return "t";
    pos += marker.size();
    auto end = prompt.find_first_of(" (\n", pos);
    return std::string(prompt.substr(pos, end - pos));
}

const Script* ScriptedProvider::match(std::string_view prompt) const {
    const Script* best = nullptr;
    for (const auto& s : scripts_) {
        auto needle = "Question: " + s.question + "\n";
        if (prompt.find(needle) != std::string_view::npos &&
            (best == nullptr || s.question.size() > best->question.size())) {
            best = &s;
        }
    }
    return best;
}

ProviderResponse ScriptedProvider::complete(const CompletionRequest& request) {
    const Script* script = match(request.prompt);
    std::size_t n = 0;
    {
        std::lock_guard lock(mutex_);
        ++calls_[request.template_id];
        if (script) n = seen_[{script->question, request.template_id}]++;
    }
    auto pick = [n](const std::vector<std::string>& replies, const std::string& fallback) {
        if (replies.empty()) return fallback;
        return replies[std::min(n, replies.size() - 1)];
    };

    std::string text;
    switch (request.template_id) {
    case TemplateId::sql_row_retrieval:
        text = script ? script->sql_row_retrieval : "SELECT * FROM {table} LIMIT 5;";
        text = replace_all(text, "{table}", table_in_prompt(request.prompt));
        break;
    case TemplateId::sql_value_targeted:
        text = script ? script->sql_value_targeted : "SELECT COUNT(*) FROM {table};";
        text = replace_all(text, "{table}", table_in_prompt(request.prompt));
        break;
    case TemplateId::final_answer: text = script ? pick(script->answers, "unknown") : "unknown"; break;
    case TemplateId::verification: text = script ? pick(script->verdicts, "ACCEPT") : "ACCEPT"; break;
    }
    return ProviderResponse{text, 0, id()};
}

EmbeddingVector ScriptedProvider::embed(std::string_view text) {
    ++embed_calls_;
    return embedder_.embed(text);
}

std::size_t ScriptedProvider::calls(TemplateId id) const {
    std::lock_guard lock(mutex_);
    auto it = calls_.find(id);
    return it == calls_.end() ? 0 : it->second;
}

std::vector<Script> toy_scripts() {
    std::vector<Script> s;
    s.push_back({"Is there any employee older than 60?",
                 "```sql\nSELECT * FROM {table} WHERE \"age\" > 60;\n```",
                 "SELECT COUNT(*) > 0 FROM {table} WHERE \"age\" > 60;",
                 {"True"}});
    s.push_back({"How many employees work in the Engineering department?",
                 "SELECT * FROM {table} WHERE \"department\" = 'Engineering';",
                 "SELECT COUNT(*) FROM {table} WHERE \"department\" = 'Engineering';",
                 {"8"}});
    s.push_back({"Which city does the highest-paid employee live in?",
                 "```sql\nSELECT * FROM {table} ORDER BY \"salary\" DESC LIMIT 1;\n```",
                 "SELECT \"city\" FROM {table} ORDER BY \"salary\" DESC LIMIT 1;",
                 {"Austin"}});
    s.push_back({"Who are the three employees with the highest performance rating?",
                 "SELECT * FROM {table} ORDER BY \"performance_rating\" DESC LIMIT 3;",
                 "SELECT \"full_name\" FROM {table} ORDER BY \"performance_rating\" DESC LIMIT 3;",
                 {"['Valeria Costa', 'Carlos Mendes', 'Hugo Laurent']"}});
    s.push_back({"What are the ages of the five youngest employees?",
                 "SELECT * FROM {table} ORDER BY \"age\" ASC LIMIT 5;",
                 "SELECT \"age\" FROM {table} ORDER BY \"age\" ASC LIMIT 5;",
                 {"[23, 24, 26, 27, 27]"}});
    s.push_back({"What is the average salary of the managers?",
                 "SELECT * FROM {table} WHERE \"is_manager\" = 1;",
                 "SELECT AVG(\"salary\") FROM {table} WHERE \"is_manager\" = 1;",
                 {"88333.39"}});
    s.push_back({"In which department does Maya Patel work?",
                 "SELECT * FROM {table} WHERE \"full_name\" = 'Maya Patel';",
                 "SELECT \"department\" FROM {table} WHERE \"full_name\" = 'Maya Patel';",
                 {"Engineering"}});
    // First attempt names a column that does not exist.
    s.push_back({"How many employees were hired before 2015?",
                 "SELECT * FROM {table} WHERE \"hire_year\" < 2015;",
                 "SELECT COUNT(*) FROM {table} WHERE \"hire_date\" < '2015-01-01';",
                 {"11"}});
    // First answer is off topic and gets rejected.
    s.push_back({"Which departments have more than five employees?",
                 "SELECT * FROM {table} WHERE \"department\" IN (SELECT \"department\" FROM {table} GROUP BY "
                 "\"department\" HAVING COUNT(*) > 5);",
                 "SELECT \"department\" FROM {table} GROUP BY \"department\" HAVING COUNT(*) > 5 ORDER BY "
                 "\"department\";",
                 {"['Austin', 'Seattle']", "['Engineering', 'Sales']"},
                 {"REJECT: the answer lists cities, the question asks for departments", "ACCEPT"}});
    // Rejected first, then an answer that does not parse.
    s.push_back({"Does any remote Finance employee earn more than 90000?",
                 "SELECT * FROM {table} WHERE \"department\" = 'Finance' AND \"remote\" = 1;",
                 "SELECT COUNT(*) > 0 FROM {table} WHERE \"department\" = 'Finance' AND \"remote\" = 1 AND "
                 "\"salary\" > 90000;",
                 {"False", "It depends on how bonuses are counted."},
                 {"REJECT: the answer ignores the salary condition in the question", "ACCEPT"}});
    return s;
}

}  // namespace tabqa::testing
