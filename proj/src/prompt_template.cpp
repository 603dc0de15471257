#include "tabqa/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace tabqa {

namespace {

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

/// Length of a `{identifier}` marker starting at `pos`, or 0.
std::size_t marker_length(std::string_view body, std::size_t pos) {
    if (body[pos] != '{' || pos + 1 >= body.size() || !is_ident_start(body[pos + 1])) return 0;
    std::size_t i = pos + 2;
    while (i < body.size() && is_ident_char(body[i])) ++i;
    if (i < body.size() && body[i] == '}') return i - pos + 1;
    return 0;
}

bool is_known_placeholder(std::string_view name) {
    for (auto p : kPlaceholders) {
        if (p == name) return true;
    }
    return false;
}

std::string default_body(TemplateId id) {
    switch (id) {
    case TemplateId::sql_row_retrieval:
        return R"tmpl(You are a PostgreSQL expert. Given an input question, create a syntactically correct PostgreSQL query to run. Unless otherwise specified.

Here is the relevant table info: {table_info}

Most columns have intuitive names.
Return the entire row(s) that contain the final answer in context of the original question based strictly on the SQL table you are given (always use SELECT (*)). Every question will be answered only from the table provided, no other source of data.

Below are a number of examples of questions and their corresponding PostgreSQL queries.

{examples}

Question: {question}
SQL:)tmpl";
    case TemplateId::sql_value_targeted:
        return R"tmpl(You are a PostgreSQL expert. Given an input question, create a syntactically correct PostgreSQL query to run. Unless otherwise specified.

Here is the relevant table info: {table_info}

Most columns have intuitive names.
Return only the specific value(s) that answer the question based strictly on the SQL table you are given: select the exact column(s) or the aggregate (COUNT, SUM, AVG, MIN, MAX) that holds the answer, never SELECT (*). Every question will be answered only from the table provided, no other source of data.

Below are a number of examples of questions and their corresponding PostgreSQL queries.

{examples}

Question: {question}
SQL:)tmpl";
    case TemplateId::final_answer:
        return R"tmpl(Given the following user question and row(s) containing the answer, infer and answer the user question in exactly the format expected. You are also given columns headers for the table from which the row is extracted for context.
Answer only the user question directly with the information from the SQL rows given to you. Answers should strictly contain only the value expected, NOTHING ELSE. Ensure you respond only with values directly from the rows, do not write full sentences. 
The following answer formats are expected based on the question asked:
Boolean: Valid answers include True/False. If a question expects a yes/no answer, respond strictly only with True or False.
Category: A value from a cell (or a substring of a cell) in the dataset.
Number: A numerical value from a cell in the dataset, which may represent a computed statistic (e.g., average, maximum, minimum).
List: A list containing a fixed number of categories or numbers. The expected format is: "['cat', 'dog']". 
Columns available in the dataset: {column_headers}
Question: {question}
SQL Result: {result}
Answer:)tmpl";
    case TemplateId::verification:
        return R"tmpl(You are reviewing a candidate answer to a question about a data table. Do not check whether the answer is factually correct. Judge only two things.
1. Format validity: the answer must be a bare value in one of these formats: Boolean (True or False), Number, Category (a value from a table cell), or List (formatted like ['cat', 'dog']).
2. Relevance: the answer must address the question that was asked.
Reject only when there is a clear and significant violation: the format is wrong, or the answer is entirely unrelated to the question. Borderline or uncertain cases must be accepted.
Columns available in the dataset: {column_headers}
Question: {question}
Candidate answer: {result}
Respond with exactly one line: ACCEPT, or REJECT: <short reason>.)tmpl";
    }
    return {};
}

}  // namespace

std::string_view to_string(TemplateId id) noexcept {
    switch (id) {
    case TemplateId::sql_row_retrieval: return "sql_row_retrieval";
    case TemplateId::sql_value_targeted: return "sql_value_targeted";
    case TemplateId::final_answer: return "final_answer";
    case TemplateId::verification: return "verification";
    }
    return "final_answer";
}

TemplateId parse_template_id(std::string_view text) {
    for (auto id : {TemplateId::sql_row_retrieval, TemplateId::sql_value_targeted, TemplateId::final_answer,
                    TemplateId::verification}) {
        if (to_string(id) == text) return id;
    }
    throw TemplateError("unknown template id '" + std::string(text) + "'");
}

PromptTemplate::PromptTemplate(TemplateId id, std::string body) : id_(id), body_(std::move(body)) {
    std::set<std::string, std::less<>> seen;
    for (std::size_t i = 0; i < body_.size(); ++i) {
        auto len = marker_length(body_, i);
        if (len == 0) continue;
        auto name = body_.substr(i + 1, len - 2);
        if (!is_known_placeholder(name)) {
            throw TemplateError("template " + std::string(to_string(id_)) + " uses unknown placeholder {" + name +
                                "}");
        }
        if (seen.insert(name).second) placeholders_.push_back(name);
        i += len - 1;
    }
}

std::string render(const PromptTemplate& tmpl, const Bindings& bindings) {
    std::vector<std::string> missing;
    for (const auto& p : tmpl.placeholders()) {
        if (!bindings.contains(p)) missing.push_back(p);
    }
    std::vector<std::string> unknown;
    for (const auto& [key, value] : bindings) {
        if (std::find(tmpl.placeholders().begin(), tmpl.placeholders().end(), key) == tmpl.placeholders().end()) {
            unknown.push_back(key);
        }
    }
    if (!missing.empty() || !unknown.empty()) {
        std::ostringstream msg;
        msg << "cannot render " << to_string(tmpl.id()) << ":";
        if (!missing.empty()) {
            msg << " missing binding(s)";
            for (const auto& m : missing) msg << " {" << m << "}";
        }
        if (!unknown.empty()) {
            msg << (missing.empty() ? "" : ";") << " unknown binding(s)";
            for (const auto& u : unknown) msg << " {" << u << "}";
        }
        throw TemplateError(msg.str());
    }

    const auto& body = tmpl.body();
    std::string out;
    out.reserve(body.size() + 256);
    for (std::size_t i = 0; i < body.size();) {
        if (auto len = marker_length(body, i); len != 0) {
            out += bindings.find(std::string_view(body).substr(i + 1, len - 2))->second;
            i += len;
        } else {
            out.push_back(body[i++]);
        }
    }
    return out;
}

std::string render_examples(std::span<const ExamplePair> examples) {
    std::string out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (i) out += "\n\n";
        out += "Question: " + examples[i].question + "\nSQL: " + examples[i].sql;
    }
    return out;
}

PromptTemplate default_template(TemplateId id) {
    return PromptTemplate(id, default_body(id));
}

const PromptTemplate& TemplateSet::get(TemplateId id) const {
    for (const auto& t : templates) {
        if (t.id() == id) return t;
    }
    throw TemplateError("no template loaded for " + std::string(to_string(id)));
}

TemplateSet TemplateSet::defaults() {
    TemplateSet set;
    for (auto id : {TemplateId::sql_row_retrieval, TemplateId::sql_value_targeted, TemplateId::final_answer,
                    TemplateId::verification}) {
        set.templates.push_back(default_template(id));
    }
    return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw ConfigError("template directory '" + dir.string() + "' does not exist");
    }
    TemplateSet set;
    for (auto id : {TemplateId::sql_row_retrieval, TemplateId::sql_value_targeted, TemplateId::final_answer,
                    TemplateId::verification}) {
        auto path = dir / (std::string(to_string(id)) + ".txt");
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            set.templates.push_back(default_template(id));
            continue;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        auto body = buf.str();
        // Editors add a final newline; it is not part of the prompt.
        if (body.ends_with("\r\n")) {
            body.resize(body.size() - 2);
        } else if (body.ends_with('\n')) {
            body.pop_back();
        }
        set.templates.emplace_back(id, std::move(body));
    }
    return set;
}

}  // namespace tabqa
