#include "tabqa/sql_engine.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <chrono>
#include <optional>

#include "sqlite_util.hpp"

namespace tabqa {

namespace {

// --- lexer -----------------------------------------------------------------------

enum class TokKind { word, string, quoted_ident, punct };

struct Token {
    TokKind kind;
    std::string text;  ///< upper-cased for words, raw otherwise
    std::size_t pos;
};

bool word_char(char c) {
    auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_' || c == '$' || u >= 0x80;
}

std::string upper(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

/// Tokenizes SQL. Comments vanish; string literals and quoted identifiers
/// become single opaque tokens so their contents never reach the keyword scan.
std::vector<Token> tokenize(std::string_view sql) {
    std::vector<Token> out;
    std::size_t i = 0;
    const std::size_t n = sql.size();
    auto closing = [&](char open) {
        switch (open) {
        case '[': return ']';
        default: return open;
        }
    };
    while (i < n) {
        char c = sql[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
        } else if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
            while (i < n && sql[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
            auto end = sql.find("*/", i + 2);
            if (end == std::string_view::npos) throw SqlError(SqlErrorKind::malformed, "unterminated block comment");
            i = end + 2;
        } else if (c == '\'' || c == '"' || c == '`' || c == '[') {
            const char close = closing(c);
            std::size_t start = i++;
            bool closed = false;
            while (i < n) {
                if (sql[i] == close) {
                    if (close != ']' && i + 1 < n && sql[i + 1] == close) {
                        i += 2;
                        continue;
                    }
                    ++i;
                    closed = true;
                    break;
                }
                ++i;
            }
            if (!closed) {
                throw SqlError(SqlErrorKind::malformed,
                               c == '\'' ? "unterminated string literal" : "unterminated quoted identifier");
            }
            out.push_back({c == '\'' ? TokKind::string : TokKind::quoted_ident,
                           std::string(sql.substr(start, i - start)), start});
        } else if (word_char(c)) {
            std::size_t start = i;
            while (i < n && word_char(sql[i])) ++i;
            // keep decimals like 1.5 in one token
            if (std::isdigit(static_cast<unsigned char>(sql[start])) && i < n && sql[i] == '.') {
                ++i;
                while (i < n && word_char(sql[i])) ++i;
            }
            out.push_back({TokKind::word, upper(sql.substr(start, i - start)), start});
        } else {
            out.push_back({TokKind::punct, std::string(1, c), i});
            ++i;
        }
    }
    return out;
}

constexpr std::array<std::string_view, 31> kForbidden = {
    "INSERT",  "UPDATE", "DELETE",   "DROP",     "ALTER",   "CREATE",      "ATTACH", "DETACH",
    "PRAGMA",  "VACUUM", "REINDEX",  "ANALYZE",  "TRUNCATE", "GRANT",      "REVOKE", "BEGIN",
    "COMMIT",  "ROLLBACK", "SAVEPOINT", "RELEASE", "INTO",   "MERGE",      "UPSERT", "COPY",
    "CALL",    "EXEC",   "EXECUTE",  "LOAD_EXTENSION", "TRANSACTION", "RENAME", "REPLACE",
};

bool is_forbidden(const std::vector<Token>& toks, std::size_t i) {
    const auto& t = toks[i];
    if (t.kind != TokKind::word) return false;
    if (std::find(kForbidden.begin(), kForbidden.end(), t.text) == kForbidden.end()) return false;
    // replace(x, y, z) is a scalar function; REPLACE INTO is a write.
    if (t.text == "REPLACE" && i + 1 < toks.size() && toks[i + 1].text == "(") return false;
    return true;
}

bool is_word(const Token& t, std::string_view w) { return t.kind == TokKind::word && t.text == w; }

/// Indices of every SELECT keyword at parenthesis depth zero.
std::vector<std::size_t> top_level_selects(const std::vector<Token>& toks) {
    std::vector<std::size_t> out;
    int depth = 0;
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].text == "(") ++depth;
        else if (toks[i].text == ")") --depth;
        else if (depth == 0 && is_word(toks[i], "SELECT")) out.push_back(i);
    }
    return out;
}

/// Tokens between SELECT (after DISTINCT/ALL) and the matching top-level FROM
/// (or the end of that SELECT core).
std::pair<std::size_t, std::size_t> projection_range(const std::vector<Token>& toks, std::size_t select) {
    std::size_t begin = select + 1;
    if (begin < toks.size() && (is_word(toks[begin], "DISTINCT") || is_word(toks[begin], "ALL"))) ++begin;
    int depth = 0;
    std::size_t end = begin;
    for (; end < toks.size(); ++end) {
        const auto& t = toks[end];
        if (t.text == "(") ++depth;
        else if (t.text == ")") {
            if (depth == 0) break;
            --depth;
        } else if (depth == 0 && (is_word(t, "FROM") || is_word(t, "WHERE") || is_word(t, "UNION") ||
                                  is_word(t, "EXCEPT") || is_word(t, "INTERSECT") || is_word(t, "ORDER") ||
                                  is_word(t, "LIMIT") || is_word(t, "GROUP") || t.text == ";")) {
            break;
        }
    }
    return {begin, end};
}

bool is_star_projection(const std::vector<Token>& toks, std::size_t begin, std::size_t end) {
    if (end - begin == 1) return toks[begin].text == "*";
    if (end - begin == 3) {
        return (toks[begin].kind == TokKind::word || toks[begin].kind == TokKind::quoted_ident) &&
               toks[begin + 1].text == "." && toks[begin + 2].text == "*";
    }
    return false;
}

std::string unquote_identifier(const Token& t) {
    if (t.kind != TokKind::quoted_ident) return t.text;
    std::string inner = t.text.substr(1, t.text.size() - 2);
    const char q = t.text.front();
    if (q == '[') return inner;
    std::string out;
    for (std::size_t i = 0; i < inner.size(); ++i) {
        out.push_back(inner[i]);
        if (inner[i] == q && i + 1 < inner.size() && inner[i + 1] == q) ++i;
    }
    return out;
}

std::string trim_copy(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

bool ieq_word_at(std::string_view s, std::size_t pos, std::string_view word) {
    if (pos + word.size() > s.size()) return false;
    for (std::size_t k = 0; k < word.size(); ++k) {
        if (std::toupper(static_cast<unsigned char>(s[pos + k])) != word[k]) return false;
    }
    bool left_ok = pos == 0 || !word_char(s[pos - 1]);
    bool right_ok = pos + word.size() == s.size() || !word_char(s[pos + word.size()]);
    return left_ok && right_ok;
}

/// True when text at `pos` reads `WITH [RECURSIVE] name [(...)] AS (`.
bool looks_like_cte(std::string_view s, std::size_t pos) {
    std::string_view rest = s.substr(pos + 4);
    std::vector<Token> toks;
    try {
        toks = tokenize(rest.substr(0, std::min<std::size_t>(rest.size(), 400)));
    } catch (const SqlError&) {
        return false;
    }
    std::size_t i = 0;
    if (i < toks.size() && is_word(toks[i], "RECURSIVE")) ++i;
    if (i >= toks.size() || (toks[i].kind != TokKind::word && toks[i].kind != TokKind::quoted_ident)) return false;
    ++i;
    if (i < toks.size() && toks[i].text == "(") {
        while (i < toks.size() && toks[i].text != ")") ++i;
        ++i;
    }
    return i + 1 < toks.size() && is_word(toks[i], "AS") && toks[i + 1].text == "(";
}

std::string escape_cell(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '\\': out += "\\\\"; break;
        case '\t': out += "\\t"; break;
        case '\n': out += "\\n"; break;
        case '\r': out += "\\r"; break;
        default: out.push_back(c);
        }
    }
    return out;
}

std::string unescape_cell(std::string_view s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '\\' && i + 1 < s.size()) {
            switch (s[++i]) {
            case 't': out.push_back('\t'); break;
            case 'n': out.push_back('\n'); break;
            case 'r': out.push_back('\r'); break;
            default: out.push_back(s[i]);
            }
        } else {
            out.push_back(s[i]);
        }
    }
    return out;
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        auto p = s.find(sep, start);
        out.emplace_back(s.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start));
        if (p == std::string_view::npos) break;
        start = p + 1;
    }
    return out;
}

struct Deadline {
    std::chrono::steady_clock::time_point at;
    bool expired = false;
};

int progress_check(void* user) {
    auto* d = static_cast<Deadline*>(user);
    if (std::chrono::steady_clock::now() > d->at) {
        d->expired = true;
        return 1;
    }
    return 0;
}

}  // namespace

std::string_view to_string(SqlErrorKind kind) noexcept {
    switch (kind) {
    case SqlErrorKind::no_statement: return "no_statement";
    case SqlErrorKind::empty: return "empty";
    case SqlErrorKind::malformed: return "malformed";
    case SqlErrorKind::not_select: return "not_select";
    case SqlErrorKind::multi_statement: return "multi_statement";
    case SqlErrorKind::forbidden_keyword: return "forbidden_keyword";
    case SqlErrorKind::projection: return "projection";
    case SqlErrorKind::engine: return "engine";
    case SqlErrorKind::unknown_identifier: return "unknown_identifier";
    case SqlErrorKind::timeout: return "timeout";
    }
    return "engine";
}

std::string extract_sql(std::string_view raw) {
    std::string_view body = raw;
    bool fenced = false;
    if (auto fence = raw.find("```"); fence != std::string_view::npos) {
        auto content_start = raw.find('\n', fence);
        if (content_start != std::string_view::npos) {
            ++content_start;
            auto close = raw.find("```", content_start);
            body = raw.substr(content_start,
                              close == std::string_view::npos ? std::string_view::npos : close - content_start);
            fenced = true;
        }
    }

    std::optional<std::size_t> start;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (ieq_word_at(body, i, "SELECT") || (ieq_word_at(body, i, "WITH") && looks_like_cte(body, i))) {
            start = i;
            break;
        }
    }
    if (!start) {
        throw SqlError(SqlErrorKind::no_statement, "no statement: provider text contains no SELECT query");
    }

    // Walk forward to the first top-level semicolon, or a blank line outside a fence.
    std::size_t i = *start;
    const std::size_t n = body.size();
    std::size_t end = n;
    while (i < n) {
        char c = body[i];
        if (c == '\'' || c == '"' || c == '`') {
            auto close = body.find(c, i + 1);
            while (close != std::string_view::npos && close + 1 < n && body[close + 1] == c) {
                close = body.find(c, close + 2);
            }
            if (close == std::string_view::npos) break;
            i = close + 1;
        } else if (c == '-' && i + 1 < n && body[i + 1] == '-') {
            while (i < n && body[i] != '\n') ++i;
        } else if (c == '/' && i + 1 < n && body[i + 1] == '*') {
            auto close = body.find("*/", i + 2);
            if (close == std::string_view::npos) break;
            i = close + 2;
        } else if (c == ';') {
            end = i + 1;
            break;
        } else if (!fenced && c == '\n') {
            std::size_t j = i + 1;
            while (j < n && (body[j] == ' ' || body[j] == '\t' || body[j] == '\r')) ++j;
            if (j < n && body[j] == '\n') {
                end = i;
                break;
            }
            ++i;
        } else {
            ++i;
        }
    }
    auto sql = trim_copy(body.substr(*start, end - *start));
    if (sql.empty()) {
        throw SqlError(SqlErrorKind::no_statement, "no statement: provider text contains no SELECT query");
    }
    return sql;
}

SqlQuery validate_query(std::string_view text, QueryMode mode) {
    auto trimmed = trim_copy(text);
    if (trimmed.empty()) {
        throw SqlError(SqlErrorKind::empty, "empty statement");
    }
    auto toks = tokenize(trimmed);
    if (toks.empty()) {
        throw SqlError(SqlErrorKind::empty, "statement contains only comments");
    }

    if (!is_word(toks.front(), "SELECT") && !is_word(toks.front(), "WITH")) {
        throw SqlError(SqlErrorKind::not_select,
                       "statement class forbidden: only SELECT queries are allowed, got " + toks.front().text);
    }

    // One optional trailing semicolon; any other ends a statement early.
    std::size_t stop = toks.size();
    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (toks[i].text != ";" || toks[i].kind != TokKind::punct) continue;
        if (i + 1 != toks.size()) {
            throw SqlError(SqlErrorKind::multi_statement, "multiple statements are not allowed");
        }
        stop = i;
    }
    std::string body = trim_copy(std::string_view(trimmed).substr(0, stop == toks.size() ? trimmed.size()
                                                                                        : toks[stop].pos));
    toks.resize(stop);

    for (std::size_t i = 0; i < toks.size(); ++i) {
        if (is_forbidden(toks, i)) {
            throw SqlError(SqlErrorKind::forbidden_keyword, "forbidden keyword " + toks[i].text);
        }
    }

    auto selects = top_level_selects(toks);
    if (selects.empty()) {
        throw SqlError(SqlErrorKind::not_select, "statement class forbidden: no top-level SELECT");
    }
    if (mode == QueryMode::row_retrieval) {
        for (auto s : selects) {
            auto [b, e] = projection_range(toks, s);
            if (!is_star_projection(toks, b, e)) {
                throw SqlError(SqlErrorKind::projection,
                               "projection must be * in row retrieval mode (always use SELECT (*))");
            }
        }
    }

    SqlQuery q{std::move(body), mode, {}};
    auto [b, e] = projection_range(toks, selects.front());
    if (e < toks.size() && is_word(toks[e], "FROM") && e + 1 < toks.size()) {
        const auto& t = toks[e + 1];
        if (t.kind == TokKind::word || t.kind == TokKind::quoted_ident) {
            q.target_table = t.kind == TokKind::word ? std::string(q.text.substr(t.pos, t.text.size()))
                                                     : unquote_identifier(t);
        }
    }
    return q;
}

QueryResult execute(const SqlQuery& query, const DatasetStore& store, const DatasetHandle& handle,
                    ExecuteOptions options) {
    if (options.row_cap < 0) {
        throw SqlError(SqlErrorKind::engine, "row cap must be non-negative");
    }
    auto current = store.get(handle.dataset_id);
    auto db = store.open_reader(current.table_name);

    Deadline deadline{std::chrono::steady_clock::now() + std::chrono::milliseconds(options.timeout_ms)};
    sqlite3_progress_handler(db.get(), 1000, progress_check, &deadline);

    auto classify = [&](int rc) -> SqlError {
        if (deadline.expired || rc == SQLITE_INTERRUPT) {
            return SqlError(SqlErrorKind::timeout,
                            "query exceeded " + std::to_string(options.timeout_ms) + " ms and was aborted");
        }
        std::string msg = detail::errmsg(db.get());
        if (msg.starts_with("no such column") || msg.starts_with("no such table")) {
            return SqlError(SqlErrorKind::unknown_identifier, "engine error: " + msg);
        }
        return SqlError(SqlErrorKind::engine, "engine error: " + msg);
    };

    sqlite3_stmt* raw = nullptr;
    const char* tail = nullptr;
    int rc = sqlite3_prepare_v2(db.get(), query.text.c_str(), static_cast<int>(query.text.size()), &raw, &tail);
    detail::StmtPtr stmt(raw);
    if (rc != SQLITE_OK) throw classify(rc);
    if (!stmt) throw SqlError(SqlErrorKind::empty, "empty statement");
    if (tail && !trim_copy(tail).empty() && trim_copy(tail) != ";") {
        throw SqlError(SqlErrorKind::multi_statement, "multiple statements are not allowed");
    }
    if (!sqlite3_stmt_readonly(stmt.get())) {
        throw SqlError(SqlErrorKind::not_select, "statement class forbidden: statement writes to the database");
    }

    QueryResult result;
    const int ncol = sqlite3_column_count(stmt.get());
    for (int i = 0; i < ncol; ++i) result.headers.emplace_back(sqlite3_column_name(stmt.get(), i));

    while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
        if (result.total_rows < options.row_cap) {
            Row row;
            row.reserve(static_cast<std::size_t>(ncol));
            for (int i = 0; i < ncol; ++i) row.push_back(detail::column_cell(stmt.get(), i));
            result.rows.push_back(std::move(row));
        }
        ++result.total_rows;
    }
    if (rc != SQLITE_DONE) throw classify(rc);
    result.truncated = result.total_rows > static_cast<std::int64_t>(result.rows.size());
    return result;
}

std::string serialize_result(const QueryResult& result, std::size_t max_bytes) {
    std::string header;
    for (std::size_t i = 0; i < result.headers.size(); ++i) {
        if (i) header.push_back('\t');
        header += escape_cell(result.headers[i]);
    }
    if (result.rows.empty() && !result.truncated) {
        return header + "\n[0 rows]";
    }

    std::vector<std::string> lines;
    lines.reserve(result.rows.size());
    std::size_t full = header.size();
    for (const auto& row : result.rows) {
        std::string line;
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) line.push_back('\t');
            line += row[i] ? escape_cell(*row[i]) : std::string("NULL");
        }
        full += 1 + line.size();
        lines.push_back(std::move(line));
    }

    const auto total = std::max<std::int64_t>(result.total_rows, static_cast<std::int64_t>(lines.size()));
    auto marker = [&](std::size_t shown) {
        return "[truncated: " + std::to_string(shown) + " of " + std::to_string(total) + " rows shown]";
    };

    std::string out = header;
    if (!result.truncated && full <= max_bytes) {
        for (const auto& l : lines) out += "\n" + l;
        return out;
    }

    std::size_t used = header.size();
    std::size_t shown = 0;
    for (const auto& l : lines) {
        std::size_t next = used + 1 + l.size();
        if (next + 1 + marker(shown + 1).size() > max_bytes) break;
        used = next;
        ++shown;
    }
    for (std::size_t i = 0; i < shown; ++i) out += "\n" + lines[i];
    out += "\n" + marker(shown);
    return out;
}

ParsedResultText parse_result_text(std::string_view text) {
    auto lines = split(text, '\n');
    ParsedResultText parsed;
    for (auto& h : split(lines.front(), '\t')) parsed.headers.push_back(unescape_cell(h));
    if (parsed.headers.size() == 1 && parsed.headers.front().empty()) parsed.headers.clear();
    std::size_t end = lines.size();
    const auto& last = lines.back();
    if (lines.size() > 1 && last == "[0 rows]") {
        end -= 1;
    } else if (lines.size() > 1 && last.starts_with("[truncated: ")) {
        parsed.truncated = true;
        auto of = last.find(" of ");
        auto rows_word = last.find(" rows shown]");
        if (of != std::string::npos && rows_word != std::string::npos) {
            parsed.total_rows = std::stoll(last.substr(of + 4, rows_word - of - 4));
        }
        end -= 1;
    }
    for (std::size_t i = 1; i < end; ++i) {
        std::vector<std::string> row;
        for (auto& cell : split(lines[i], '\t')) row.push_back(unescape_cell(cell));
        parsed.rows.push_back(std::move(row));
    }
    if (!parsed.truncated) parsed.total_rows = static_cast<std::int64_t>(parsed.rows.size());
    return parsed;
}

}  // namespace tabqa
