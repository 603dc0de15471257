#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tabqa/dataset_store.hpp"
#include "tabqa/error.hpp"
#include "tabqa/example_bank.hpp"

namespace tabqa {

enum class SqlErrorKind {
    no_statement,        ///< nothing SELECT-like in provider text
    empty,
    malformed,           ///< unterminated string, identifier or comment
    not_select,          ///< statement class forbidden
    multi_statement,
    forbidden_keyword,
    projection,          ///< row retrieval query without `*` projection
    engine,              ///< the database rejected or failed the statement
    unknown_identifier,  ///< engine error naming a missing table or column
    timeout,
};

std::string_view to_string(SqlErrorKind kind) noexcept;

class SqlError : public Error {
public:
    SqlError(SqlErrorKind kind, const std::string& what) : Error(ErrorClass::sql, what), kind_(kind) {}
    SqlErrorKind kind() const noexcept { return kind_; }

private:
    SqlErrorKind kind_;
};

/// A statement that passed `validate_query`.
struct SqlQuery {
    std::string text;  ///< trailing semicolon removed
    QueryMode mode = QueryMode::row_retrieval;
    std::string target_table;  ///< first table after the top-level FROM, empty if none
};

struct QueryResult {
    std::vector<std::string> headers;
    std::vector<Row> rows;
    bool truncated = false;
    std::int64_t total_rows = 0;
};

/// Pulls the first SQL statement out of provider text: prefers the first
/// fenced code block, skips leading prose, stops after the first top-level
/// semicolon (kept) or, outside a fence, at the first blank line.
std::string extract_sql(std::string_view raw);

/// Read-only single-statement gate. Comments are stripped and literals and
/// quoted identifiers masked before the keyword scan.
SqlQuery validate_query(std::string_view text, QueryMode mode);

struct ExecuteOptions {
    std::int64_t row_cap = 50;
    int timeout_ms = 5000;
};

/// Runs a validated query on its own read-only connection. Rows past
/// `row_cap` are counted but not kept.
QueryResult execute(const SqlQuery& query, const DatasetStore& store, const DatasetHandle& handle,
                    ExecuteOptions options = {});

/// Tab separated header line then one line per row; NULL prints as `NULL`
/// and tab, newline, carriage return and backslash are escaped. Empty results
/// end with `[0 rows]`. When rows were capped or the text would exceed
/// `max_bytes`, trailing rows are dropped and `[truncated: N of M rows shown]`
/// is appended, keeping the whole text within `max_bytes` whenever the
/// header and marker alone fit.
std::string serialize_result(const QueryResult& result, std::size_t max_bytes = 8192);

struct ParsedResultText {
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;
    std::int64_t total_rows = 0;
    bool truncated = false;
};

/// Inverse of `serialize_result` (NULL cells come back as the text `NULL`).
ParsedResultText parse_result_text(std::string_view text);

}  // namespace tabqa
