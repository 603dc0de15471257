#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tabqa/error.hpp"

struct sqlite3;

namespace tabqa {

enum class ColumnType { integer, real, text, boolean, date };

std::string_view to_string(ColumnType type) noexcept;
std::string_view sql_type_name(ColumnType type) noexcept;

/// A single cell as rendered by the engine; nullopt is SQL NULL.
using Cell = std::optional<std::string>;
using Row = std::vector<Cell>;

struct Column {
    std::string name;           ///< sanitized, usable verbatim in SQL
    std::string original_name;  ///< header text from the source file
    ColumnType type = ColumnType::text;
};

struct DatasetHandle {
    std::string dataset_id;
    std::string table_name;
    std::int64_t row_count = 0;
    std::string origin_path;

    friend bool operator==(const DatasetHandle&, const DatasetHandle&) = default;
};

struct TableSchema {
    std::string table_name;
    std::vector<Column> columns;
    std::vector<Row> sample_rows;

    /// Comma separated sanitized column names, the `{column_headers}` binding.
    std::string column_headers() const;

    /// DDL followed by a commented block of sample rows, the `{table_info}` binding.
    std::string table_info() const;
};

// --- delimited text ---------------------------------------------------------

struct CsvRecord {
    std::vector<std::string> fields;
    std::size_t line = 0;  ///< 1-based physical line where the record starts
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<CsvRecord> rows;
};

/// Parses comma separated text with RFC 4180 quoting. Quoted fields may span
/// lines; `""` inside quotes is a literal quote. Blank lines are skipped and a
/// leading UTF-8 BOM is ignored. Arity mismatches are reported with the line.
CsvTable parse_csv(std::string_view text, std::string_view origin = "<memory>");
CsvTable read_csv(const std::filesystem::path& path);

// --- type inference and naming ----------------------------------------------

bool looks_like_integer(std::string_view value) noexcept;
bool looks_like_real(std::string_view value) noexcept;
bool looks_like_boolean(std::string_view value) noexcept;
bool looks_like_date(std::string_view value) noexcept;

/// Most specific type satisfied by every non-empty value, tried in the order
/// boolean, integer, real, date, text. Columns with no values are text.
ColumnType infer_column_type(const std::vector<std::string_view>& values);

/// Replaces every character outside `[A-Za-z0-9_]` with `_` and prefixes a
/// leading digit (or an empty name) so the result is a valid identifier.
std::string sanitize_identifier(std::string_view name);

/// Sanitizes a header row; case-insensitive collisions get `_2`, `_3`, ...
std::vector<std::string> sanitize_columns(const std::vector<std::string>& header);

/// Double-quoted SQL identifier.
std::string quote_identifier(std::string_view name);

// --- store ------------------------------------------------------------------

/// Owns the embedded database that holds every ingested dataset plus the
/// metadata (handles, column types, original header names) needed to reopen
/// the store from another process.
///
/// Ingestion and sampling are serialized. Reads go through independent
/// read-only connections (see `open_reader`) and may run concurrently.
class DatasetStore {
public:
    /// `db_path` is a file path or `:memory:`.
    explicit DatasetStore(const std::string& db_path);
    ~DatasetStore();

    DatasetStore(const DatasetStore&) = delete;
    DatasetStore& operator=(const DatasetStore&) = delete;

    DatasetHandle ingest(const std::filesystem::path& source, const std::string& dataset_id);
    DatasetHandle ingest_csv(const CsvTable& table, const std::string& dataset_id,
                             const std::string& origin_path);

    /// First `min(row_count, max_rows)` rows in file order, as a new dataset
    /// with id `<id>@lite<max_rows>`. Repeated calls return the same handle.
    DatasetHandle sample_lite(const DatasetHandle& handle, int max_rows = 20);

    TableSchema schema_info(const DatasetHandle& handle, int sample_n = 3) const;

    std::optional<DatasetHandle> find(const std::string& dataset_id) const;
    DatasetHandle get(const std::string& dataset_id) const;
    std::vector<DatasetHandle> list() const;

    /// All rows in storage order.
    std::vector<Row> rows(const DatasetHandle& handle) const;

    /// SHA-256 over every cell of the table, in storage order.
    std::string table_checksum(const DatasetHandle& handle) const;

    /// URI suitable for opening extra connections to the same database.
    const std::string& uri() const noexcept { return uri_; }

    /// Opens a read-only connection on which only reads of `table_name`
    /// are authorized. Caller owns the connection.
    std::shared_ptr<sqlite3> open_reader(const std::string& table_name) const;

private:
    void ensure_metadata();
    std::optional<DatasetHandle> find_locked(const std::string& dataset_id) const;
    std::vector<Column> columns_locked(const std::string& dataset_id) const;
    std::string unique_table_name(std::string base) const;

    std::string uri_;
    std::shared_ptr<sqlite3> db_;
    mutable std::mutex mutex_;
};

}  // namespace tabqa
