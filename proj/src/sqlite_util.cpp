#include "sqlite_util.hpp"

namespace tabqa::detail {

std::shared_ptr<sqlite3> open_database(const std::string& uri, int flags) {
    sqlite3* raw = nullptr;
    int rc = sqlite3_open_v2(uri.c_str(), &raw, flags | SQLITE_OPEN_URI, nullptr);
    std::shared_ptr<sqlite3> db(raw, [](sqlite3* p) { sqlite3_close_v2(p); });
    if (rc != SQLITE_OK) {
        throw DataError("cannot open database '" + uri + "': " +
                        (raw ? sqlite3_errmsg(raw) : sqlite3_errstr(rc)));
    }
    sqlite3_extended_result_codes(raw, 1);
    // Unknown "identifiers" must fail instead of becoming string literals.
    sqlite3_db_config(raw, SQLITE_DBCONFIG_DQS_DML, 0, nullptr);
    sqlite3_db_config(raw, SQLITE_DBCONFIG_DQS_DDL, 0, nullptr);
    return db;
}

StmtPtr prepare(sqlite3* db, std::string_view sql, std::string_view* tail) {
    sqlite3_stmt* stmt = nullptr;
    const char* end = nullptr;
    int rc = sqlite3_prepare_v2(db, sql.data(), static_cast<int>(sql.size()), &stmt, &end);
    if (rc != SQLITE_OK) {
        throw DataError(errmsg(db));
    }
    if (tail != nullptr) {
        *tail = end ? std::string_view(end, static_cast<std::size_t>(sql.data() + sql.size() - end))
                    : std::string_view{};
    }
    return StmtPtr(stmt);
}

void exec(sqlite3* db, const std::string& sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown error";
        sqlite3_free(err);
        throw DataError(msg);
    }
}

Cell column_cell(sqlite3_stmt* stmt, int i) {
    if (sqlite3_column_type(stmt, i) == SQLITE_NULL) {
        return std::nullopt;
    }
    const auto* text = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
    int n = sqlite3_column_bytes(stmt, i);
    return std::string(text ? text : "", static_cast<std::size_t>(n));
}

std::string errmsg(sqlite3* db) {
    return sqlite3_errmsg(db);
}

}  // namespace tabqa::detail
