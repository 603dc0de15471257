#pragma once

#include <sqlite3.h>

#include <memory>
#include <string>
#include <string_view>

#include "tabqa/dataset_store.hpp"

namespace tabqa::detail {

struct StmtFinalizer {
    void operator()(sqlite3_stmt* stmt) const noexcept { sqlite3_finalize(stmt); }
};
using StmtPtr = std::unique_ptr<sqlite3_stmt, StmtFinalizer>;

std::shared_ptr<sqlite3> open_database(const std::string& uri, int flags);

/// Prepares exactly one statement. `tail` receives whatever text follows it.
StmtPtr prepare(sqlite3* db, std::string_view sql, std::string_view* tail = nullptr);

void exec(sqlite3* db, const std::string& sql);

/// Engine rendering of column `i` of the current row.
Cell column_cell(sqlite3_stmt* stmt, int i);

std::string errmsg(sqlite3* db);

}  // namespace tabqa::detail
