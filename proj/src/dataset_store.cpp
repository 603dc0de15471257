#include "tabqa/dataset_store.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sqlite_util.hpp"
#include "tabqa/hash.hpp"

namespace tabqa {

namespace {

constexpr std::string_view kBom = "\xEF\xBB\xBF";

std::string_view trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

std::string to_uri(const std::string& db_path) {
    if (db_path == ":memory:") {
        static std::atomic<unsigned> counter{0};
        return "file:tabqa-mem-" + std::to_string(counter++) + "?mode=memory&cache=shared";
    }
    std::string uri = "file:";
    for (char c : db_path) {
        switch (c) {
        case '%': uri += "%25"; break;
        case '?': uri += "%3F"; break;
        case '#': uri += "%23"; break;
        default: uri.push_back(c);
        }
    }
    return uri;
}

ColumnType parse_column_type(std::string_view name) {
    for (auto t : {ColumnType::integer, ColumnType::real, ColumnType::text, ColumnType::boolean,
                   ColumnType::date}) {
        if (to_string(t) == name) return t;
    }
    throw DataError("corrupt metadata: unknown column type '" + std::string(name) + "'");
}

std::string create_table_sql(const std::string& table, const std::vector<Column>& columns) {
    std::string sql = "CREATE TABLE " + quote_identifier(table) + " (";
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) sql += ", ";
        sql += quote_identifier(columns[i].name);
        sql += ' ';
        sql += sql_type_name(columns[i].type);
    }
    sql += ")";
    return sql;
}

void bind_value(sqlite3_stmt* stmt, int index, ColumnType type, const std::string& raw) {
    if (type == ColumnType::text) {
        sqlite3_bind_text(stmt, index, raw.data(), static_cast<int>(raw.size()), SQLITE_TRANSIENT);
        return;
    }
    auto value = trim(raw);
    if (value.empty()) {
        sqlite3_bind_null(stmt, index);
        return;
    }
    switch (type) {
    case ColumnType::integer: {
        if (value.front() == '+') value.remove_prefix(1);
        std::int64_t v = 0;
        std::from_chars(value.data(), value.data() + value.size(), v);
        sqlite3_bind_int64(stmt, index, v);
        break;
    }
    case ColumnType::real: {
        if (value.front() == '+') value.remove_prefix(1);
        double v = 0;
        std::from_chars(value.data(), value.data() + value.size(), v);
        sqlite3_bind_double(stmt, index, v);
        break;
    }
    case ColumnType::boolean: {
        auto l = lower(value);
        sqlite3_bind_int(stmt, index, (l == "true" || l == "1") ? 1 : 0);
        break;
    }
    case ColumnType::date:
    case ColumnType::text:
        sqlite3_bind_text(stmt, index, value.data(), static_cast<int>(value.size()), SQLITE_TRANSIENT);
        break;
    }
}

std::string flatten(std::string_view s) {
    std::string out(s);
    std::replace_if(out.begin(), out.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
    return out;
}

int reader_authorizer(void* user, int action, const char* arg1, const char*, const char*, const char*) {
    const auto* allowed = static_cast<const std::string*>(user);
    switch (action) {
    case SQLITE_SELECT:
    case SQLITE_RECURSIVE:
        return SQLITE_OK;
    case SQLITE_READ:
        if (arg1 != nullptr && lower(arg1) == lower(*allowed)) return SQLITE_OK;
        return SQLITE_DENY;
    case SQLITE_FUNCTION:
        if (arg1 != nullptr && lower(arg1) == "load_extension") return SQLITE_DENY;
        return SQLITE_OK;
    default:
        return SQLITE_DENY;
    }
}

}  // namespace

std::string_view to_string(ColumnType type) noexcept {
    switch (type) {
    case ColumnType::integer: return "integer";
    case ColumnType::real: return "real";
    case ColumnType::text: return "text";
    case ColumnType::boolean: return "boolean";
    case ColumnType::date: return "date";
    }
    return "text";
}

std::string_view sql_type_name(ColumnType type) noexcept {
    switch (type) {
    case ColumnType::integer: return "INTEGER";
    case ColumnType::real: return "REAL";
    case ColumnType::text: return "TEXT";
    case ColumnType::boolean: return "BOOLEAN";
    case ColumnType::date: return "DATE";
    }
    return "TEXT";
}

// --- schema rendering --------------------------------------------------------

std::string TableSchema::column_headers() const {
    std::string out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i) out += ", ";
        out += columns[i].name;
    }
    return out;
}

std::string TableSchema::table_info() const {
    std::ostringstream os;
    os << "CREATE TABLE " << table_name << " (\n";
    for (std::size_t i = 0; i < columns.size(); ++i) {
        const auto& c = columns[i];
        os << '\t' << c.name << ' ' << sql_type_name(c.type);
        if (c.original_name != c.name) os << " /* \"" << flatten(c.original_name) << "\" */";
        os << (i + 1 < columns.size() ? ",\n" : "\n");
    }
    os << ")\n\n/*\n" << sample_rows.size() << " rows from " << table_name << " table:\n";
    for (std::size_t i = 0; i < columns.size(); ++i) {
        os << (i ? "\t" : "") << columns[i].name;
    }
    os << '\n';
    for (const auto& row : sample_rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            os << (i ? "\t" : "") << (row[i] ? flatten(*row[i]) : std::string("NULL"));
        }
        os << '\n';
    }
    os << "*/";
    return os.str();
}

// --- csv ---------------------------------------------------------------------

CsvTable parse_csv(std::string_view text, std::string_view origin) {
    if (text.substr(0, kBom.size()) == kBom) text.remove_prefix(kBom.size());

    std::vector<CsvRecord> records;
    CsvRecord current;
    std::string field;
    bool in_quotes = false;
    bool field_was_quoted = false;
    bool record_has_content = false;
    std::size_t line = 1;
    current.line = 1;

    auto end_field = [&] {
        current.fields.push_back(std::move(field));
        field.clear();
        field_was_quoted = false;
    };
    auto end_record = [&] {
        end_field();
        bool blank = current.fields.size() == 1 && current.fields[0].empty() && !record_has_content;
        if (!blank) records.push_back(std::move(current));
        current = CsvRecord{};
        record_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field.empty() || field_was_quoted) {
                std::ostringstream msg;
                msg << origin << ": stray quote at line " << line;
                throw DataError(msg.str());
            }
            in_quotes = true;
            field_was_quoted = true;
            record_has_content = true;
            break;
        case ',':
            end_field();
            record_has_content = true;
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') break;
            [[fallthrough]];
        case '\n':
            end_record();
            ++line;
            current.line = line;
            break;
        default:
            field.push_back(c);
            record_has_content = true;
        }
    }
    if (in_quotes) {
        std::ostringstream msg;
        msg << origin << ": unterminated quoted field starting near line " << current.line;
        throw DataError(msg.str());
    }
    if (record_has_content || !field.empty()) end_record();

    if (records.empty()) {
        throw DataError(std::string(origin) + ": missing header row");
    }
    CsvTable table;
    table.header = std::move(records.front().fields);
    for (std::size_t r = 1; r < records.size(); ++r) {
        if (records[r].fields.size() != table.header.size()) {
            std::ostringstream msg;
            msg << origin << ": row at line " << records[r].line << " has " << records[r].fields.size()
                << " fields, header has " << table.header.size();
            throw DataError(msg.str());
        }
        table.rows.push_back(std::move(records[r]));
    }
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot read file '" + path.string() + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw DataError("cannot read file '" + path.string() + "'");
    }
    return parse_csv(buf.str(), path.string());
}

// --- inference -----------------------------------------------------------------

bool looks_like_integer(std::string_view value) noexcept {
    value = trim(value);
    if (!value.empty() && (value.front() == '+' || value.front() == '-')) {
        auto digits = value.substr(1);
        if (!all_digits(digits)) return false;
    } else if (!all_digits(value)) {
        return false;
    }
    if (value.front() == '+') value.remove_prefix(1);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    return ec == std::errc{} && ptr == value.data() + value.size();
}

bool looks_like_real(std::string_view value) noexcept {
    value = trim(value);
    std::size_t i = 0;
    if (i < value.size() && (value[i] == '+' || value[i] == '-')) ++i;
    std::size_t mantissa_digits = 0;
    while (i < value.size() && std::isdigit(static_cast<unsigned char>(value[i]))) ++i, ++mantissa_digits;
    if (i < value.size() && value[i] == '.') {
        ++i;
        while (i < value.size() && std::isdigit(static_cast<unsigned char>(value[i]))) ++i, ++mantissa_digits;
    }
    if (mantissa_digits == 0) return false;
    if (i < value.size() && (value[i] == 'e' || value[i] == 'E')) {
        ++i;
        if (i < value.size() && (value[i] == '+' || value[i] == '-')) ++i;
        std::size_t exp_digits = 0;
        while (i < value.size() && std::isdigit(static_cast<unsigned char>(value[i]))) ++i, ++exp_digits;
        if (exp_digits == 0) return false;
    }
    if (i != value.size()) return false;
    if (value.front() == '+') value.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    return ec == std::errc{} && std::isfinite(v);
}

bool looks_like_boolean(std::string_view value) noexcept {
    auto l = lower(trim(value));
    return l == "true" || l == "false" || l == "0" || l == "1";
}

bool looks_like_date(std::string_view value) noexcept {
    value = trim(value);
    if (value.size() < 10) return false;
    auto digits_at = [&](std::size_t pos, std::size_t n) { return all_digits(value.substr(pos, n)); };
    if (!digits_at(0, 4) || value[4] != '-' || !digits_at(5, 2) || value[7] != '-' || !digits_at(8, 2)) {
        return false;
    }
    int month = (value[5] - '0') * 10 + (value[6] - '0');
    int day = (value[8] - '0') * 10 + (value[9] - '0');
    if (month < 1 || month > 12 || day < 1 || day > 31) return false;
    if (value.size() == 10) return true;
    // optional time of day: [T ]HH:MM[:SS[.fraction]]
    auto rest = value.substr(10);
    if (rest.size() < 6 || (rest[0] != 'T' && rest[0] != ' ')) return false;
    if (!all_digits(rest.substr(1, 2)) || rest[3] != ':' || !all_digits(rest.substr(4, 2))) return false;
    rest = rest.substr(6);
    if (rest.empty()) return true;
    if (rest.size() < 3 || rest[0] != ':' || !all_digits(rest.substr(1, 2))) return false;
    rest = rest.substr(3);
    if (rest.empty()) return true;
    return rest[0] == '.' && all_digits(rest.substr(1));
}

ColumnType infer_column_type(const std::vector<std::string_view>& values) {
    bool any = false;
    bool boolean = true, integer = true, real = true, date = true;
    for (auto raw : values) {
        auto v = trim(raw);
        if (v.empty()) continue;
        any = true;
        boolean = boolean && looks_like_boolean(v);
        integer = integer && looks_like_integer(v);
        real = real && (integer || looks_like_real(v));
        date = date && looks_like_date(v);
        if (!boolean && !real && !date) return ColumnType::text;
    }
    if (!any) return ColumnType::text;
    if (boolean) return ColumnType::boolean;
    if (integer) return ColumnType::integer;
    if (real) return ColumnType::real;
    if (date) return ColumnType::date;
    return ColumnType::text;
}

std::string sanitize_identifier(std::string_view name) {
    std::string out;
    out.reserve(name.size() + 1);
    for (unsigned char c : trim(name)) {
        out.push_back((std::isalnum(c) && c < 0x80) || c == '_' ? static_cast<char>(c) : '_');
    }
    if (out.empty() || std::isdigit(static_cast<unsigned char>(out.front()))) {
        out.insert(out.begin(), '_');
    }
    return out;
}

std::vector<std::string> sanitize_columns(const std::vector<std::string>& header) {
    std::vector<std::string> names;
    std::set<std::string> taken;
    // Names that need no renaming claim their spelling first, so a clean
    // `a_b` keeps it even if an earlier `a b` also sanitizes to `a_b`.
    for (const auto& h : header) {
        auto s = sanitize_identifier(h);
        if (s == h) taken.insert(lower(s));
    }
    std::set<std::string> assigned;
    for (const auto& h : header) {
        auto base = sanitize_identifier(h);
        std::string name = base;
        if (base == h && !assigned.contains(lower(base))) {
            assigned.insert(lower(base));
            names.push_back(name);
            continue;
        }
        for (int n = 2; taken.contains(lower(name)) || assigned.contains(lower(name)); ++n) {
            name = base + "_" + std::to_string(n);
        }
        assigned.insert(lower(name));
        taken.insert(lower(name));
        names.push_back(name);
    }
    return names;
}

std::string quote_identifier(std::string_view name) {
    std::string out = "\"";
    for (char c : name) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

// --- store -----------------------------------------------------------------------

DatasetStore::DatasetStore(const std::string& db_path) : uri_(to_uri(db_path)) {
    db_ = detail::open_database(uri_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE);
    sqlite3_busy_timeout(db_.get(), 5000);
    ensure_metadata();
}

DatasetStore::~DatasetStore() = default;

void DatasetStore::ensure_metadata() {
    detail::exec(db_.get(),
                 "CREATE TABLE IF NOT EXISTS _tabqa_datasets ("
                 " dataset_id TEXT PRIMARY KEY, table_name TEXT NOT NULL UNIQUE,"
                 " row_count INTEGER NOT NULL, origin_path TEXT NOT NULL);"
                 "CREATE TABLE IF NOT EXISTS _tabqa_columns ("
                 " dataset_id TEXT NOT NULL, ordinal INTEGER NOT NULL, name TEXT NOT NULL,"
                 " original_name TEXT NOT NULL, type TEXT NOT NULL,"
                 " PRIMARY KEY (dataset_id, ordinal));");
}

std::optional<DatasetHandle> DatasetStore::find_locked(const std::string& dataset_id) const {
    auto stmt = detail::prepare(db_.get(),
                                "SELECT table_name, row_count, origin_path FROM _tabqa_datasets "
                                "WHERE dataset_id = ?");
    sqlite3_bind_text(stmt.get(), 1, dataset_id.c_str(), -1, SQLITE_TRANSIENT);
    if (sqlite3_step(stmt.get()) != SQLITE_ROW) return std::nullopt;
    DatasetHandle h;
    h.dataset_id = dataset_id;
    h.table_name = *detail::column_cell(stmt.get(), 0);
    h.row_count = sqlite3_column_int64(stmt.get(), 1);
    h.origin_path = *detail::column_cell(stmt.get(), 2);
    return h;
}

std::vector<Column> DatasetStore::columns_locked(const std::string& dataset_id) const {
    auto stmt = detail::prepare(db_.get(),
                                "SELECT name, original_name, type FROM _tabqa_columns "
                                "WHERE dataset_id = ? ORDER BY ordinal");
    sqlite3_bind_text(stmt.get(), 1, dataset_id.c_str(), -1, SQLITE_TRANSIENT);
    std::vector<Column> cols;
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
        cols.push_back(Column{*detail::column_cell(stmt.get(), 0), *detail::column_cell(stmt.get(), 1),
                              parse_column_type(*detail::column_cell(stmt.get(), 2))});
    }
    return cols;
}

std::string DatasetStore::unique_table_name(std::string base) const {
    if (lower(base).starts_with("sqlite_") || lower(base).starts_with("_tabqa")) base = "t_" + base;
    auto exists = [&](const std::string& name) {
        auto stmt = detail::prepare(db_.get(), "SELECT 1 FROM sqlite_master WHERE lower(name) = lower(?)");
        sqlite3_bind_text(stmt.get(), 1, name.c_str(), -1, SQLITE_TRANSIENT);
        return sqlite3_step(stmt.get()) == SQLITE_ROW;
    };
    std::string name = base;
    for (int n = 2; exists(name); ++n) name = base + "_" + std::to_string(n);
    return name;
}

DatasetHandle DatasetStore::ingest(const std::filesystem::path& source, const std::string& dataset_id) {
    return ingest_csv(read_csv(source), dataset_id, source.string());
}

DatasetHandle DatasetStore::ingest_csv(const CsvTable& csv, const std::string& dataset_id,
                                       const std::string& origin_path) {
    if (dataset_id.empty()) {
        throw DataError("dataset id must not be empty");
    }
    if (csv.rows.empty()) {
        throw DataError("empty dataset: '" + origin_path + "' has a header but no data rows");
    }
    for (const auto& r : csv.rows) {
        if (r.fields.size() != csv.header.size()) {
            std::ostringstream msg;
            msg << origin_path << ": row at line " << r.line << " has " << r.fields.size()
                << " fields, header has " << csv.header.size();
            throw DataError(msg.str());
        }
    }

    auto names = sanitize_columns(csv.header);
    std::vector<Column> columns;
    for (std::size_t c = 0; c < csv.header.size(); ++c) {
        std::vector<std::string_view> values;
        values.reserve(csv.rows.size());
        for (const auto& r : csv.rows) values.push_back(r.fields[c]);
        columns.push_back(Column{names[c], csv.header[c], infer_column_type(values)});
    }

    std::lock_guard lock(mutex_);
    if (find_locked(dataset_id)) {
        throw DataError("duplicate dataset id '" + dataset_id + "'");
    }
    auto table = unique_table_name(sanitize_identifier(dataset_id));

    sqlite3* db = db_.get();
    detail::exec(db, "BEGIN IMMEDIATE");
    try {
        detail::exec(db, create_table_sql(table, columns));
        std::string insert = "INSERT INTO " + quote_identifier(table) + " VALUES (";
        for (std::size_t c = 0; c < columns.size(); ++c) insert += c ? ",?" : "?";
        insert += ")";
        auto stmt = detail::prepare(db, insert);
        for (const auto& r : csv.rows) {
            sqlite3_reset(stmt.get());
            for (std::size_t c = 0; c < columns.size(); ++c) {
                bind_value(stmt.get(), static_cast<int>(c + 1), columns[c].type, r.fields[c]);
            }
            if (sqlite3_step(stmt.get()) != SQLITE_DONE) throw DataError(detail::errmsg(db));
        }
        auto meta = detail::prepare(db, "INSERT INTO _tabqa_datasets VALUES (?, ?, ?, ?)");
        sqlite3_bind_text(meta.get(), 1, dataset_id.c_str(), -1, SQLITE_TRANSIENT);
        sqlite3_bind_text(meta.get(), 2, table.c_str(), -1, SQLITE_TRANSIENT);
        sqlite3_bind_int64(meta.get(), 3, static_cast<sqlite3_int64>(csv.rows.size()));
        sqlite3_bind_text(meta.get(), 4, origin_path.c_str(), -1, SQLITE_TRANSIENT);
        if (sqlite3_step(meta.get()) != SQLITE_DONE) throw DataError(detail::errmsg(db));
        auto col = detail::prepare(db, "INSERT INTO _tabqa_columns VALUES (?, ?, ?, ?, ?)");
        for (std::size_t c = 0; c < columns.size(); ++c) {
            sqlite3_reset(col.get());
            sqlite3_bind_text(col.get(), 1, dataset_id.c_str(), -1, SQLITE_TRANSIENT);
            sqlite3_bind_int64(col.get(), 2, static_cast<sqlite3_int64>(c));
            sqlite3_bind_text(col.get(), 3, columns[c].name.c_str(), -1, SQLITE_TRANSIENT);
            sqlite3_bind_text(col.get(), 4, columns[c].original_name.c_str(), -1, SQLITE_TRANSIENT);
            auto type = std::string(to_string(columns[c].type));
            sqlite3_bind_text(col.get(), 5, type.c_str(), -1, SQLITE_TRANSIENT);
            if (sqlite3_step(col.get()) != SQLITE_DONE) throw DataError(detail::errmsg(db));
        }
        detail::exec(db, "COMMIT");
    } catch (...) {
        sqlite3_exec(db, "ROLLBACK", nullptr, nullptr, nullptr);
        throw;
    }
    return DatasetHandle{dataset_id, table, static_cast<std::int64_t>(csv.rows.size()), origin_path};
}

DatasetHandle DatasetStore::sample_lite(const DatasetHandle& handle, int max_rows) {
    if (max_rows < 1) {
        throw DataError("sample size must be at least 1, got " + std::to_string(max_rows));
    }
    std::lock_guard lock(mutex_);
    auto source = find_locked(handle.dataset_id);
    if (!source) {
        throw DataError("unknown dataset '" + handle.dataset_id + "'");
    }
    const std::string lite_id = source->dataset_id + "@lite" + std::to_string(max_rows);
    if (auto existing = find_locked(lite_id)) return *existing;

    auto columns = columns_locked(source->dataset_id);
    auto table = unique_table_name(source->table_name + "_lite" + std::to_string(max_rows));
    auto rows = std::min<std::int64_t>(source->row_count, max_rows);

    sqlite3* db = db_.get();
    detail::exec(db, "BEGIN IMMEDIATE");
    try {
        detail::exec(db, create_table_sql(table, columns));
        detail::exec(db, "INSERT INTO " + quote_identifier(table) + " SELECT * FROM " +
                             quote_identifier(source->table_name) + " ORDER BY rowid LIMIT " +
                             std::to_string(max_rows));
        auto meta = detail::prepare(db, "INSERT INTO _tabqa_datasets VALUES (?, ?, ?, ?)");
        sqlite3_bind_text(meta.get(), 1, lite_id.c_str(), -1, SQLITE_TRANSIENT);
        sqlite3_bind_text(meta.get(), 2, table.c_str(), -1, SQLITE_TRANSIENT);
        sqlite3_bind_int64(meta.get(), 3, rows);
        sqlite3_bind_text(meta.get(), 4, source->origin_path.c_str(), -1, SQLITE_TRANSIENT);
        if (sqlite3_step(meta.get()) != SQLITE_DONE) throw DataError(detail::errmsg(db));
        auto copy = detail::prepare(db,
                                    "INSERT INTO _tabqa_columns SELECT ?, ordinal, name, original_name, type "
                                    "FROM _tabqa_columns WHERE dataset_id = ?");
        sqlite3_bind_text(copy.get(), 1, lite_id.c_str(), -1, SQLITE_TRANSIENT);
        sqlite3_bind_text(copy.get(), 2, source->dataset_id.c_str(), -1, SQLITE_TRANSIENT);
        if (sqlite3_step(copy.get()) != SQLITE_DONE) throw DataError(detail::errmsg(db));
        detail::exec(db, "COMMIT");
    } catch (...) {
        sqlite3_exec(db, "ROLLBACK", nullptr, nullptr, nullptr);
        throw;
    }
    return DatasetHandle{lite_id, table, rows, source->origin_path};
}

TableSchema DatasetStore::schema_info(const DatasetHandle& handle, int sample_n) const {
    if (sample_n < 0) {
        throw DataError("sample_n must be non-negative");
    }
    std::lock_guard lock(mutex_);
    auto h = find_locked(handle.dataset_id);
    if (!h) {
        throw DataError("unknown dataset '" + handle.dataset_id + "'");
    }
    TableSchema schema;
    schema.table_name = h->table_name;
    schema.columns = columns_locked(h->dataset_id);
    auto stmt = detail::prepare(db_.get(), "SELECT * FROM " + quote_identifier(h->table_name) +
                                               " ORDER BY rowid LIMIT " + std::to_string(sample_n));
    const int n = sqlite3_column_count(stmt.get());
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
        Row row;
        for (int i = 0; i < n; ++i) row.push_back(detail::column_cell(stmt.get(), i));
        schema.sample_rows.push_back(std::move(row));
    }
    return schema;
}

std::optional<DatasetHandle> DatasetStore::find(const std::string& dataset_id) const {
    std::lock_guard lock(mutex_);
    return find_locked(dataset_id);
}

DatasetHandle DatasetStore::get(const std::string& dataset_id) const {
    auto h = find(dataset_id);
    if (!h) {
        throw DataError("unknown dataset '" + dataset_id + "'");
    }
    return *h;
}

std::vector<DatasetHandle> DatasetStore::list() const {
    std::lock_guard lock(mutex_);
    auto stmt = detail::prepare(db_.get(),
                                "SELECT dataset_id, table_name, row_count, origin_path FROM _tabqa_datasets "
                                "ORDER BY dataset_id");
    std::vector<DatasetHandle> out;
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
        out.push_back(DatasetHandle{*detail::column_cell(stmt.get(), 0), *detail::column_cell(stmt.get(), 1),
                                    sqlite3_column_int64(stmt.get(), 2), *detail::column_cell(stmt.get(), 3)});
    }
    return out;
}

std::vector<Row> DatasetStore::rows(const DatasetHandle& handle) const {
    auto h = get(handle.dataset_id);
    auto db = open_reader(h.table_name);
    auto stmt = detail::prepare(db.get(), "SELECT * FROM " + quote_identifier(h.table_name) + " ORDER BY rowid");
    const int n = sqlite3_column_count(stmt.get());
    std::vector<Row> out;
    int rc;
    while ((rc = sqlite3_step(stmt.get())) == SQLITE_ROW) {
        Row row;
        for (int i = 0; i < n; ++i) row.push_back(detail::column_cell(stmt.get(), i));
        out.push_back(std::move(row));
    }
    if (rc != SQLITE_DONE) throw DataError(detail::errmsg(db.get()));
    return out;
}

std::string DatasetStore::table_checksum(const DatasetHandle& handle) const {
    auto h = get(handle.dataset_id);
    auto db = open_reader(h.table_name);
    auto stmt = detail::prepare(db.get(), "SELECT * FROM " + quote_identifier(h.table_name) + " ORDER BY rowid");
    const int n = sqlite3_column_count(stmt.get());
    Sha256 sha;
    for (int i = 0; i < n; ++i) {
        sha.update(sqlite3_column_name(stmt.get(), i)).update("\x1f");
    }
    std::int64_t count = 0;
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
        sha.update("\x1e");
        for (int i = 0; i < n; ++i) {
            auto type = sqlite3_column_type(stmt.get(), i);
            sha.update(std::string(1, static_cast<char>('0' + type)));
            if (auto cell = detail::column_cell(stmt.get(), i)) sha.update(*cell);
            sha.update("\x1f");
        }
        ++count;
    }
    sha.update("rows=" + std::to_string(count));
    return sha.hex_digest();
}

std::shared_ptr<sqlite3> DatasetStore::open_reader(const std::string& table_name) const {
    auto db = detail::open_database(uri_, SQLITE_OPEN_READONLY);
    sqlite3_busy_timeout(db.get(), 5000);
    detail::exec(db.get(), "PRAGMA query_only = ON");
    // The authorizer keeps a pointer to the table name; tie its lifetime to the connection.
    auto allowed = std::make_shared<std::string>(table_name);
    sqlite3_set_authorizer(db.get(), reader_authorizer, allowed.get());
    return std::shared_ptr<sqlite3>(db.get(), [db, allowed](sqlite3*) mutable {
        db.reset();
        allowed.reset();
    });
}

}  // namespace tabqa
