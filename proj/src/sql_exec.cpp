#include "treesql/sql_exec.hpp"

#include <sqlite3.h>

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdlib>
#include <sstream>

#include "treesql/errors.hpp"
#include "treesql/text.hpp"

namespace treesql {

void Database::Closer::operator()(sqlite3* db) const { sqlite3_close_v2(db); }

Database::~Database() = default;

Database Database::open_readonly(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec))
    throw IoError("database file not found: " + path.string());
  sqlite3* raw = nullptr;
  int rc = sqlite3_open_v2(path.c_str(), &raw, SQLITE_OPEN_READONLY | SQLITE_OPEN_NOMUTEX, nullptr);
  std::unique_ptr<sqlite3, Closer> db(raw);
  if (rc != SQLITE_OK) {
    std::string msg = raw ? sqlite3_errmsg(raw) : "out of memory";
    throw IoError("cannot open database " + path.string() + ": " + msg);
  }
  sqlite3_exec(db.get(), "PRAGMA query_only = 1", nullptr, nullptr, nullptr);
  Database out(std::move(db), path);
  // Force a schema read so non-database files fail here rather than later.
  out.for_each_row("SELECT count(*) FROM sqlite_master", [](const auto&) {});
  return out;
}

void Database::for_each_row(
    std::string_view sql,
    const std::function<void(const std::vector<std::optional<std::string>>&)>& fn) const {
  sqlite3_stmt* stmt = nullptr;
  if (sqlite3_prepare_v2(db_.get(), sql.data(), static_cast<int>(sql.size()), &stmt, nullptr) !=
      SQLITE_OK)
    throw IoError(std::string("query failed on ") + path_.string() + ": " + sqlite3_errmsg(db_.get()));
  std::unique_ptr<sqlite3_stmt, decltype(&sqlite3_finalize)> guard(stmt, &sqlite3_finalize);
  const int ncol = sqlite3_column_count(stmt);
  std::vector<std::optional<std::string>> row(static_cast<std::size_t>(ncol));
  int rc;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    for (int i = 0; i < ncol; ++i) {
      if (sqlite3_column_type(stmt, i) == SQLITE_NULL) {
        row[i].reset();
      } else {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
        row[i] = std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt, i)));
      }
    }
    fn(row);
  }
  if (rc != SQLITE_DONE)
    throw IoError(std::string("query failed on ") + path_.string() + ": " + sqlite3_errmsg(db_.get()));
}

ExecutionResult ExecutionResult::of_rows(std::vector<Row> rows, bool truncated) {
  ExecutionResult r;
  r.kind = Kind::Rows;
  r.rows = std::move(rows);
  r.truncated = truncated;
  return r;
}

ExecutionResult ExecutionResult::error(std::string message) {
  ExecutionResult r;
  r.kind = Kind::Error;
  r.message = message.empty() ? "unknown error" : std::move(message);
  return r;
}

ExecutionResult ExecutionResult::timeout(double secs) {
  ExecutionResult r;
  r.kind = Kind::Timeout;
  std::ostringstream os;
  os << "query exceeded the " << secs << "s time limit";
  r.message = os.str();
  return r;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Deadline {
  Clock::time_point at;
  bool hit = false;
};

int progress_cb(void* arg) {
  auto* d = static_cast<Deadline*>(arg);
  if (Clock::now() >= d->at) {
    d->hit = true;
    return 1;
  }
  return 0;
}

// Only plain reads are authorized; writes, ATTACH, PRAGMA and DDL are denied
// at prepare time.
int authorizer(void*, int action, const char*, const char*, const char*, const char*) {
  switch (action) {
    case SQLITE_SELECT:
    case SQLITE_READ:
    case SQLITE_FUNCTION:
    case SQLITE_RECURSIVE:
      return SQLITE_OK;
    default:
      return SQLITE_DENY;
  }
}

struct SandboxGuard {
  sqlite3* db;
  SandboxGuard(sqlite3* d, Deadline* deadline) : db(d) {
    sqlite3_set_authorizer(db, authorizer, nullptr);
    sqlite3_progress_handler(db, 1000, progress_cb, deadline);
  }
  ~SandboxGuard() {
    sqlite3_progress_handler(db, 0, nullptr, nullptr);
    sqlite3_set_authorizer(db, nullptr, nullptr);
  }
};

bool only_trailing_noise(const char* tail) {
  if (!tail) return true;
  for (; *tail; ++tail)
    if (!std::isspace(static_cast<unsigned char>(*tail)) && *tail != ';') return false;
  return true;
}

// First keyword after whitespace, comments and opening parentheses, upper-cased.
std::string leading_keyword(std::string_view sql) {
  std::size_t i = 0;
  while (i < sql.size()) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c)) || c == '(') {
      ++i;
    } else if (sql.substr(i, 2) == "--") {
      auto nl = sql.find('\n', i);
      i = nl == std::string_view::npos ? sql.size() : nl + 1;
    } else if (sql.substr(i, 2) == "/*") {
      auto end = sql.find("*/", i + 2);
      i = end == std::string_view::npos ? sql.size() : end + 2;
    } else {
      break;
    }
  }
  std::string word;
  while (i < sql.size() && std::isalpha(static_cast<unsigned char>(sql[i])))
    word.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(sql[i++]))));
  return word;
}

// Numbers (including numeric text) are quantized to a 1e-6 grid so that
// equality is an exact, transitive relation.
struct CanonCell {
  int kind = 0;  // 0 null, 1 quantized number, 2 large number, 3 text
  std::int64_t q = 0;
  double big = 0.0;
  std::string text;

  auto operator<=>(const CanonCell&) const = default;
};

constexpr double kNumericTolerance = 1e-6;

CanonCell canon_number(double x) {
  CanonCell c;
  if (std::fabs(x) < 9.0e12) {
    c.kind = 1;
    c.q = std::llround(x / kNumericTolerance);
  } else {
    c.kind = 2;
    c.big = x;
  }
  return c;
}

CanonCell canonicalize(const Cell& cell) {
  if (std::holds_alternative<std::monostate>(cell)) return {};
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return canon_number(static_cast<double>(*i));
  if (const auto* d = std::get_if<double>(&cell)) {
    if (std::isfinite(*d)) return canon_number(*d);
    CanonCell c;
    c.kind = 3;
    c.text = std::to_string(*d);
    return c;
  }
  std::string s = text::trim(std::get<std::string>(cell));
  if (!s.empty()) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() + s.size() && std::isfinite(v)) return canon_number(v);
  }
  CanonCell c;
  c.kind = 3;
  c.text = std::move(s);
  return c;
}

using CanonRow = std::vector<CanonCell>;

std::vector<CanonRow> canonical_rows(const ExecutionResult& r, ComparisonMode mode, bool sort) {
  std::vector<CanonRow> out;
  out.reserve(r.rows.size());
  for (const auto& row : r.rows) {
    CanonRow cr;
    cr.reserve(row.size());
    for (const auto& c : row) cr.push_back(canonicalize(c));
    out.push_back(std::move(cr));
  }
  if (sort) {
    std::sort(out.begin(), out.end());
    if (mode == ComparisonMode::Set) out.erase(std::unique(out.begin(), out.end()), out.end());
  }
  return out;
}

std::string cell_text(const Cell& c) {
  if (std::holds_alternative<std::monostate>(c)) return "NULL";
  if (const auto* i = std::get_if<std::int64_t>(&c)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&c)) {
    std::ostringstream os;
    os.precision(15);
    os << *d;
    return os.str();
  }
  return "'" + std::get<std::string>(c) + "'";
}

}  // namespace

ExecutionResult execute_sql(std::string_view sql, const Database& db, const ExecOptions& opts) {
  sqlite3* h = db.handle();
  Deadline deadline{Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                       std::chrono::duration<double>(opts.timeout_secs))};
  SandboxGuard guard(h, &deadline);

  std::string owned(sql);
  sqlite3_stmt* stmt = nullptr;
  const char* tail = nullptr;
  int rc = sqlite3_prepare_v2(h, owned.c_str(), static_cast<int>(owned.size()), &stmt, &tail);
  if (rc != SQLITE_OK) {
    if (deadline.hit) return ExecutionResult::timeout(opts.timeout_secs);
    return ExecutionResult::error(sqlite3_errmsg(h));
  }
  if (!stmt) return ExecutionResult::error("empty statement");
  std::unique_ptr<sqlite3_stmt, decltype(&sqlite3_finalize)> st(stmt, &sqlite3_finalize);
  if (!only_trailing_noise(tail)) return ExecutionResult::error("multiple statements are not allowed");
  const std::string kw = leading_keyword(owned);
  if (!sqlite3_stmt_readonly(stmt) || (kw != "SELECT" && kw != "WITH" && kw != "VALUES"))
    return ExecutionResult::error("only read-only queries are allowed");

  const int ncol = sqlite3_column_count(stmt);
  std::vector<Row> rows;
  bool truncated = false;
  while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
    if (rows.size() >= opts.row_cap) {
      truncated = true;
      break;
    }
    Row row;
    row.reserve(static_cast<std::size_t>(ncol));
    for (int i = 0; i < ncol; ++i) {
      switch (sqlite3_column_type(stmt, i)) {
        case SQLITE_NULL: row.emplace_back(std::monostate{}); break;
        case SQLITE_INTEGER: row.emplace_back(static_cast<std::int64_t>(sqlite3_column_int64(stmt, i))); break;
        case SQLITE_FLOAT: row.emplace_back(sqlite3_column_double(stmt, i)); break;
        default: {
          const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
          row.emplace_back(std::string(p ? p : "", static_cast<std::size_t>(sqlite3_column_bytes(stmt, i))));
        }
      }
    }
    rows.push_back(std::move(row));
  }
  if (rc != SQLITE_ROW && rc != SQLITE_DONE) {
    if (deadline.hit || rc == SQLITE_INTERRUPT) return ExecutionResult::timeout(opts.timeout_secs);
    return ExecutionResult::error(sqlite3_errmsg(h));
  }
  return ExecutionResult::of_rows(std::move(rows), truncated);
}

bool results_equal(const ExecutionResult& a, const ExecutionResult& b, ComparisonMode mode) {
  if (!a.ok() || !b.ok()) return false;
  if (a.truncated || b.truncated) {
    // A truncated result only matches an identical truncated result.
    if (!(a.truncated && b.truncated)) return false;
    return canonical_rows(a, mode, false) == canonical_rows(b, mode, false);
  }
  return canonical_rows(a, mode, true) == canonical_rows(b, mode, true);
}

std::string describe_result(const ExecutionResult& r, std::size_t max_rows) {
  switch (r.kind) {
    case ExecutionResult::Kind::Error: return "Error: " + r.message;
    case ExecutionResult::Kind::Timeout: return "Timeout: " + r.message;
    case ExecutionResult::Kind::Rows: break;
  }
  if (r.rows.empty()) return "The query executed successfully but returned no rows.";
  std::ostringstream os;
  os << r.rows.size() << (r.truncated ? "+" : "") << " row(s)";
  for (std::size_t i = 0; i < r.rows.size() && i < max_rows; ++i) {
    os << "\n(";
    for (std::size_t j = 0; j < r.rows[i].size(); ++j) os << (j ? ", " : "") << cell_text(r.rows[i][j]);
    os << ")";
  }
  if (r.rows.size() > max_rows) os << "\n...";
  return os.str();
}

ExecutionResult SqlExecutor::run(const std::string& sql) {
  std::lock_guard lock(mu_);
  if (auto it = cache_.find(sql); it != cache_.end()) return it->second;
  ++executions_;
  auto res = execute_sql(sql, db_, opts_);
  cache_.emplace(sql, res);
  return res;
}

std::size_t SqlExecutor::executions() const {
  std::lock_guard lock(mu_);
  return executions_;
}

std::filesystem::path database_path(const std::filesystem::path& root, const std::string& db_id) {
  return root / db_id / (db_id + ".sqlite");
}

AccuracyReport execution_accuracy(const std::vector<EvalItem>& items, const std::filesystem::path& db_root,
                                  const ExecOptions& opts, ComparisonMode mode) {
  AccuracyReport report;
  std::map<std::string, Database> open;
  std::map<std::string, std::size_t> hits;
  std::size_t total_hits = 0;
  for (const auto& item : items) {
    auto it = open.find(item.db_id);
    if (it == open.end())
      it = open.emplace(item.db_id, Database::open_readonly(database_path(db_root, item.db_id))).first;
    EvalRecord rec{item.question_id, item.difficulty, false, false, {}};
    auto gold = execute_sql(item.gold_sql, it->second, opts);
    if (!gold.ok()) {
      rec.gold_failed = true;
      rec.note = "gold query failed: " + describe_result(gold);
    } else if (!item.predicted_sql.empty()) {
      auto pred = execute_sql(item.predicted_sql, it->second, opts);
      rec.correct = results_equal(pred, gold, mode);
    }
    report.count_by_difficulty[item.difficulty]++;
    if (rec.correct) {
      hits[item.difficulty]++;
      total_hits++;
    }
    report.records.push_back(std::move(rec));
  }
  if (!items.empty()) report.overall = static_cast<double>(total_hits) / static_cast<double>(items.size());
  for (const auto& [diff, n] : report.count_by_difficulty)
    report.by_difficulty[diff] = static_cast<double>(hits[diff]) / static_cast<double>(n);
  return report;
}

}  // namespace treesql
