#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

struct sqlite3;

namespace treesql {

/// Read-only SQLite connection. Move-only; one per task.
class Database {
 public:
  /// Throws IoError when the file is missing or not a database.
  static Database open_readonly(const std::filesystem::path& path);

  Database(Database&&) noexcept = default;
  Database& operator=(Database&&) noexcept = default;
  ~Database();

  sqlite3* handle() const { return db_.get(); }
  const std::filesystem::path& path() const { return path_; }

  /// Trusted internal query (catalog scans, index builds). Bypasses the
  /// statement sandbox; throws IoError on failure. Cells are passed as text,
  /// NULL as std::nullopt.
  void for_each_row(std::string_view sql,
                    const std::function<void(const std::vector<std::optional<std::string>>&)>& fn) const;

 private:
  struct Closer {
    void operator()(sqlite3* db) const;
  };
  Database(std::unique_ptr<sqlite3, Closer> db, std::filesystem::path path)
      : db_(std::move(db)), path_(std::move(path)) {}

  std::unique_ptr<sqlite3, Closer> db_;
  std::filesystem::path path_;
};

/// NULL, INTEGER, REAL, TEXT (blobs are carried as their bytes).
using Cell = std::variant<std::monostate, std::int64_t, double, std::string>;
using Row = std::vector<Cell>;

struct ExecutionResult {
  enum class Kind { Rows, Error, Timeout };

  Kind kind = Kind::Rows;
  std::vector<Row> rows;
  bool truncated = false;
  std::string message;

  static ExecutionResult of_rows(std::vector<Row> rows, bool truncated = false);
  static ExecutionResult error(std::string message);
  static ExecutionResult timeout(double secs);

  bool ok() const { return kind == Kind::Rows; }
};

struct ExecOptions {
  double timeout_secs = 30.0;
  std::size_t row_cap = 10000;
};

/// Runs a single read-only statement. Database errors and timeouts come back
/// as values, never as exceptions.
ExecutionResult execute_sql(std::string_view sql, const Database& db, const ExecOptions& opts = {});

enum class ComparisonMode { Set, Multiset };

/// Order-insensitive row comparison under cell canonicalization. Only Rows
/// outcomes can be equal; an Error never equals another Error.
bool results_equal(const ExecutionResult& a, const ExecutionResult& b,
                   ComparisonMode mode = ComparisonMode::Set);

/// Short text form used inside revision prompts and reports.
std::string describe_result(const ExecutionResult& r, std::size_t max_rows = 5);

/// Executes SQL against one database and memoizes results by statement text.
/// Thread-safe; the underlying connection is serialized by a mutex.
class SqlExecutor {
 public:
  SqlExecutor(Database db, ExecOptions opts) : db_(std::move(db)), opts_(opts) {}

  ExecutionResult run(const std::string& sql);
  const Database& database() const { return db_; }
  const ExecOptions& options() const { return opts_; }
  std::size_t executions() const;

 private:
  Database db_;
  ExecOptions opts_;
  mutable std::mutex mu_;
  std::map<std::string, ExecutionResult> cache_;
  std::size_t executions_ = 0;
};

/// Locates `<root>/<db_id>/<db_id>.sqlite`.
std::filesystem::path database_path(const std::filesystem::path& root, const std::string& db_id);

struct EvalItem {
  std::string question_id;
  std::string db_id;
  std::string difficulty;
  std::string predicted_sql;
  std::string gold_sql;
};

struct EvalRecord {
  std::string question_id;
  std::string difficulty;
  bool correct = false;
  bool gold_failed = false;
  std::string note;
};

struct AccuracyReport {
  double overall = 0.0;
  std::map<std::string, double> by_difficulty;
  std::map<std::string, std::size_t> count_by_difficulty;
  std::vector<EvalRecord> records;
};

/// Mean of per-item execution matches. Throws IoError for a missing database.
AccuracyReport execution_accuracy(const std::vector<EvalItem>& items,
                                  const std::filesystem::path& db_root,
                                  const ExecOptions& opts = {},
                                  ComparisonMode mode = ComparisonMode::Set);

}  // namespace treesql
