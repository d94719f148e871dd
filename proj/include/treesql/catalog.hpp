#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treesql/core.hpp"
#include "treesql/sql_exec.hpp"

namespace treesql {

struct ColumnDef {
  std::string name;
  std::string type;
  bool not_null = false;
  std::string description;
  std::string value_description;
  std::vector<std::string> value_examples;

  bool is_text() const;
};

struct TableDef {
  std::string name;
  std::vector<ColumnDef> columns;
  std::vector<std::string> primary_key;

  const ColumnDef* find_column(std::string_view column) const;
};

/// child_table.child_column -> parent_table.parent_column
struct ForeignKey {
  std::string child_table;
  std::string child_column;
  std::string parent_table;
  std::string parent_column;
};

/// One concrete database value, as stored.
struct ValueRecord {
  std::string table;
  std::string column;
  std::string value;

  auto operator<=>(const ValueRecord&) const = default;
};

/// Tables, columns and key relationships of one database. Immutable after
/// load and safe to share across threads.
class DatabaseCatalog {
 public:
  DatabaseCatalog() = default;
  DatabaseCatalog(std::string db_id, std::vector<TableDef> tables, std::vector<ForeignKey> relationships);

  const std::string& db_id() const { return db_id_; }
  const std::vector<TableDef>& tables() const { return tables_; }
  const std::vector<ForeignKey>& relationships() const { return relationships_; }

  /// Case-insensitive lookup.
  const TableDef* find_table(std::string_view name) const;

 private:
  std::string db_id_;
  std::vector<TableDef> tables_;
  std::vector<ForeignKey> relationships_;
};

/// SQLite affinity rule: declared types mentioning CHAR, CLOB or TEXT.
bool is_text_type(std::string_view declared_type);

struct CatalogLoadOptions {
  /// BIRD-style `database_description/<table>.csv` directory; skipped when absent.
  std::optional<std::filesystem::path> description_dir;
  /// Distinct sample values attached to each TEXT column at load time.
  std::size_t example_values = 0;
};

/// Reads tables, columns, primary and foreign keys from the live database.
/// Foreign keys naming unknown tables or columns are dropped with a warning.
DatabaseCatalog load_catalog(const Database& db, std::string db_id, const CatalogLoadOptions& opts = {});

/// `<root>/<db_id>/<db_id>.sqlite` plus its description directory when present.
DatabaseCatalog load_catalog_from_root(const std::filesystem::path& root, const std::string& db_id,
                                       std::size_t example_values = 0);

/// CREATE TABLE text for the selected subset (whole catalog when absent).
/// Columns carry "-- Value Examples: ..." and "| Column Description: ..."
/// annotations; retrieved values are listed before catalog examples.
/// Throws ContractViolation when the selection names an unknown table or column.
std::string render_schema_context(const DatabaseCatalog& catalog,
                                  const std::optional<SchemaSelection>& selection,
                                  std::span<const ValueRecord> retrieved_values);

/// Maps model-produced names onto catalog spelling, dropping unknown entries.
/// Returns the names that were dropped, as "table" or "table.column".
std::vector<std::string> canonicalize_selection(const DatabaseCatalog& catalog, SchemaSelection& selection);

/// Minimal RFC 4180 reader (quoted fields, embedded newlines, leading BOM).
std::vector<std::vector<std::string>> parse_csv(std::string_view data);

}  // namespace treesql
