#include "treesql/catalog.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "treesql/errors.hpp"
#include "treesql/text.hpp"

namespace treesql {

namespace {

std::string quote_ident(std::string_view name) {
  bool plain = !name.empty() && (std::isalpha(static_cast<unsigned char>(name[0])) || name[0] == '_');
  for (char c : name)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) plain = false;
  if (plain) return std::string(name);
  return "`" + std::string(name) + "`";
}

// SQL string literal for queries issued by the loader itself.
std::string sql_ident(std::string_view name) {
  return "\"" + text::replace_all(std::string(name), "\"", "\"\"") + "\"";
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void attach_descriptions(TableDef& table, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::path csv;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (entry.path().extension() != ".csv") continue;
    if (text::iequals(entry.path().stem().string(), table.name)) {
      csv = entry.path();
      break;
    }
  }
  if (csv.empty()) return;
  auto rows = parse_csv(read_file(csv));
  if (rows.empty()) return;
  std::map<std::string, std::size_t> header;
  for (std::size_t i = 0; i < rows[0].size(); ++i) header[text::to_lower(text::trim(rows[0][i]))] = i;
  auto field = [&](const std::vector<std::string>& row, const char* key) -> std::string {
    auto it = header.find(key);
    if (it == header.end() || it->second >= row.size()) return {};
    return text::collapse_whitespace(row[it->second]);
  };
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::string name = field(rows[r], "original_column_name");
    if (name.empty()) name = field(rows[r], "column_name");
    for (auto& col : table.columns) {
      if (!text::iequals(col.name, name)) continue;
      col.description = field(rows[r], "column_description");
      if (col.description.empty()) col.description = field(rows[r], "column_name");
      col.value_description = field(rows[r], "value_description");
      if (text::iequals(col.value_description, "commonsense evidence:")) col.value_description.clear();
    }
  }
}

}  // namespace

bool is_text_type(std::string_view declared_type) {
  std::string t = text::to_lower(declared_type);
  if (text::contains(t, "int")) return false;
  return text::contains(t, "char") || text::contains(t, "clob") || text::contains(t, "text");
}

bool ColumnDef::is_text() const { return is_text_type(type); }

const ColumnDef* TableDef::find_column(std::string_view column) const {
  for (const auto& c : columns)
    if (text::iequals(c.name, column)) return &c;
  return nullptr;
}

DatabaseCatalog::DatabaseCatalog(std::string db_id, std::vector<TableDef> tables,
                                 std::vector<ForeignKey> relationships)
    : db_id_(std::move(db_id)), tables_(std::move(tables)), relationships_(std::move(relationships)) {
  std::set<std::string> seen;
  for (const auto& t : tables_)
    if (!seen.insert(text::to_lower(t.name)).second)
      throw ContractViolation("duplicate table name in catalog: " + t.name);
  for (const auto& fk : relationships_) {
    const auto* child = find_table(fk.child_table);
    const auto* parent = find_table(fk.parent_table);
    if (!child || !parent || !child->find_column(fk.child_column) || !parent->find_column(fk.parent_column))
      throw ContractViolation("foreign key names an unknown column: " + fk.child_table + "." +
                              fk.child_column + " -> " + fk.parent_table + "." + fk.parent_column);
  }
}

const TableDef* DatabaseCatalog::find_table(std::string_view name) const {
  for (const auto& t : tables_)
    if (text::iequals(t.name, name)) return &t;
  return nullptr;
}

DatabaseCatalog load_catalog(const Database& db, std::string db_id, const CatalogLoadOptions& opts) {
  std::vector<TableDef> tables;
  db.for_each_row(
      "SELECT name FROM sqlite_master WHERE type = 'table' AND name NOT LIKE 'sqlite_%' ORDER BY rowid",
      [&](const auto& row) {
        if (row[0]) tables.push_back(TableDef{*row[0], {}, {}});
      });

  struct RawFk {
    std::string child_table, child_column, parent_table;
    std::optional<std::string> parent_column;
  };
  std::vector<RawFk> raw_fks;

  for (auto& table : tables) {
    std::vector<std::pair<int, std::string>> pk;
    db.for_each_row("PRAGMA table_info(" + sql_ident(table.name) + ")", [&](const auto& row) {
      // cid, name, type, notnull, dflt_value, pk
      ColumnDef col;
      col.name = row[1].value_or("");
      col.type = row[2].value_or("");
      col.not_null = row[3].value_or("0") != "0";
      int pk_pos = std::stoi(row[5].value_or("0"));
      if (pk_pos > 0) pk.emplace_back(pk_pos, col.name);
      table.columns.push_back(std::move(col));
    });
    std::sort(pk.begin(), pk.end());
    for (auto& [_, name] : pk) table.primary_key.push_back(name);

    db.for_each_row("PRAGMA foreign_key_list(" + sql_ident(table.name) + ")", [&](const auto& row) {
      // id, seq, table, from, to, ...
      raw_fks.push_back(RawFk{table.name, row[3].value_or(""), row[2].value_or(""), row[4]});
    });

    if (opts.description_dir) attach_descriptions(table, *opts.description_dir);

    if (opts.example_values > 0) {
      for (auto& col : table.columns) {
        if (!col.is_text()) continue;
        db.for_each_row("SELECT DISTINCT " + sql_ident(col.name) + " FROM " + sql_ident(table.name) +
                            " WHERE " + sql_ident(col.name) + " IS NOT NULL AND typeof(" + sql_ident(col.name) +
                            ") = 'text' AND " + sql_ident(col.name) + " <> '' LIMIT " +
                            std::to_string(opts.example_values),
                        [&](const auto& row) {
                          if (row[0]) col.value_examples.push_back(*row[0]);
                        });
      }
    }
  }

  // Resolve foreign keys onto catalog spelling; drop the ones that do not resolve.
  auto find = [&](std::string_view name) -> TableDef* {
    for (auto& t : tables)
      if (text::iequals(t.name, name)) return &t;
    return nullptr;
  };
  std::vector<ForeignKey> fks;
  for (const auto& raw : raw_fks) {
    TableDef* child = find(raw.child_table);
    TableDef* parent = find(raw.parent_table);
    const ColumnDef* child_col = child ? child->find_column(raw.child_column) : nullptr;
    const ColumnDef* parent_col = nullptr;
    if (parent) {
      if (raw.parent_column && !raw.parent_column->empty())
        parent_col = parent->find_column(*raw.parent_column);
      else if (parent->primary_key.size() == 1)
        parent_col = parent->find_column(parent->primary_key.front());
    }
    if (!child_col || !parent_col) {
      spdlog::warn("catalog {}: dropping unresolvable foreign key {}.{} -> {}.{}", db_id, raw.child_table,
                   raw.child_column, raw.parent_table, raw.parent_column.value_or("?"));
      continue;
    }
    fks.push_back(ForeignKey{child->name, child_col->name, parent->name, parent_col->name});
  }
  return DatabaseCatalog(std::move(db_id), std::move(tables), std::move(fks));
}

DatabaseCatalog load_catalog_from_root(const std::filesystem::path& root, const std::string& db_id,
                                       std::size_t example_values) {
  auto db = Database::open_readonly(database_path(root, db_id));
  CatalogLoadOptions opts;
  opts.example_values = example_values;
  auto desc = root / db_id / "database_description";
  std::error_code ec;
  if (std::filesystem::is_directory(desc, ec)) opts.description_dir = desc;
  return load_catalog(db, db_id, opts);
}

std::vector<std::string> canonicalize_selection(const DatabaseCatalog& catalog, SchemaSelection& selection) {
  std::vector<std::string> dropped;
  SchemaSelection out;
  for (const auto& [table, columns] : selection) {
    const TableDef* t = catalog.find_table(table);
    if (!t) {
      dropped.push_back(table);
      continue;
    }
    auto& cols = out[t->name];
    for (const auto& c : columns) {
      const ColumnDef* col = t->find_column(c);
      if (!col) {
        dropped.push_back(table + "." + c);
        continue;
      }
      if (std::find(cols.begin(), cols.end(), col->name) == cols.end()) cols.push_back(col->name);
    }
    std::sort(cols.begin(), cols.end());
  }
  selection = std::move(out);
  return dropped;
}

std::string render_schema_context(const DatabaseCatalog& catalog, const std::optional<SchemaSelection>& selection,
                                  std::span<const ValueRecord> retrieved_values) {
  // Resolve the selection up front so unknown names fail before any output.
  std::map<std::string, std::set<std::string>> chosen;  // lower-case table -> lower-case columns
  if (selection) {
    for (const auto& [table, columns] : *selection) {
      const TableDef* t = catalog.find_table(table);
      if (!t) throw ContractViolation("schema selection names unknown table: " + table);
      auto& cols = chosen[text::to_lower(t->name)];
      for (const auto& c : columns) {
        if (!t->find_column(c)) throw ContractViolation("schema selection names unknown column: " + table + "." + c);
        cols.insert(text::to_lower(c));
      }
    }
  }
  auto table_included = [&](const std::string& name) {
    return !selection || chosen.count(text::to_lower(name)) > 0;
  };

  std::ostringstream os;
  bool first_table = true;
  for (const auto& table : catalog.tables()) {
    if (!table_included(table.name)) continue;
    const std::string tkey = text::to_lower(table.name);
    auto column_included = [&](const ColumnDef& c) {
      if (!selection) return true;
      if (chosen[tkey].count(text::to_lower(c.name))) return true;
      return std::any_of(table.primary_key.begin(), table.primary_key.end(),
                         [&](const std::string& pk) { return text::iequals(pk, c.name); });
    };

    if (!first_table) os << "\n";
    first_table = false;
    os << "CREATE TABLE " << quote_ident(table.name) << "\n(\n";
    const bool inline_pk = table.primary_key.size() == 1;
    for (const auto& col : table.columns) {
      if (!column_included(col)) continue;
      os << "\t" << quote_ident(col.name);
      if (!col.type.empty()) os << " " << col.type;
      os << (col.not_null ? " not null" : " null");
      if (inline_pk && text::iequals(table.primary_key.front(), col.name)) os << " primary key";
      os << ",";

      std::vector<std::string> examples;
      for (const auto& v : retrieved_values)
        if (text::iequals(v.table, table.name) && text::iequals(v.column, col.name) &&
            std::find(examples.begin(), examples.end(), v.value) == examples.end())
          examples.push_back(v.value);
      for (const auto& v : col.value_examples)
        if (std::find(examples.begin(), examples.end(), v) == examples.end()) examples.push_back(v);

      std::vector<std::string> notes;
      if (!examples.empty()) {
        std::string joined = "Value Examples: ";
        for (std::size_t i = 0; i < examples.size(); ++i) joined += (i ? ", '" : "'") + examples[i] + "'";
        notes.push_back(std::move(joined));
      }
      if (!col.description.empty()) notes.push_back("Column Description: " + col.description);
      if (!col.value_description.empty()) notes.push_back("Value Description: " + col.value_description);
      if (!notes.empty()) {
        os << " -- ";
        for (std::size_t i = 0; i < notes.size(); ++i) os << (i ? " | " : "") << notes[i];
      }
      os << "\n";
    }
    if (table.primary_key.size() > 1) {
      os << "\tprimary key (";
      for (std::size_t i = 0; i < table.primary_key.size(); ++i)
        os << (i ? ", " : "") << quote_ident(table.primary_key[i]);
      os << "),\n";
    }
    for (const auto& fk : catalog.relationships()) {
      if (!text::iequals(fk.child_table, table.name) || !table_included(fk.parent_table)) continue;
      const ColumnDef* child = table.find_column(fk.child_column);
      if (!child || !column_included(*child)) continue;
      os << "\tforeign key (" << quote_ident(fk.child_column) << ") references " << quote_ident(fk.parent_table)
         << " (" << quote_ident(fk.parent_column) << "),\n";
    }
    os << ");\n";
  }
  return os.str();
}

std::vector<std::vector<std::string>> parse_csv(std::string_view data) {
  if (data.substr(0, 3) == "\xEF\xBB\xBF") data.remove_prefix(3);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    char c = data[i];
    any = true;
    if (quoted) {
      if (c == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      field.push_back(c);
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace treesql
