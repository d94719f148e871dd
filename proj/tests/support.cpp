#include "support.hpp"

#include <sqlite3.h>

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "treesql/text.hpp"

namespace treesql::testing {

const char* const kThaiSolanoGold =
    "SELECT T1.label FROM generalinfo AS T1 INNER JOIN location AS T2 ON T1.id_restaurant = T2.id_restaurant "
    "WHERE T1.food_type = 'thai' AND T2.street_name = 'solano ave'";

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() / ("treesql-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void run_sql(const fs::path& db_file, const std::string& sql) {
  sqlite3* db = nullptr;
  if (sqlite3_open(db_file.c_str(), &db) != SQLITE_OK) {
    sqlite3_close(db);
    throw std::runtime_error("cannot open " + db_file.string());
  }
  char* err = nullptr;
  int rc = sqlite3_exec(db, sql.c_str(), nullptr, nullptr, &err);
  std::string msg = err ? err : "";
  sqlite3_free(err);
  sqlite3_close(db);
  if (rc != SQLITE_OK) throw std::runtime_error("sql failed: " + msg);
}

fs::path write_restaurant_db(const fs::path& root, const std::string& db_id) {
  fs::path dir = root / db_id;
  fs::create_directories(dir / "database_description");
  fs::path file = dir / (db_id + ".sqlite");
  run_sql(file, R"(
    CREATE TABLE generalinfo (
      id_restaurant INTEGER NOT NULL PRIMARY KEY,
      label TEXT,
      food_type TEXT,
      city TEXT,
      review REAL
    );
    CREATE TABLE location (
      id_restaurant INTEGER NOT NULL PRIMARY KEY,
      street_num INTEGER,
      street_name TEXT,
      city TEXT,
      FOREIGN KEY (id_restaurant) REFERENCES generalinfo (id_restaurant)
    );
    INSERT INTO generalinfo VALUES
      (1, 'sala thai', 'thai', 'albany', 3.8),
      (2, 'thai house', 'thai', 'berkeley', 3.5),
      (3, 'bangkok cuisine', 'thai', 'albany', 4.0),
      (4, 'chez panisse', 'californian', 'berkeley', 4.6),
      (5, 'pasta place', 'italian', 'san francisco', 3.1),
      (6, 'sushi go', 'japanese', 'albany', 2.9);
    INSERT INTO location VALUES
      (1, 100, 'san pablo ave', 'albany'),
      (2, 2000, 'shattuck ave', 'berkeley'),
      (3, 500, 'solano ave', 'albany'),
      (4, 1517, 'shattuck ave', 'berkeley'),
      (5, 12, 'market st', 'san francisco'),
      (6, 77, 'solano ave', 'albany');
  )");
  std::ofstream(dir / "database_description" / "generalinfo.csv")
      << "original_column_name,column_name,column_description,data_format,value_description\n"
      << "id_restaurant,id restaurant,the unique id for the restaurant,integer,\n"
      << "label,,the label of the restaurant,text,\n"
      << "food_type,food type,the food type,text,\n"
      << "city,,the city where the restaurant is located in,text,\n"
      << "review,,the review of the restaurant,real,\"the review rating is from 0.0 to 5.0\"\n";
  std::ofstream(dir / "database_description" / "location.csv")
      << "original_column_name,column_name,column_description,data_format,value_description\n"
      << "id_restaurant,id restaurant,the unique id for the restaurant,integer,\n"
      << "street_num,street number,the street number of the restaurant,integer,\n"
      << "street_name,street name,the street name of the restaurant,text,\n"
      << "city,,the city where the restaurant is located in,text,\n";
  return file;
}

std::string sql_reply(const std::string& sql) {
  nlohmann::json j = {{"chain_of_thought_reasoning", "Reasoning about the question."}, {"sql_query", sql}};
  return "```json\n" + j.dump(2) + "\n```";
}

std::string revision_input_sql(const std::string& prompt) {
  const std::string open = "Executed SQL Query:\n";
  auto a = prompt.find(open);
  if (a == std::string::npos) return {};
  a += open.size();
  auto b = prompt.find("\n\nExecution Result:", a);
  if (b == std::string::npos) return {};
  return prompt.substr(a, b - a);
}

std::vector<std::string> FunctionModel::complete(const CompletionRequest& req) {
  ++calls_;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < req.n_samples; ++i) out.push_back(fn_(req, req.sample_offset + i));
  return out;
}

std::optional<PromptId> prompt_of(const CompletionRequest& req) {
  static const PromptLibrary lib = PromptLibrary::builtin();
  return identify_prompt(req.prompt, lib);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string file_sha256(const fs::path& path) { return text::sha256_hex(read_file(path)); }

}  // namespace treesql::testing
