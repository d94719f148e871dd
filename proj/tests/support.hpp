#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "treesql/llm_client.hpp"
#include "treesql/prompts.hpp"

namespace treesql::testing {

namespace fs = std::filesystem;

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

/// Runs statements on a writable connection (creating the file if needed).
void run_sql(const fs::path& db_file, const std::string& sql);

/// Restaurant database (`generalinfo`, `location`) at root/<db_id>/<db_id>.sqlite
/// with description CSVs. Returns the database file.
fs::path write_restaurant_db(const fs::path& root, const std::string& db_id = "restaurant");

/// Join over both tables whose only row is 'bangkok cuisine'.
extern const char* const kThaiSolanoGold;

/// Fenced JSON reply carrying `sql` as "sql_query".
std::string sql_reply(const std::string& sql);

/// SQL embedded in a revision prompt, or empty.
std::string revision_input_sql(const std::string& prompt);

/// Chat model driven by a function of (request, sample index).
class FunctionModel : public ChatModel {
 public:
  using Fn = std::function<std::string(const CompletionRequest&, std::size_t)>;
  explicit FunctionModel(Fn fn) : fn_(std::move(fn)) {}
  std::vector<std::string> complete(const CompletionRequest& req) override;
  std::size_t calls() const { return calls_; }

 private:
  Fn fn_;
  std::size_t calls_ = 0;
};

/// Which built-in template produced the request's prompt.
std::optional<PromptId> prompt_of(const CompletionRequest& req);

/// Byte-wise file checksum.
std::string file_sha256(const fs::path& path);

std::string read_file(const fs::path& path);

}  // namespace treesql::testing
