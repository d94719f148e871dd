#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "treesql/catalog.hpp"
#include "treesql/core.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/prompts.hpp"
#include "treesql/sql_exec.hpp"

namespace treesql {

struct BenchmarkItem {
  std::string question_id;
  NLQuestion question;
  std::string gold_sql;
  std::string difficulty;
};

enum class DatasetFormat { Bird, Spider };

std::optional<DatasetFormat> parse_dataset_format(std::string_view name);

/// Reads a BIRD or Spider JSON array. Throws IngestError naming the record
/// index for missing fields, IoError for an unreadable file.
std::vector<BenchmarkItem> load_dataset(const std::filesystem::path& path, DatasetFormat format);
std::vector<BenchmarkItem> parse_dataset(const nlohmann::json& data, DatasetFormat format);

/// easy / medium / hard / extra from a token-level reading of the SQL,
/// following the component counts of the Spider evaluation script.
std::string spider_hardness(std::string_view sql);

enum class SampleRounding { Round, Ceil };

/// Seeded per-database sample of `fraction` of the items (at least one per
/// database). Item order is preserved.
std::vector<BenchmarkItem> subsample_sds(const std::vector<BenchmarkItem>& items, double fraction,
                                         std::uint64_t seed, SampleRounding rounding = SampleRounding::Round);

/// Keeps the items whose ids appear in the file: a JSON array of ids or of
/// objects with "question_id", or one id per line.
std::vector<BenchmarkItem> filter_by_id_file(const std::vector<BenchmarkItem>& items,
                                             const std::filesystem::path& id_file);

/// SQL between the last <sql> and </sql> markers, else the last fenced code
/// block. Empty when neither is present.
std::string parse_baseline_sql(std::string_view raw);

std::string build_baseline_prompt(const NLQuestion& q, const DatabaseCatalog& catalog, const PromptLibrary& prompts);

/// One temperature-0 completion of the direct prompt; empty SQL when the
/// response cannot be parsed.
std::string baseline_generate(const NLQuestion& q, const DatabaseCatalog& catalog, ChatModel& model,
                              const PromptLibrary& prompts, std::size_t max_tokens = 2048);

enum class RunMode { Mcts, Baseline };

struct RunOptions {
  SearchConfig search;
  RunMode mode = RunMode::Mcts;
  std::filesystem::path db_root;
  /// Directory of `<db_id>.jsonl` value indexes; retrieval is skipped when unset.
  std::optional<std::filesystem::path> index_dir;
  std::filesystem::path output_dir;
  std::size_t workers = 1;
  bool resume = false;
  bool write_traces = false;
  ComparisonMode comparison = ComparisonMode::Set;
  std::size_t example_values = 0;
  /// Recorded into the report's config snapshot.
  nlohmann::json extra_config = nlohmann::json::object();
};

struct RunServices {
  ChatModel& model;
  Embedder* embedder = nullptr;
  const PromptLibrary& prompts;
};

struct RunReport {
  /// Per-item records in dataset order.
  std::vector<nlohmann::json> records;
  nlohmann::json summary;
};

/// Runs every item and writes records.jsonl, summary.json, predictions.json
/// and predictions.sql under the output directory. With `resume`, items
/// already present in records.jsonl are kept and not rerun.
RunReport run_benchmark(const std::vector<BenchmarkItem>& items, const RunOptions& opts, const RunServices& services);

/// Aggregate block recomputed from per-item records.
nlohmann::json summarize_records(const std::vector<nlohmann::json>& records);

/// Reads records.jsonl. Lines that do not parse (a torn final write) are skipped.
std::vector<nlohmann::json> read_records(const std::filesystem::path& path);

/// Copy of a record or summary with every "timing" member removed.
nlohmann::json strip_timing(nlohmann::json j);

}  // namespace treesql
