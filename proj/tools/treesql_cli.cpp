#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "treesql/catalog.hpp"
#include "treesql/config.hpp"
#include "treesql/errors.hpp"
#include "treesql/harness.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/prompts.hpp"
#include "treesql/sql_exec.hpp"
#include "treesql/value_index.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace treesql;

namespace {

// Cache-only replay: every request must already be in the completion cache.
class OfflineTransport : public Transport {
 public:
  HttpResponse post_json(const std::string& path, const std::string&) override {
    throw TransportError("offline: no cached completion for request to " + path);
  }
};

AppConfig resolve_config(const std::string& config_path) {
  AppConfig cfg = config_path.empty() ? parse_config("") : load_config(config_path);
  cfg.endpoint.apply_environment();
  return cfg;
}

std::vector<std::string> databases_under(const fs::path& root) {
  std::vector<std::string> ids;
  if (!fs::is_directory(root)) throw IoError("database root is not a directory: " + root.string());
  for (const auto& entry : fs::directory_iterator(root)) {
    if (!entry.is_directory()) continue;
    std::string id = entry.path().filename().string();
    if (fs::exists(entry.path() / (id + ".sqlite"))) ids.push_back(id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

int index_build(const fs::path& db_root, std::vector<std::string> dbs, const fs::path& out,
                const std::string& config_path) {
  AppConfig cfg = resolve_config(config_path);
  if (dbs.empty()) dbs = databases_under(db_root);
  if (dbs.empty()) throw IoError("no databases found under " + db_root.string());
  fs::create_directories(out);
  for (const auto& id : dbs) {
    auto catalog = load_catalog_from_root(db_root, id);
    auto db = Database::open_readonly(database_path(db_root, id));
    ValueIndex index = build_value_index(catalog, db, cfg.index);
    index.save(out / (id + ".jsonl"));
    std::cout << id << ": " << index.size() << " values\n";
  }
  return 0;
}

struct RunArgs {
  std::string dataset, db_root, format = "bird", mode = "mcts", config, out, index_dir, sds_file, prompts_dir;
  std::string rounding = "round", comparison = "set";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> rollouts;
  double sds_fraction = 0.0;
  std::size_t workers = 1, limit = 0, example_values = 0;
  bool resume = false, traces = false, offline = false, semantic = false;
};

void print_summary(const json& summary) {
  std::printf("EX %.4f (%zu/%zu)\n", summary["ex"].get<double>(), summary["correct"].get<std::size_t>(),
              summary["items"].get<std::size_t>());
  for (const auto& [d, v] : summary["by_difficulty"].items())
    std::printf("  %-12s %.4f  n=%zu\n", d.c_str(), v["ex"].get<double>(), v["count"].get<std::size_t>());
  if (summary.value("gold_failed", 0) > 0) std::printf("  gold queries failing: %d\n", summary["gold_failed"].get<int>());
  if (summary.value("errors", 0) > 0) std::printf("  items with errors: %d\n", summary["errors"].get<int>());
}

int run(const RunArgs& a) {
  AppConfig cfg = resolve_config(a.config);
  if (a.seed) cfg.search.rng_seed = *a.seed;
  if (a.rollouts) cfg.search.n_rollout = *a.rollouts;
  cfg.search.validate();

  auto format = parse_dataset_format(a.format);
  if (!format) throw IngestError("unknown dataset format '" + a.format + "'");
  auto items = load_dataset(a.dataset, *format);
  if (!a.sds_file.empty()) items = filter_by_id_file(items, a.sds_file);
  if (a.sds_fraction > 0.0)
    items = subsample_sds(items, a.sds_fraction, cfg.search.rng_seed,
                          a.rounding == "ceil" ? SampleRounding::Ceil : SampleRounding::Round);
  if (a.limit > 0 && items.size() > a.limit) items.resize(a.limit);
  spdlog::info("{} items to run", items.size());

  std::shared_ptr<Transport> transport;
  if (a.offline) {
    transport = std::make_shared<OfflineTransport>();
  } else {
    if (cfg.endpoint.api_key.empty()) spdlog::warn("no API key set (TREESQL_API_KEY or OPENAI_API_KEY)");
    transport = std::make_shared<HttpTransport>(cfg.endpoint.base_url, cfg.endpoint.api_key,
                                                cfg.endpoint.request_timeout_secs);
  }
  std::shared_ptr<CompletionCache> cache;
  if (!cfg.endpoint.cache_dir.empty()) cache = std::make_shared<CompletionCache>(cfg.endpoint.cache_dir);
  else if (a.offline) throw ConfigError("--offline needs endpoint.cache_dir");
  RetryPolicy retry;
  if (a.offline) retry.max_retries = 0;
  OpenAIChatModel model(transport, cfg.endpoint.chat_model, retry, cache);
  std::unique_ptr<Embedder> embedder;
  if (a.semantic) embedder = std::make_unique<OpenAIEmbedder>(transport, cfg.endpoint.embedding_model, retry);
  PromptLibrary prompts = a.prompts_dir.empty() ? PromptLibrary::builtin() : PromptLibrary::from_directory(a.prompts_dir);

  RunOptions opts;
  opts.search = cfg.search;
  opts.mode = a.mode == "baseline" ? RunMode::Baseline : RunMode::Mcts;
  opts.db_root = a.db_root;
  if (!a.index_dir.empty()) opts.index_dir = fs::path(a.index_dir);
  opts.output_dir = a.out;
  opts.workers = a.workers;
  opts.resume = a.resume;
  opts.write_traces = a.traces;
  opts.comparison = a.comparison == "multiset" ? ComparisonMode::Multiset : ComparisonMode::Set;
  opts.example_values = a.example_values;
  opts.extra_config = {{"endpoint", to_json(cfg.endpoint)},
                       {"index", to_json(cfg.index)},
                       {"dataset", a.dataset},
                       {"format", a.format},
                       {"semantic_retrieval", a.semantic}};

  RunReport report = run_benchmark(items, opts, RunServices{model, embedder.get(), prompts});
  print_summary(report.summary);
  return 0;
}

int report(const fs::path& out) {
  fs::path records = fs::is_directory(out) ? out / "records.jsonl" : out;
  if (!fs::exists(records)) throw IoError("no records at " + records.string());
  auto recs = read_records(records);
  print_summary(summarize_records(recs));
  return 0;
}

void print_node(const json& nodes, std::size_t id, int depth, int max_depth) {
  const json& n = nodes.at(id);
  std::string label = n["action"].is_null() ? "root" : n["action"].get<std::string>();
  std::printf("%*s%s  visits=%d", depth * 2, "", label.c_str(), n["visits"].get<int>());
  if (!n["action"].is_null()) std::printf(" q=%.3f n=%d", n["q"].get<double>(), n["n"].get<int>());
  if (n["dead"].get<bool>()) std::printf(" dead");
  if (!n["reward"].is_null()) std::printf(" reward=%.2f", n["reward"].get<double>());
  if (n["terminal"].get<bool>() && !n["sql"].is_null()) std::printf("  %s", n["sql"].get<std::string>().c_str());
  std::printf("\n");
  if (max_depth >= 0 && depth >= max_depth) return;
  for (const auto& c : n["children"]) print_node(nodes, c.get<std::size_t>(), depth + 1, max_depth);
}

int inspect(const fs::path& trace, int max_depth) {
  std::ifstream in(trace, std::ios::binary);
  if (!in) throw IoError("cannot open trace " + trace.string());
  json j = json::parse(in);
  if (j.contains("question")) std::printf("question: %s\n", j["question"].get<std::string>().c_str());
  if (j.contains("chosen_sql")) std::printf("chosen: %s\n", j["chosen_sql"].get<std::string>().c_str());
  const json& nodes = j.at("nodes");
  std::printf("nodes: %zu\n", nodes.size());
  if (!nodes.empty()) print_node(nodes, 0, 0, max_depth);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Tree-search text-to-SQL over SQLite benchmarks"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  auto* index_cmd = app.add_subcommand("index", "Value index commands");
  index_cmd->require_subcommand(1);
  auto* build_cmd = index_cmd->add_subcommand("build", "Build MinHash value indexes for databases");
  std::string idx_root, idx_out, idx_config;
  std::vector<std::string> idx_dbs;
  build_cmd->add_option("--db-root", idx_root, "Directory of <db_id>/<db_id>.sqlite")->required();
  build_cmd->add_option("--db", idx_dbs, "Database ids (default: all under the root)");
  build_cmd->add_option("--out", idx_out, "Output directory for <db_id>.jsonl")->required();
  build_cmd->add_option("--config", idx_config, "Config file");

  auto* run_cmd = app.add_subcommand("run", "Run a benchmark");
  RunArgs ra;
  run_cmd->add_option("--dataset", ra.dataset, "Benchmark JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--db-root", ra.db_root, "Directory of <db_id>/<db_id>.sqlite")->required();
  run_cmd->add_option("--format", ra.format, "bird or spider")->check(CLI::IsMember({"bird", "spider"}));
  run_cmd->add_option("--mode", ra.mode, "mcts or baseline")->check(CLI::IsMember({"mcts", "baseline"}));
  run_cmd->add_option("--config", ra.config, "Config file")->check(CLI::ExistingFile);
  run_cmd->add_option("--seed", ra.seed, "Search seed");
  run_cmd->add_option("--rollouts", ra.rollouts, "Override search.n_rollout");
  run_cmd->add_option("--workers", ra.workers, "Items processed in parallel");
  run_cmd->add_flag("--resume", ra.resume, "Skip items already in records.jsonl");
  run_cmd->add_option("--sds-file", ra.sds_file, "Question ids to keep")->check(CLI::ExistingFile);
  run_cmd->add_option("--sds-fraction", ra.sds_fraction, "Per-database sample fraction");
  run_cmd->add_option("--sds-rounding", ra.rounding, "round or ceil")->check(CLI::IsMember({"round", "ceil"}));
  run_cmd->add_option("--limit", ra.limit, "Run at most this many items");
  run_cmd->add_option("--index-dir", ra.index_dir, "Value index directory");
  run_cmd->add_option("--prompts-dir", ra.prompts_dir, "Prompt template overrides");
  run_cmd->add_option("--example-values", ra.example_values, "Sample values per TEXT column in schemas");
  run_cmd->add_option("--comparison", ra.comparison, "set or multiset")->check(CLI::IsMember({"set", "multiset"}));
  run_cmd->add_option("--out", ra.out, "Output directory")->required();
  run_cmd->add_flag("--traces", ra.traces, "Write per-question tree traces");
  run_cmd->add_flag("--semantic", ra.semantic, "Use the embedding endpoint for value retrieval");
  run_cmd->add_flag("--offline", ra.offline, "Serve completions from the cache only");

  auto* report_cmd = app.add_subcommand("report", "Summarize a run directory or records file");
  std::string report_path;
  report_cmd->add_option("path", report_path, "Run directory or records.jsonl")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "Print a tree trace");
  std::string trace_path;
  int max_depth = -1;
  inspect_cmd->add_option("trace", trace_path, "Trace JSON file")->required();
  inspect_cmd->add_option("--depth", max_depth, "Maximum depth to print");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*build_cmd) return index_build(idx_root, idx_dbs, idx_out, idx_config);
    if (*run_cmd) return run(ra);
    if (*report_cmd) return report(report_path);
    if (*inspect_cmd) return inspect(trace_path, max_depth);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
