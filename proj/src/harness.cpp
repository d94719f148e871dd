#include "treesql/harness.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "treesql/config.hpp"
#include "treesql/errors.hpp"
#include "treesql/mcts.hpp"
#include "treesql/reward_select.hpp"
#include "treesql/text.hpp"
#include "treesql/value_index.hpp"

namespace treesql {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<DatasetFormat> parse_dataset_format(std::string_view name) {
  std::string n = text::to_lower(name);
  if (n == "bird") return DatasetFormat::Bird;
  if (n == "spider") return DatasetFormat::Spider;
  return std::nullopt;
}

namespace {

std::string required_string(const json& rec, std::size_t index, const char* field) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null())
    throw IngestError("record " + std::to_string(index) + ": missing field '" + field + "'");
  if (!it->is_string())
    throw IngestError("record " + std::to_string(index) + ": field '" + field + "' is not a string");
  return it->get<std::string>();
}

std::string optional_string(const json& rec, const char* field) {
  auto it = rec.find(field);
  if (it == rec.end() || it->is_null()) return {};
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

std::string id_string(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

}  // namespace

std::vector<BenchmarkItem> parse_dataset(const json& data, DatasetFormat format) {
  if (!data.is_array()) throw IngestError("dataset must be a JSON array of records");
  std::vector<BenchmarkItem> items;
  items.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const json& rec = data[i];
    if (!rec.is_object()) throw IngestError("record " + std::to_string(i) + ": not an object");
    BenchmarkItem item;
    item.question.question = required_string(rec, i, "question");
    item.question.db_id = required_string(rec, i, "db_id");
    if (text::trim(item.question.question).empty())
      throw IngestError("record " + std::to_string(i) + ": empty question");
    auto qid = rec.find("question_id");
    item.question_id = qid != rec.end() && !qid->is_null() ? id_string(*qid) : std::to_string(i);
    if (format == DatasetFormat::Bird) {
      item.gold_sql = required_string(rec, i, "SQL");
      item.question.hint = optional_string(rec, "evidence");
      item.difficulty = optional_string(rec, "difficulty");
      if (item.difficulty.empty()) item.difficulty = "unknown";
    } else {
      item.gold_sql = required_string(rec, i, "query");
      item.question.hint = optional_string(rec, "evidence");
      item.difficulty = optional_string(rec, "difficulty");
      if (item.difficulty.empty()) item.difficulty = optional_string(rec, "hardness");
      if (item.difficulty.empty()) item.difficulty = spider_hardness(item.gold_sql);
    }
    items.push_back(std::move(item));
  }
  return items;
}

std::vector<BenchmarkItem> load_dataset(const fs::path& path, DatasetFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  json data;
  try {
    data = json::parse(in);
  } catch (const json::exception& e) {
    throw IngestError("dataset " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_dataset(data, format);
}

// ---------------------------------------------------------------------------
// Spider hardness

namespace {

struct Token {
  std::string text;  // lower-cased for words
  bool word = false;
};

std::vector<Token> sql_tokens(std::string_view sql) {
  std::vector<Token> out;
  std::size_t i = 0;
  while (i < sql.size()) {
    char c = sql[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '\'' || c == '"' || c == '`') {
      std::size_t j = i + 1;
      while (j < sql.size()) {
        if (sql[j] == c) {
          if (j + 1 < sql.size() && sql[j + 1] == c) {
            j += 2;
            continue;
          }
          break;
        }
        ++j;
      }
      out.push_back({std::string(sql.substr(i, j + 1 - i)), false});
      i = j + 1;
    } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') {
      std::size_t j = i;
      while (j < sql.size() &&
             (std::isalnum(static_cast<unsigned char>(sql[j])) || sql[j] == '_' || sql[j] == '.'))
        ++j;
      out.push_back({text::to_lower(sql.substr(i, j - i)), true});
      i = j;
    } else {
      out.push_back({std::string(1, c), false});
      ++i;
    }
  }
  return out;
}

enum class Clause { None, Select, From, Where, Group, Having, Order, Limit };

}  // namespace

std::string spider_hardness(std::string_view sql) {
  static const std::set<std::string> kAggregates = {"max", "min", "count", "sum", "avg"};
  auto toks = sql_tokens(sql);
  int c1 = 0, c2 = 0, others = 0;
  std::size_t select_items = 1, where_conds = 1, group_items = 1, aggs = 0;
  bool pending_between = false;
  Clause clause = Clause::None;
  int depth = 0;

  for (std::size_t i = 0; i < toks.size(); ++i) {
    const auto& t = toks[i];
    auto next_is = [&](std::string_view s) { return i + 1 < toks.size() && toks[i + 1].text == s; };
    if (t.text == "(") {
      if (next_is("select")) {
        ++c2;
        int d = 1;
        for (++i; i + 1 < toks.size() && d > 0;) {
          ++i;
          if (toks[i].text == "(") ++d;
          else if (toks[i].text == ")") --d;
        }
        continue;
      }
      ++depth;
      continue;
    }
    if (t.text == ")") {
      --depth;
      continue;
    }
    if (t.text == ",") {
      if (depth == 0) {
        if (clause == Clause::Select) ++select_items;
        else if (clause == Clause::From) ++c1;
        else if (clause == Clause::Group) ++group_items;
      }
      continue;
    }
    if (!t.word) continue;
    const std::string& w = t.text;
    if (depth == 0 && (w == "union" || w == "intersect" || w == "except")) {
      ++c2;
      break;
    }
    if (w == "select") clause = Clause::Select;
    else if (w == "from") clause = Clause::From;
    else if (w == "where") clause = Clause::Where, ++c1;
    else if (w == "group" && next_is("by")) clause = Clause::Group, ++c1;
    else if (w == "having") clause = Clause::Having;
    else if (w == "order" && next_is("by")) clause = Clause::Order, ++c1;
    else if (w == "limit") clause = Clause::Limit, ++c1;
    else if (w == "join" && clause == Clause::From) ++c1;
    else if (w == "between") pending_between = true;
    else if (w == "or" && (clause == Clause::From || clause == Clause::Where || clause == Clause::Having)) {
      ++c1;
      if (clause == Clause::Where && depth == 0) ++where_conds;
    } else if (w == "and" && clause == Clause::Where && depth == 0) {
      if (pending_between) pending_between = false;
      else ++where_conds;
    } else if (w == "like" && (clause == Clause::From || clause == Clause::Where || clause == Clause::Having)) {
      ++c1;
    } else if (kAggregates.count(w) && next_is("(") && clause != Clause::From && clause != Clause::Limit) {
      ++aggs;
    }
  }
  if (aggs > 1) ++others;
  if (select_items > 1) ++others;
  if (where_conds > 1) ++others;
  if (group_items > 1) ++others;

  if (c1 <= 1 && others == 0 && c2 == 0) return "easy";
  if ((others <= 2 && c1 <= 1 && c2 == 0) || (c1 <= 2 && others < 2 && c2 == 0)) return "medium";
  if ((others > 2 && c1 <= 2 && c2 == 0) || (c1 > 2 && c1 <= 3 && others <= 2 && c2 == 0) ||
      (c1 <= 1 && others == 0 && c2 <= 1))
    return "hard";
  return "extra";
}

// ---------------------------------------------------------------------------
// Sampling

std::vector<BenchmarkItem> subsample_sds(const std::vector<BenchmarkItem>& items, double fraction, std::uint64_t seed,
                                         SampleRounding rounding) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractViolation("sample fraction must lie in (0, 1]");
  std::map<std::string, std::vector<std::size_t>> by_db;
  for (std::size_t i = 0; i < items.size(); ++i) by_db[items[i].question.db_id].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  for (auto& [db, idx] : by_db) {
    double want = fraction * static_cast<double>(idx.size());
    std::size_t k = rounding == SampleRounding::Ceil ? static_cast<std::size_t>(std::ceil(want - 1e-9))
                                                     : static_cast<std::size_t>(std::llround(want));
    k = std::clamp<std::size_t>(k, 1, idx.size());
    for (std::size_t i = idx.size() - 1; i > 0; --i) std::swap(idx[i], idx[rng() % (i + 1)]);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k));
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<BenchmarkItem> out;
  for (std::size_t i : chosen) out.push_back(items[i]);
  return out;
}

std::vector<BenchmarkItem> filter_by_id_file(const std::vector<BenchmarkItem>& items, const fs::path& id_file) {
  std::ifstream in(id_file, std::ios::binary);
  if (!in) throw IoError("cannot open id file: " + id_file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string content = ss.str();
  std::set<std::string> ids;
  std::string trimmed = text::trim(content);
  if (!trimmed.empty() && trimmed.front() == '[') {
    json j;
    try {
      j = json::parse(trimmed);
    } catch (const json::exception& e) {
      throw IngestError("id file " + id_file.string() + " is not valid JSON: " + e.what());
    }
    for (const auto& v : j) {
      if (v.is_object()) {
        if (!v.contains("question_id")) throw IngestError("id file entry without question_id");
        ids.insert(id_string(v["question_id"]));
      } else {
        ids.insert(id_string(v));
      }
    }
  } else {
    std::istringstream lines(content);
    for (std::string line; std::getline(lines, line);) {
      std::string t = text::trim(line);
      if (!t.empty()) ids.insert(t);
    }
  }
  std::vector<BenchmarkItem> out;
  for (const auto& item : items)
    if (ids.count(item.question_id)) out.push_back(item);
  if (out.size() != ids.size())
    spdlog::warn("id file lists {} ids but {} matched the dataset", ids.size(), out.size());
  return out;
}

// ---------------------------------------------------------------------------
// Baseline

namespace {

std::string strip_code_fence(std::string s) {
  s = text::trim(s);
  if (s.starts_with("```")) {
    auto nl = s.find('\n');
    s = nl == std::string::npos ? std::string() : s.substr(nl + 1);
    auto close = s.rfind("```");
    if (close != std::string::npos) s = s.substr(0, close);
  }
  return text::trim(s);
}

}  // namespace

std::string parse_baseline_sql(std::string_view raw) {
  auto open = raw.rfind("<sql>");
  if (open != std::string_view::npos) {
    auto body = raw.substr(open + 5);
    auto close = body.find("</sql>");
    std::string sql = strip_code_fence(std::string(body.substr(0, close)));
    if (!sql.empty()) return sql;
  }
  auto last = raw.rfind("```");
  if (last == std::string_view::npos || last == 0) return {};
  auto first = raw.rfind("```", last - 1);
  if (first == std::string_view::npos) return {};
  return strip_code_fence(std::string(raw.substr(first, last + 3 - first)));
}

std::string build_baseline_prompt(const NLQuestion& q, const DatabaseCatalog& catalog, const PromptLibrary& prompts) {
  return fill_template(prompts.get(PromptId::Baseline),
                       {{"QUESTION", q.question},
                        {"HINT", q.hint},
                        {"SCHEMA_CONTEXT", render_schema_context(catalog, std::nullopt, {})}});
}

std::string baseline_generate(const NLQuestion& q, const DatabaseCatalog& catalog, ChatModel& model,
                              const PromptLibrary& prompts, std::size_t max_tokens) {
  CompletionRequest req{build_baseline_prompt(q, catalog, prompts), 0.0, 1, max_tokens, "baseline", 0};
  auto out = model.complete(req);
  return out.empty() ? std::string() : parse_baseline_sql(out.front());
}

// ---------------------------------------------------------------------------
// Reports

json strip_timing(json j) {
  if (j.is_object()) {
    j.erase("timing");
    for (auto& [_, v] : j.items()) v = strip_timing(std::move(v));
  } else if (j.is_array()) {
    for (auto& v : j) v = strip_timing(std::move(v));
  }
  return j;
}

std::vector<json> read_records(const fs::path& path) {
  std::vector<json> out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  for (std::string line; std::getline(in, line);) {
    if (text::trim(line).empty()) continue;
    try {
      json j = json::parse(line);
      if (j.is_object() && j.contains("question_id")) out.push_back(std::move(j));
    } catch (const json::exception&) {
      spdlog::warn("skipping unreadable record line in {}", path.string());
    }
  }
  return out;
}

json summarize_records(const std::vector<json>& records) {
  std::map<std::string, std::pair<std::size_t, std::size_t>> per;  // difficulty -> (correct, total)
  std::size_t correct = 0, gold_failed = 0, errors = 0, low_confidence = 0;
  for (const auto& r : records) {
    bool ex = r.value("ex", 0) == 1;
    correct += ex;
    auto& p = per[r.value("difficulty", "unknown")];
    p.first += ex;
    p.second += 1;
    gold_failed += r.value("gold_failed", false);
    errors += r.contains("error") && !r["error"].is_null();
    low_confidence += r.value("low_confidence", false);
  }
  json by = json::object();
  for (const auto& [d, p] : per)
    by[d] = {{"ex", static_cast<double>(p.first) / static_cast<double>(p.second)}, {"count", p.second}};
  return json{{"items", records.size()},
              {"correct", correct},
              {"ex", records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(records.size())},
              {"by_difficulty", by},
              {"gold_failed", gold_failed},
              {"errors", errors},
              {"low_confidence", low_confidence}};
}

namespace {

class Resources {
 public:
  Resources(const RunOptions& opts) : opts_(opts) {}

  std::shared_ptr<const DatabaseCatalog> catalog(const std::string& db_id) {
    std::lock_guard lock(mu_);
    auto it = catalogs_.find(db_id);
    if (it != catalogs_.end()) return it->second;
    auto c = std::make_shared<const DatabaseCatalog>(load_catalog_from_root(opts_.db_root, db_id, opts_.example_values));
    catalogs_[db_id] = c;
    return c;
  }

  std::shared_ptr<const ValueIndex> index(const std::string& db_id) {
    if (!opts_.index_dir) return nullptr;
    std::lock_guard lock(mu_);
    auto it = indexes_.find(db_id);
    if (it != indexes_.end()) return it->second;
    std::shared_ptr<const ValueIndex> idx;
    fs::path p = *opts_.index_dir / (db_id + ".jsonl");
    if (fs::exists(p)) {
      idx = std::make_shared<const ValueIndex>(ValueIndex::load(p));
    } else {
      spdlog::warn("no value index for database '{}' at {}; retrieval disabled for it", db_id, p.string());
    }
    indexes_[db_id] = idx;
    return idx;
  }

 private:
  const RunOptions& opts_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const DatabaseCatalog>> catalogs_;
  std::map<std::string, std::shared_ptr<const ValueIndex>> indexes_;
};

std::string outcome_name(ExecutionResult::Kind k) {
  switch (k) {
    case ExecutionResult::Kind::Rows: return "rows";
    case ExecutionResult::Kind::Error: return "error";
    case ExecutionResult::Kind::Timeout: return "timeout";
  }
  return "unknown";
}

std::string actions_string(const std::vector<ActionKind>& actions) {
  std::string s;
  for (std::size_t i = 0; i < actions.size(); ++i) s += (i ? ">" : "") + std::string(action_code(actions[i]));
  return s;
}

std::string safe_file_stem(const std::string& id) {
  std::string out;
  for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out.empty() ? "item" : out;
}

void write_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out) throw IoError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

json process_item(const BenchmarkItem& item, const RunOptions& opts, const RunServices& services,
                  Resources& resources) {
  const auto t0 = std::chrono::steady_clock::now();
  json rec;
  rec["question_id"] = item.question_id;
  rec["db_id"] = item.question.db_id;
  rec["difficulty"] = item.difficulty;
  rec["question"] = item.question.question;
  rec["hint"] = item.question.hint;
  rec["gold_sql"] = item.gold_sql;
  rec["mode"] = opts.mode == RunMode::Mcts ? "mcts" : "baseline";
  rec["predicted_sql"] = "";
  rec["ex"] = 0;
  rec["error"] = nullptr;

  CountingModel counted(services.model);
  try {
    auto catalog = resources.catalog(item.question.db_id);
    SqlExecutor exec(Database::open_readonly(database_path(opts.db_root, item.question.db_id)),
                     ExecOptions{opts.search.sql_timeout_secs, 10000});
    std::string predicted;
    if (opts.mode == RunMode::Baseline) {
      predicted = baseline_generate(item.question, *catalog, counted, services.prompts, opts.search.max_tokens);
    } else {
      auto index = resources.index(item.question.db_id);
      SearchDeps deps{*catalog, counted, exec, services.prompts, index.get(), services.embedder, {}, {}};
      SearchResult res = run_search(item.question, deps, opts.search);
      rec["keywords"] = res.keywords;
      json retrieved = json::array();
      for (const auto& rv : res.retrieved) {
        retrieved.push_back({{"table", rv.record.table},
                             {"column", rv.record.column},
                             {"value", rv.record.value},
                             {"edit_sim", rv.edit_sim},
                             {"semantic_sim", rv.semantic_sim ? json(*rv.semantic_sim) : json(nullptr)}});
      }
      rec["retrieved_values"] = std::move(retrieved);
      rec["rollouts"] = res.rollouts;
      rec["tree_nodes"] = res.tree.size();
      json trajectories = json::array();
      for (const auto& t : res.trajectories)
        trajectories.push_back(
            {{"actions", actions_string(t.actions)}, {"sql", t.final_sql}, {"reward", t.reward}, {"rollout", t.rollout_index}});
      rec["trajectories"] = std::move(trajectories);
      if (res.trajectories.empty()) {
        spdlog::warn("{}: search produced no trajectory; using the direct prompt", item.question_id);
        rec["fallback"] = "baseline";
        predicted = baseline_generate(item.question, *catalog, counted, services.prompts, opts.search.max_tokens);
      } else {
        FinalSelection sel = select_final_sql(res.trajectories, exec, opts.comparison);
        predicted = sel.sql;
        rec["low_confidence"] = sel.low_confidence;
        json candidates = json::array();
        for (const auto& c : sel.candidates)
          candidates.push_back({{"sql", c.sql},
                                {"reward", c.reward},
                                {"class_id", c.class_id},
                                {"class_size", c.class_size},
                                {"outcome", outcome_name(c.outcome)}});
        rec["candidates"] = std::move(candidates);
      }
      if (opts.write_traces) {
        fs::path dir = opts.output_dir / "traces";
        fs::create_directories(dir);
        json trace = tree_to_json(res.tree);
        trace["question_id"] = item.question_id;
        trace["question"] = item.question.question;
        trace["chosen_sql"] = predicted;
        write_atomic(dir / (safe_file_stem(item.question_id) + ".json"), trace.dump(2) + "\n");
      }
    }

    rec["predicted_sql"] = predicted;
    ExecutionResult gold = exec.run(item.gold_sql);
    ExecutionResult pred = predicted.empty() ? ExecutionResult::error("empty prediction") : exec.run(predicted);
    rec["gold_failed"] = !gold.ok();
    if (!gold.ok()) rec["gold_error"] = describe_result(gold);
    rec["predicted_outcome"] = outcome_name(pred.kind);
    rec["ex"] = results_equal(pred, gold, opts.comparison) ? 1 : 0;
    if (predicted.empty()) rec["error"] = "no SQL could be parsed from the model output";
  } catch (const std::exception& e) {
    spdlog::error("{}: {}", item.question_id, e.what());
    rec["error"] = e.what();
    rec["ex"] = 0;
  }
  rec["model_calls"] = counted.calls();
  rec["model_samples"] = counted.samples();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  rec["timing"] = {{"seconds", secs}};
  return rec;
}

}  // namespace

RunReport run_benchmark(const std::vector<BenchmarkItem>& items, const RunOptions& opts, const RunServices& services) {
  opts.search.validate();
  if (opts.output_dir.empty()) throw ContractViolation("run needs an output directory");
  fs::create_directories(opts.output_dir);
  const fs::path records_path = opts.output_dir / "records.jsonl";
  const auto t0 = std::chrono::steady_clock::now();

  std::set<std::string> ids;
  for (const auto& item : items)
    if (!ids.insert(item.question_id).second) throw IngestError("duplicate question_id " + item.question_id);

  std::map<std::string, json> done;
  if (opts.resume) {
    for (auto& r : read_records(records_path)) {
      std::string qid = r["question_id"].get<std::string>();
      if (ids.count(qid)) done[qid] = std::move(r);
    }
    spdlog::info("resuming: {} of {} items already recorded", done.size(), items.size());
  } else {
    std::ofstream truncate(records_path, std::ios::binary | std::ios::trunc);
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < items.size(); ++i)
    if (!done.count(items[i].question_id)) pending.push_back(i);

  Resources resources(opts);
  std::vector<json> fresh(items.size());
  std::mutex writer_mu;
  std::ofstream writer(records_path, std::ios::binary | std::ios::app);
  if (!writer) throw IoError("cannot append to " + records_path.string());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t k = next++; k < pending.size(); k = next++) {
      const auto& item = items[pending[k]];
      json rec = process_item(item, opts, services, resources);
      std::lock_guard lock(writer_mu);
      writer << rec.dump() << '\n';
      writer.flush();
      spdlog::info("[{}/{}] {} ex={}", k + 1, pending.size(), item.question_id, rec["ex"].get<int>());
      fresh[pending[k]] = std::move(rec);
    }
  };
  const std::size_t n_workers = std::max<std::size_t>(1, std::min(opts.workers, pending.size()));
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  writer.close();

  RunReport report;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto it = done.find(items[i].question_id);
    report.records.push_back(it != done.end() ? it->second : std::move(fresh[i]));
  }

  json config = {{"mode", opts.mode == RunMode::Mcts ? "mcts" : "baseline"},
                 {"search", to_json(opts.search)},
                 {"comparison", opts.comparison == ComparisonMode::Set ? "set" : "multiset"},
                 {"example_values", opts.example_values},
                 {"value_retrieval", opts.index_dir.has_value()},
                 {"extra", opts.extra_config}};
  json prompt_hashes = json::object();
  for (PromptId id : kAllPrompts) prompt_hashes[std::string(prompt_file_stem(id))] = services.prompts.sha256(id);
  config["prompts"] = std::move(prompt_hashes);

  report.summary = summarize_records(report.records);
  report.summary["config"] = std::move(config);
  report.summary["seed"] = opts.search.rng_seed;
  report.summary["timing"] = {
      {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};

  std::string records_text;
  json bird_predictions = json::object();
  std::string sql_lines;
  for (const auto& r : report.records) {
    records_text += r.dump() + "\n";
    std::string sql = text::collapse_whitespace(r.value("predicted_sql", ""));
    bird_predictions[r["question_id"].get<std::string>()] = sql + "\t----- bird -----\t" + r.value("db_id", "");
    sql_lines += (sql.empty() ? std::string("SELECT 0") : sql) + "\n";
  }
  write_atomic(records_path, records_text);
  write_atomic(opts.output_dir / "summary.json", report.summary.dump(2) + "\n");
  write_atomic(opts.output_dir / "predictions.json", bird_predictions.dump(2) + "\n");
  write_atomic(opts.output_dir / "predictions.sql", sql_lines);
  return report;
}

}  // namespace treesql
