#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "treesql/catalog.hpp"
#include "treesql/config.hpp"
#include "treesql/core.hpp"
#include "treesql/errors.hpp"
#include "treesql/harness.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/mcts.hpp"
#include "treesql/prompts.hpp"
#include "treesql/reward_select.hpp"
#include "treesql/sql_exec.hpp"
#include "treesql/value_index.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace treesql;

namespace {

// Python callable (prompt, temperature, n, sample_offset) -> list[str].
class PyChatModel : public ChatModel {
 public:
  explicit PyChatModel(py::function fn) : fn_(std::move(fn)) {}
  ~PyChatModel() override {
    py::gil_scoped_acquire gil;
    fn_ = py::function();
  }

  std::vector<std::string> complete(const CompletionRequest& req) override {
    py::gil_scoped_acquire gil;
    py::object out = fn_(req.prompt, req.temperature, req.n_samples, req.sample_offset);
    if (py::isinstance<py::str>(out)) return std::vector<std::string>(req.n_samples, out.cast<std::string>());
    auto samples = out.cast<std::vector<std::string>>();
    if (samples.size() != req.n_samples)
      throw ProtocolError("model callable returned " + std::to_string(samples.size()) + " samples, expected " +
                          std::to_string(req.n_samples));
    return samples;
  }

 private:
  py::function fn_;
};

std::vector<ActionKind> parse_actions(const std::vector<std::string>& codes) {
  std::vector<ActionKind> out;
  for (const auto& c : codes) {
    auto a = parse_action(c);
    if (!a) throw ContractViolation("unknown action '" + c + "'");
    out.push_back(*a);
  }
  return out;
}

std::vector<std::string> action_codes(const std::vector<ActionKind>& actions) {
  std::vector<std::string> out;
  for (auto a : actions) out.emplace_back(action_code(a));
  return out;
}

SearchConfig config_from_json(const std::string& overrides) {
  SearchConfig cfg;
  if (overrides.empty()) return cfg;
  auto j = nlohmann::json::parse(overrides);
  std::string ini = "[search]\n";
  for (const auto& [k, v] : j.items()) ini += k + " = " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
  return parse_config(ini).search;
}

py::object cell_to_py(const Cell& c) {
  return std::visit(
      [](const auto& v) -> py::object {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::monostate>) return py::none();
        else if constexpr (std::is_same_v<T, std::string>) return py::str(v);
        else return py::cast(v);
      },
      c);
}

}  // namespace

PYBIND11_MODULE(_treesql, m) {
  m.doc() = "Tree-search text-to-SQL core";

  py::register_exception<ContractViolation>(m, "ContractViolation", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<IngestError>(m, "IngestError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("valid_next_actions",
        [](const std::vector<std::string>& history) { return action_codes(valid_next_actions(parse_actions(history))); },
        py::arg("history"));
  m.def("is_legal_prefix", [](const std::vector<std::string>& h) { return is_legal_prefix(parse_actions(h)); });
  m.def("enumerate_trajectories", [] {
    std::vector<std::vector<std::string>> out;
    for (const auto& t : enumerate_trajectories()) out.push_back(action_codes(t));
    return out;
  });
  m.def("action_name", [](const std::string& code) {
    auto a = parse_action(code);
    if (!a) throw ContractViolation("unknown action '" + code + "'");
    return std::string(action_name(*a));
  });

  m.def("uct_score", py::overload_cast<double, std::size_t, std::size_t, double>(&uct_score), py::arg("q"),
        py::arg("n"), py::arg("parent_visits"), py::arg("c") = 1.4142135623730951);
  m.def("default_config_json", [] { return to_json(SearchConfig{}).dump(); });
  m.def("config_json", [](const std::string& overrides) { return to_json(config_from_json(overrides)).dump(); },
        py::arg("overrides") = "");

  m.def("shingles", &shingles, py::arg("value"), py::arg("n") = 3);
  m.def("exact_jaccard", &exact_jaccard, py::arg("a"), py::arg("b"), py::arg("n") = 3);
  m.def(
      "minhash_signature",
      [](const std::string& value, std::size_t k, std::uint64_t seed) {
        MinHashParams p;
        p.num_permutations = k;
        p.bands = 1;
        p.rows_per_band = k;
        p.seed = seed;
        return MinHasher(p).sign(value);
      },
      py::arg("value"), py::arg("num_permutations") = 128, py::arg("seed") = 1);
  m.def("estimate_jaccard", &estimate_jaccard);
  m.def("edit_similarity", &edit_similarity);
  m.def("parse_baseline_sql", [](const std::string& raw) { return parse_baseline_sql(raw); });

  py::class_<ExecutionResult>(m, "ExecutionResult")
      .def_property_readonly("kind",
                             [](const ExecutionResult& r) {
                               switch (r.kind) {
                                 case ExecutionResult::Kind::Rows: return "rows";
                                 case ExecutionResult::Kind::Error: return "error";
                                 case ExecutionResult::Kind::Timeout: return "timeout";
                               }
                               return "unknown";
                             })
      .def_property_readonly("ok", &ExecutionResult::ok)
      .def_property_readonly("rows",
                             [](const ExecutionResult& r) {
                               py::list rows;
                               for (const auto& row : r.rows) {
                                 py::list cells;
                                 for (const auto& c : row) cells.append(cell_to_py(c));
                                 rows.append(py::tuple(cells));
                               }
                               return rows;
                             })
      .def_readonly("truncated", &ExecutionResult::truncated)
      .def_readonly("message", &ExecutionResult::message)
      .def("__repr__", [](const ExecutionResult& r) { return "ExecutionResult(" + describe_result(r) + ")"; });

  py::class_<Database>(m, "Database")
      .def(py::init([](const fs::path& p) { return Database::open_readonly(p); }), py::arg("path"))
      .def(
          "execute",
          [](const Database& db, const std::string& sql, double timeout, std::size_t row_cap) {
            py::gil_scoped_release release;
            return execute_sql(sql, db, ExecOptions{timeout, row_cap});
          },
          py::arg("sql"), py::arg("timeout_secs") = 30.0, py::arg("row_cap") = 10000)
      .def_property_readonly("path", &Database::path);

  m.def(
      "results_equal",
      [](const ExecutionResult& a, const ExecutionResult& b, bool multiset) {
        return results_equal(a, b, multiset ? ComparisonMode::Multiset : ComparisonMode::Set);
      },
      py::arg("a"), py::arg("b"), py::arg("multiset") = false);

  m.def(
      "build_value_index",
      [](const fs::path& db_root, const std::string& db_id, const fs::path& out) {
        py::gil_scoped_release release;
        auto catalog = load_catalog_from_root(db_root, db_id);
        auto db = Database::open_readonly(database_path(db_root, db_id));
        auto index = build_value_index(catalog, db);
        index.save(out);
        return index.size();
      },
      py::arg("db_root"), py::arg("db_id"), py::arg("out"));

  m.def(
      "retrieve_values",
      [](const fs::path& index_path, const std::vector<std::string>& keywords, double eps_edit, bool or_mode) {
        auto index = ValueIndex::load(index_path);
        RetrievalOptions opts;
        opts.eps_edit = eps_edit;
        opts.mode = or_mode ? RetrievalMode::Or : RetrievalMode::And;
        std::vector<std::tuple<std::string, std::string, std::string, double>> out;
        for (const auto& r : retrieve_values(index, keywords, nullptr, opts))
          out.emplace_back(r.record.table, r.record.column, r.record.value, r.edit_sim);
        return out;
      },
      py::arg("index_path"), py::arg("keywords"), py::arg("eps_edit") = 0.3, py::arg("or_mode") = false);

  m.def(
      "search_json",
      [](const std::string& question, const std::string& hint, const fs::path& db_root, const std::string& db_id,
         py::function model_fn, const std::string& config, std::optional<fs::path> index_path) {
        PyChatModel model(std::move(model_fn));
        SearchConfig cfg = config_from_json(config);
        py::gil_scoped_release release;
        auto catalog = load_catalog_from_root(db_root, db_id);
        SqlExecutor exec(Database::open_readonly(database_path(db_root, db_id)),
                         ExecOptions{cfg.sql_timeout_secs, 10000});
        auto prompts = PromptLibrary::builtin();
        std::optional<ValueIndex> index;
        if (index_path) index = ValueIndex::load(*index_path);
        SearchDeps deps{catalog, model, exec, prompts, index ? &*index : nullptr, nullptr, {}, {}};
        NLQuestion q{question, hint, db_id};
        SearchResult res = run_search(q, deps, cfg);
        nlohmann::json out;
        out["keywords"] = res.keywords;
        out["rollouts"] = res.rollouts;
        out["trajectories"] = nlohmann::json::array();
        for (const auto& t : res.trajectories)
          out["trajectories"].push_back(
              {{"actions", action_codes(t.actions)}, {"sql", t.final_sql}, {"reward", t.reward}});
        out["sql"] = nullptr;
        if (!res.trajectories.empty()) {
          auto sel = select_final_sql(res.trajectories, exec);
          out["sql"] = sel.sql;
          out["low_confidence"] = sel.low_confidence;
        }
        out["tree"] = tree_to_json(res.tree);
        return out.dump();
      },
      py::arg("question"), py::arg("hint"), py::arg("db_root"), py::arg("db_id"), py::arg("model"),
      py::arg("config") = "", py::arg("index_path") = py::none());

  m.def(
      "run_benchmark_json",
      [](const fs::path& dataset, const std::string& format, const fs::path& db_root, const fs::path& out_dir,
         py::function model_fn, const std::string& mode, const std::string& config,
         std::optional<fs::path> index_dir, std::size_t workers, bool resume, bool traces) {
        auto fmt = parse_dataset_format(format);
        if (!fmt) throw IngestError("unknown dataset format '" + format + "'");
        PyChatModel model(std::move(model_fn));
        RunOptions opts;
        opts.search = config_from_json(config);
        opts.mode = mode == "baseline" ? RunMode::Baseline : RunMode::Mcts;
        opts.db_root = db_root;
        opts.index_dir = index_dir;
        opts.output_dir = out_dir;
        opts.workers = workers;
        opts.resume = resume;
        opts.write_traces = traces;
        py::gil_scoped_release release;
        auto items = load_dataset(dataset, *fmt);
        auto prompts = PromptLibrary::builtin();
        return run_benchmark(items, opts, RunServices{model, nullptr, prompts}).summary.dump();
      },
      py::arg("dataset"), py::arg("format"), py::arg("db_root"), py::arg("out_dir"), py::arg("model"),
      py::arg("mode") = "mcts", py::arg("config") = "", py::arg("index_dir") = py::none(), py::arg("workers") = 1,
      py::arg("resume") = false, py::arg("traces") = false);

  m.def("prompt_template", [](const std::string& stem) {
    auto prompts = PromptLibrary::builtin();
    for (PromptId id : kAllPrompts)
      if (prompt_file_stem(id) == stem) return prompts.get(id);
    throw ContractViolation("unknown prompt '" + stem + "'");
  });
}
