#include "treesql/reward_select.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <map>

#include "treesql/action_model.hpp"
#include "treesql/errors.hpp"

namespace treesql {

namespace {

std::vector<std::string> draw_samples(ChatModel& model, const CompletionRequest& req) {
  try {
    return model.complete(req);
  } catch (const TransportError& e) {
    spdlog::warn("reward sampling failed as a batch ({}); retrying sample by sample", e.what());
  } catch (const ProtocolError& e) {
    spdlog::warn("reward sampling failed as a batch ({}); retrying sample by sample", e.what());
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < req.n_samples; ++i) {
    CompletionRequest one = req;
    one.n_samples = 1;
    one.sample_offset = req.sample_offset + i;
    try {
      auto got = model.complete(one);
      if (!got.empty()) out.push_back(std::move(got.front()));
    } catch (const TransportError&) {
    } catch (const ProtocolError&) {
    }
  }
  return out;
}

std::string sql_from(const ActionArtifact& artifact) {
  if (auto* g = std::get_if<GeneratedSql>(&artifact)) return g->sql;
  if (auto* r = std::get_if<RevisedSql>(&artifact)) return r->sql;
  throw ParseError("artifact carries no SQL");
}

}  // namespace

RewardOutcome compute_reward(const NodeState& terminal, ChatModel& model, SqlExecutor& executor,
                             const SearchConfig& cfg, const DatabaseCatalog* catalog) {
  if (!terminal.sql) throw ContractViolation("reward requires a state with SQL");
  RewardOutcome out;
  const ExecutionResult final_result = executor.run(*terminal.sql);
  if (!final_result.ok()) return out;
  if (!terminal.sql_source || terminal.sql_source->prompt.empty()) {
    spdlog::warn("reward: no producing prompt recorded for the final SQL; reward 0");
    return out;
  }

  const ActionKind source = terminal.sql_source->action;
  CompletionRequest req{terminal.sql_source->prompt, cfg.t_reward, cfg.n_reward, cfg.max_tokens, "reward", 0};
  auto raws = draw_samples(model, req);
  if (raws.empty()) {
    spdlog::warn("reward: no samples could be obtained; reward 0");
    return out;
  }

  std::size_t matched = 0;
  for (const auto& raw : raws) {
    RewardSample sample;
    try {
      sample.sql = sql_from(parse_action_response(source, raw, catalog));
      sample.result = executor.run(sample.sql);
      sample.matches = results_equal(final_result, sample.result);
    } catch (const ParseError& e) {
      sample.result = ExecutionResult::error(std::string("unparseable sample: ") + e.what());
    }
    matched += sample.matches;
    out.samples.push_back(std::move(sample));
  }
  out.reward = static_cast<double>(matched) / static_cast<double>(out.samples.size());
  return out;
}

FinalSelection select_final_sql(const std::vector<Trajectory>& trajectories, SqlExecutor& executor,
                                ComparisonMode mode) {
  if (trajectories.empty()) throw ContractViolation("final selection needs at least one trajectory");

  // Distinct normalized SQL -> best reward among trajectories producing it.
  std::map<std::string, double> best_reward;
  for (const auto& t : trajectories) {
    std::string sql = normalize_sql(t.final_sql);
    auto [it, inserted] = best_reward.emplace(sql, t.reward);
    if (!inserted) it->second = std::max(it->second, t.reward);
  }

  FinalSelection sel;
  std::vector<ExecutionResult> results;
  std::vector<std::size_t> representatives;  // candidate index of each class's first member
  for (const auto& [sql, reward] : best_reward) {
    Candidate c;
    c.sql = sql;
    c.reward = reward;
    ExecutionResult r = executor.run(sql);
    c.outcome = r.kind;
    if (r.ok()) {
      for (std::size_t k = 0; k < representatives.size(); ++k) {
        if (results_equal(results[representatives[k]], r, mode)) {
          c.class_id = static_cast<int>(k);
          break;
        }
      }
      if (c.class_id < 0) {
        c.class_id = static_cast<int>(representatives.size());
        representatives.push_back(sel.candidates.size());
      }
    }
    results.push_back(std::move(r));
    sel.candidates.push_back(std::move(c));
  }

  std::vector<std::size_t> class_sizes(representatives.size(), 0);
  for (const auto& c : sel.candidates)
    if (c.class_id >= 0) ++class_sizes[c.class_id];
  for (auto& c : sel.candidates)
    if (c.class_id >= 0) c.class_size = class_sizes[c.class_id];

  auto ranks_before = [](const Candidate& a, const Candidate& b) {
    if (a.class_size != b.class_size) return a.class_size > b.class_size;
    if (a.reward != b.reward) return a.reward > b.reward;
    if (a.sql.size() != b.sql.size()) return a.sql.size() < b.sql.size();
    return a.sql < b.sql;
  };
  const Candidate* best = &sel.candidates.front();
  for (const auto& c : sel.candidates)
    if (ranks_before(c, *best)) best = &c;
  sel.sql = best->sql;
  sel.low_confidence = representatives.empty();
  return sel;
}

}  // namespace treesql
