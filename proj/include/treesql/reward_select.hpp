#pragma once

#include <string>
#include <vector>

#include "treesql/catalog.hpp"
#include "treesql/core.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/mcts.hpp"
#include "treesql/sql_exec.hpp"

namespace treesql {

struct RewardSample {
  /// Empty when the completion did not parse.
  std::string sql;
  ExecutionResult result;
  bool matches = false;
};

struct RewardOutcome {
  double reward = 0.0;
  std::vector<RewardSample> samples;
};

/// Fraction of N_reward re-sampled SQLs (from the prompt that produced the
/// final SQL, at T_reward) whose execution equals the final SQL's. A final
/// SQL that errors or times out scores 0 without sampling.
RewardOutcome compute_reward(const NodeState& terminal, ChatModel& model, SqlExecutor& executor,
                             const SearchConfig& cfg, const DatabaseCatalog* catalog = nullptr);

struct Candidate {
  std::string sql;
  double reward = 0.0;
  std::size_t class_size = 0;
  /// Index of the equivalence class; -1 for failed executions.
  int class_id = -1;
  ExecutionResult::Kind outcome = ExecutionResult::Kind::Rows;
};

struct FinalSelection {
  std::string sql;
  bool low_confidence = false;
  std::vector<Candidate> candidates;
};

/// Majority vote over the execution results of distinct trajectory SQLs.
/// Ties go to higher reward, then shorter text, then lexicographic order.
/// When every candidate fails, the highest-reward one is returned and
/// flagged low-confidence. Throws ContractViolation on an empty list.
FinalSelection select_final_sql(const std::vector<Trajectory>& trajectories, SqlExecutor& executor,
                                ComparisonMode mode = ComparisonMode::Set);

}  // namespace treesql
