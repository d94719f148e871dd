#include "treesql/core.hpp"

#include <algorithm>
#include <cmath>

#include "treesql/errors.hpp"

namespace treesql {

namespace {

using A = ActionKind;

// Action ordering table. Index 0 is the root row.
const std::vector<ActionKind>& successors(std::optional<ActionKind> last) {
  static const std::vector<ActionKind> root = {A::Rephrase, A::SchemaSelect, A::ValueIdent,
                                               A::FunctionIdent, A::SqlGenerate};
  static const std::vector<ActionKind> after_rephrase = {A::SchemaSelect, A::ValueIdent,
                                                         A::FunctionIdent, A::SqlGenerate};
  static const std::vector<ActionKind> after_schema = {A::ValueIdent, A::FunctionIdent,
                                                       A::SqlGenerate};
  static const std::vector<ActionKind> after_value = {A::SchemaSelect, A::FunctionIdent,
                                                      A::SqlGenerate};
  static const std::vector<ActionKind> after_function = {A::SchemaSelect, A::ValueIdent,
                                                         A::SqlGenerate};
  static const std::vector<ActionKind> after_generate = {A::SqlRevise, A::Terminate};
  static const std::vector<ActionKind> after_revise = {A::Terminate};
  static const std::vector<ActionKind> none;
  if (!last) return root;
  switch (*last) {
    case A::Rephrase: return after_rephrase;
    case A::SchemaSelect: return after_schema;
    case A::ValueIdent: return after_value;
    case A::FunctionIdent: return after_function;
    case A::SqlGenerate: return after_generate;
    case A::SqlRevise: return after_revise;
    case A::Terminate: return none;
  }
  return none;
}

bool contains(std::span<const ActionKind> h, ActionKind a) {
  return std::find(h.begin(), h.end(), a) != h.end();
}

void dfs(std::vector<ActionKind>& path, std::vector<std::vector<ActionKind>>& out) {
  for (ActionKind a : valid_next_actions(path)) {
    path.push_back(a);
    if (a == A::Terminate)
      out.push_back(path);
    else
      dfs(path, out);
    path.pop_back();
  }
}

}  // namespace

std::string_view action_code(ActionKind a) {
  switch (a) {
    case A::Rephrase: return "A1";
    case A::SchemaSelect: return "A2";
    case A::ValueIdent: return "A3";
    case A::FunctionIdent: return "A4";
    case A::SqlGenerate: return "A5";
    case A::SqlRevise: return "A6";
    case A::Terminate: return "A7";
  }
  return "A?";
}

std::string_view action_name(ActionKind a) {
  switch (a) {
    case A::Rephrase: return "rephrase";
    case A::SchemaSelect: return "schema_select";
    case A::ValueIdent: return "value_ident";
    case A::FunctionIdent: return "function_ident";
    case A::SqlGenerate: return "sql_generate";
    case A::SqlRevise: return "sql_revise";
    case A::Terminate: return "terminate";
  }
  return "unknown";
}

std::optional<ActionKind> parse_action(std::string_view text) {
  for (ActionKind a : kAllActions)
    if (text == action_code(a) || text == action_name(a)) return a;
  return std::nullopt;
}

std::vector<ActionKind> NodeState::history() const {
  std::vector<ActionKind> h;
  h.reserve(reasoning_log.size());
  for (const auto& step : reasoning_log) h.push_back(step.action);
  return h;
}

bool NodeState::terminated() const {
  return !reasoning_log.empty() && reasoning_log.back().action == A::Terminate;
}

void SearchConfig::validate() const {
  if (n_rollout < 1 || n_expansion < 1 || n_reward < 1 || n_revision < 1)
    throw ContractViolation("search config: counts must be >= 1");
  if (!(t_expansion >= 0.0) || !(t_reward >= 0.0))
    throw ContractViolation("search config: temperatures must be >= 0");
  auto unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!unit(eps_edit) || !unit(eps_semantic))
    throw ContractViolation("search config: thresholds must lie in [0,1]");
  if (!(uct_c >= 0.0) || !std::isfinite(uct_c))
    throw ContractViolation("search config: uct_c must be finite and >= 0");
  if (!(sql_timeout_secs > 0.0)) throw ContractViolation("search config: sql timeout must be > 0");
  if (values_per_column < 1) throw ContractViolation("search config: values_per_column must be >= 1");
}

bool is_legal_prefix(std::span<const ActionKind> history) {
  std::optional<ActionKind> last;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const auto& next = successors(last);
    if (std::find(next.begin(), next.end(), history[i]) == next.end()) return false;
    if (contains(history.first(i), history[i])) return false;
    last = history[i];
  }
  return true;
}

std::vector<ActionKind> valid_next_actions(std::span<const ActionKind> history) {
  if (!is_legal_prefix(history))
    throw ContractViolation("action history is not a legal trajectory prefix");
  std::optional<ActionKind> last;
  if (!history.empty()) last = history.back();
  std::vector<ActionKind> out;
  for (ActionKind a : successors(last))
    if (!contains(history, a)) out.push_back(a);
  return out;
}

std::vector<std::vector<ActionKind>> enumerate_trajectories() {
  std::vector<std::vector<ActionKind>> out;
  std::vector<ActionKind> path;
  dfs(path, out);
  return out;
}

}  // namespace treesql
