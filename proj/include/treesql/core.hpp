#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace treesql {

/// The seven reasoning actions. Terminate closes a trajectory and never calls the model.
enum class ActionKind : std::uint8_t {
  Rephrase = 1,
  SchemaSelect = 2,
  ValueIdent = 3,
  FunctionIdent = 4,
  SqlGenerate = 5,
  SqlRevise = 6,
  Terminate = 7,
};

inline constexpr std::array<ActionKind, 7> kAllActions = {
    ActionKind::Rephrase,    ActionKind::SchemaSelect, ActionKind::ValueIdent,
    ActionKind::FunctionIdent, ActionKind::SqlGenerate, ActionKind::SqlRevise,
    ActionKind::Terminate};

/// "A1".."A7".
std::string_view action_code(ActionKind a);
/// Human-readable name, e.g. "schema_select".
std::string_view action_name(ActionKind a);
/// Accepts either the code or the name.
std::optional<ActionKind> parse_action(std::string_view text);

struct NLQuestion {
  std::string question;
  std::string hint;
  std::string db_id;
};

/// table -> columns, both spelled as in the catalog. Ordered so that
/// serializations are canonical.
using SchemaSelection = std::map<std::string, std::vector<std::string>>;

struct ReasoningStep {
  ActionKind action;
  std::string raw_output;
};

/// Which prompt produced the current SQL; reward sampling re-issues it.
struct SqlProvenance {
  ActionKind action = ActionKind::SqlGenerate;
  std::string prompt;
};

/// Artifacts accumulated along one root-to-node path.
struct NodeState {
  std::optional<std::string> rephrased_question;
  std::optional<SchemaSelection> selected_schema;
  std::optional<std::string> value_notes;
  std::optional<std::string> function_notes;
  std::optional<std::string> sql;
  std::size_t revision_count = 0;
  std::vector<ReasoningStep> reasoning_log;
  std::optional<SqlProvenance> sql_source;

  std::vector<ActionKind> history() const;
  bool terminated() const;
};

enum class RetrievalMode { And, Or };

struct SearchConfig {
  std::size_t n_rollout = 24;
  std::size_t n_expansion = 3;
  double t_expansion = 0.8;
  std::size_t n_reward = 5;
  double t_reward = 1.0;
  std::size_t n_revision = 10;
  double uct_c = 1.4142135623730951;
  double eps_edit = 0.3;
  double eps_semantic = 0.6;
  double sql_timeout_secs = 30.0;
  std::uint64_t rng_seed = 0;

  RetrievalMode retrieval_mode = RetrievalMode::And;
  std::size_t values_per_column = 3;
  std::size_t max_tokens = 2048;

  /// Throws ContractViolation when a field is out of range.
  void validate() const;
};

/// Table-driven successor set of the last action, minus actions already taken.
/// Throws ContractViolation for a history that is not a legal prefix.
std::vector<ActionKind> valid_next_actions(std::span<const ActionKind> history);

/// True when `history` is a legal trajectory prefix.
bool is_legal_prefix(std::span<const ActionKind> history);

/// Every legal action sequence ending in Terminate.
std::vector<std::vector<ActionKind>> enumerate_trajectories();

}  // namespace treesql
