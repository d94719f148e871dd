#pragma once

#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "treesql/catalog.hpp"
#include "treesql/core.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/prompts.hpp"
#include "treesql/sql_exec.hpp"

namespace treesql {

struct RephrasedQuestion {
  std::string text;
};
struct SchemaSubset {
  SchemaSelection tables;
  std::string rationale;
  /// Model-proposed names that are not in the catalog.
  std::vector<std::string> dropped;
};
struct ValueNotes {
  std::string text;
};
struct FunctionNotes {
  std::string text;
};
struct GeneratedSql {
  std::string sql;
  std::string rationale;
};
struct RevisedSql {
  std::string sql;
  std::string rationale;
  std::size_t rounds_used = 0;
};
struct Terminated {};

using ActionArtifact =
    std::variant<RephrasedQuestion, SchemaSubset, ValueNotes, FunctionNotes, GeneratedSql, RevisedSql, Terminated>;

ActionKind artifact_action(const ActionArtifact& artifact);

/// Canonical form used to collapse duplicate children: whitespace-collapsed
/// text for free-text artifacts and SQL, sorted table:columns for schema subsets.
std::string artifact_fingerprint(const ActionArtifact& artifact);

/// SQL text with whitespace collapsed and trailing semicolons removed.
std::string normalize_sql(std::string_view sql);

/// Returns `state` extended by one step.
NodeState apply_artifact(const NodeState& state, const ActionArtifact& artifact, std::string raw_output,
                         std::optional<std::string> producing_prompt);

/// The failing SQL and its execution outcome for a revision prompt.
struct RevisionInput {
  std::string sql;
  std::string execution_result;
};

/// Everything an action needs besides the node state.
struct ActionContext {
  const NLQuestion& question;
  const DatabaseCatalog& catalog;
  std::span<const ValueRecord> retrieved_values;
  const SearchConfig& config;
  ChatModel& model;
  SqlExecutor& executor;
  const PromptLibrary& prompts;
};

PromptId prompt_for(ActionKind action);

/// Instantiates the action's template. Throws ContractViolation for
/// Terminate, for an action that is not legal after the state's history, and
/// for a revision without SQL.
std::string build_action_prompt(ActionKind action, const NLQuestion& q, const NodeState& state,
                                const DatabaseCatalog& catalog, std::span<const ValueRecord> retrieved_values,
                                const PromptLibrary& prompts,
                                const std::optional<RevisionInput>& revision = std::nullopt);

/// Parses one completion. When `catalog` is given, schema names are mapped
/// onto catalog spelling and unknown ones dropped. Throws ParseError.
ActionArtifact parse_action_response(ActionKind action, std::string_view raw,
                                     const DatabaseCatalog* catalog = nullptr);

/// JSON parse that tolerates trailing commas and raw control characters
/// inside strings. Throws ParseError.
nlohmann::json parse_json_lenient(std::string_view text);

struct ActionOutcome {
  ActionArtifact artifact;
  std::string raw;
  /// Prompt whose completion produced the artifact (empty for Terminate).
  std::string prompt;
};

/// Executes one action with N_expansion samples. Samples that fail to parse
/// are discarded. Revision runs an execute-and-repair loop per sample of up
/// to N_revision rounds. Transport errors propagate.
std::vector<ActionOutcome> run_action(ActionKind action, const NodeState& state, const ActionContext& ctx);

std::string build_keyword_prompt(const NLQuestion& q, const PromptLibrary& prompts);

/// Reads the first bracketed list of quoted strings. Unparseable input
/// yields an empty list.
std::vector<std::string> parse_keyword_list(std::string_view raw);

/// One temperature-0 completion of the keyword prompt.
std::vector<std::string> extract_keywords(const NLQuestion& q, ChatModel& model, const PromptLibrary& prompts);

}  // namespace treesql
