#include "treesql/action_model.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <nlohmann/json.hpp>
#include <sstream>

#include "treesql/errors.hpp"
#include "treesql/text.hpp"

namespace treesql {

using nlohmann::json;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr std::string_view kReasoningKey = "chain_of_thought_reasoning";

std::string augmented_hint(const NLQuestion& q, const NodeState& state) {
  std::string hint = q.hint;
  if (state.value_notes) hint += "\n\nColumn value notes: " + *state.value_notes;
  if (state.function_notes) hint += "\n\nColumn function notes: " + *state.function_notes;
  return hint;
}

// Removes trailing commas before } or ] and escapes raw control characters
// inside string literals.
std::string sanitize_json(std::string_view in) {
  std::string out;
  out.reserve(in.size());
  bool in_string = false, escaped = false;
  for (std::size_t i = 0; i < in.size(); ++i) {
    char c = in[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
        out.push_back(c);
      } else if (c == '\\') {
        escaped = true;
        out.push_back(c);
      } else if (c == '"') {
        in_string = false;
        out.push_back(c);
      } else if (c == '\n') {
        out += "\\n";
      } else if (c == '\r') {
        out += "\\r";
      } else if (c == '\t') {
        out += "\\t";
      } else {
        out.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
      out.push_back(c);
    } else if (c == ',') {
      std::size_t j = i + 1;
      while (j < in.size() && std::isspace(static_cast<unsigned char>(in[j]))) ++j;
      if (j < in.size() && (in[j] == '}' || in[j] == ']')) continue;
      out.push_back(c);
    } else {
      out.push_back(c);
    }
  }
  return out;
}

json parse_object_payload(std::string_view raw) {
  std::vector<std::string> candidates;
  if (auto fenced = text::extract_json_object(raw)) candidates.push_back(*fenced);
  if (auto braced = text::extract_balanced_object(raw)) candidates.push_back(*braced);
  for (const auto& c : candidates) {
    try {
      json j = parse_json_lenient(c);
      if (j.is_object()) return j;
    } catch (const ParseError&) {
    }
  }
  throw ParseError("no JSON object found in model response");
}

std::string reasoning_of(const json& j) {
  auto it = j.find(kReasoningKey);
  if (it != j.end() && it->is_string()) return it->get<std::string>();
  return {};
}

std::string sql_of(const json& j) {
  auto it = j.find("sql_query");
  if (it == j.end() || !it->is_string()) throw ParseError("response has no \"sql_query\" string");
  std::string sql = text::trim(it->get<std::string>());
  if (sql.empty()) throw ParseError("response has an empty \"sql_query\"");
  return sql;
}

}  // namespace

ActionKind artifact_action(const ActionArtifact& artifact) {
  return std::visit(overloaded{
                        [](const RephrasedQuestion&) { return ActionKind::Rephrase; },
                        [](const SchemaSubset&) { return ActionKind::SchemaSelect; },
                        [](const ValueNotes&) { return ActionKind::ValueIdent; },
                        [](const FunctionNotes&) { return ActionKind::FunctionIdent; },
                        [](const GeneratedSql&) { return ActionKind::SqlGenerate; },
                        [](const RevisedSql&) { return ActionKind::SqlRevise; },
                        [](const Terminated&) { return ActionKind::Terminate; },
                    },
                    artifact);
}

std::string normalize_sql(std::string_view sql) {
  std::string s = text::collapse_whitespace(sql);
  while (!s.empty() && (s.back() == ';' || s.back() == ' ')) s.pop_back();
  return s;
}

std::string artifact_fingerprint(const ActionArtifact& artifact) {
  return std::visit(overloaded{
                        [](const RephrasedQuestion& a) { return text::collapse_whitespace(a.text); },
                        [](const SchemaSubset& a) {
                          std::string out;
                          for (const auto& [table, cols] : a.tables) {
                            std::vector<std::string> sorted = cols;
                            std::sort(sorted.begin(), sorted.end());
                            out += table + ":";
                            for (std::size_t i = 0; i < sorted.size(); ++i) out += (i ? "," : "") + sorted[i];
                            out += ";";
                          }
                          return out;
                        },
                        [](const ValueNotes& a) { return text::collapse_whitespace(a.text); },
                        [](const FunctionNotes& a) { return text::collapse_whitespace(a.text); },
                        [](const GeneratedSql& a) { return normalize_sql(a.sql); },
                        [](const RevisedSql& a) { return normalize_sql(a.sql); },
                        [](const Terminated&) { return std::string(); },
                    },
                    artifact);
}

NodeState apply_artifact(const NodeState& state, const ActionArtifact& artifact, std::string raw_output,
                         std::optional<std::string> producing_prompt) {
  NodeState next = state;
  const ActionKind kind = artifact_action(artifact);
  std::visit(overloaded{
                 [&](const RephrasedQuestion& a) { next.rephrased_question = a.text; },
                 [&](const SchemaSubset& a) { next.selected_schema = a.tables; },
                 [&](const ValueNotes& a) { next.value_notes = a.text; },
                 [&](const FunctionNotes& a) { next.function_notes = a.text; },
                 [&](const GeneratedSql& a) {
                   next.sql = a.sql;
                   next.sql_source = SqlProvenance{kind, producing_prompt.value_or("")};
                 },
                 [&](const RevisedSql& a) {
                   next.sql = a.sql;
                   next.revision_count = a.rounds_used;
                   next.sql_source = SqlProvenance{kind, producing_prompt.value_or("")};
                 },
                 [&](const Terminated&) {},
             },
             artifact);
  next.reasoning_log.push_back(ReasoningStep{kind, std::move(raw_output)});
  return next;
}

PromptId prompt_for(ActionKind action) {
  switch (action) {
    case ActionKind::Rephrase: return PromptId::Rephrase;
    case ActionKind::SchemaSelect: return PromptId::SchemaSelect;
    case ActionKind::ValueIdent: return PromptId::ValueIdent;
    case ActionKind::FunctionIdent: return PromptId::FunctionIdent;
    case ActionKind::SqlGenerate: return PromptId::SqlGenerate;
    case ActionKind::SqlRevise: return PromptId::SqlRevise;
    case ActionKind::Terminate: break;
  }
  throw ContractViolation("terminate is structural and has no prompt");
}

std::string build_action_prompt(ActionKind action, const NLQuestion& q, const NodeState& state,
                                const DatabaseCatalog& catalog, std::span<const ValueRecord> retrieved_values,
                                const PromptLibrary& prompts, const std::optional<RevisionInput>& revision) {
  if (action == ActionKind::Terminate) throw ContractViolation("terminate is structural and has no prompt");
  auto history = state.history();
  auto valid = valid_next_actions(history);
  if (std::find(valid.begin(), valid.end(), action) == valid.end())
    throw ContractViolation(std::string(action_code(action)) + " is not a valid next action here");

  std::map<std::string, std::string> vars;
  vars["QUESTION"] = state.rephrased_question.value_or(q.question);
  vars["HINT"] = augmented_hint(q, state);
  // Schema selection defines the subset, so it always sees the whole catalog.
  std::optional<SchemaSelection> selection;
  if (action != ActionKind::SchemaSelect) selection = state.selected_schema;
  vars["SCHEMA_CONTEXT"] = render_schema_context(catalog, selection, retrieved_values);

  if (action == ActionKind::SqlRevise) {
    if (!state.sql) throw ContractViolation("sql revision requires a generated SQL query");
    RevisionInput in = revision.value_or(RevisionInput{*state.sql, "(not executed)"});
    vars["SQL"] = in.sql;
    vars["EXECUTION_RESULT"] = in.execution_result;
  }
  return fill_template(prompts.get(prompt_for(action)), vars);
}

json parse_json_lenient(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
  }
  try {
    return json::parse(sanitize_json(text));
  } catch (const json::exception& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
}

ActionArtifact parse_action_response(ActionKind action, std::string_view raw, const DatabaseCatalog* catalog) {
  switch (action) {
    case ActionKind::Rephrase: {
      constexpr std::string_view marker = "Rephrased Question:";
      std::string_view body = raw;
      if (auto pos = raw.rfind(marker); pos != std::string_view::npos) body = raw.substr(pos + marker.size());
      std::string t = text::trim(body);
      if (t.empty()) throw ParseError("empty rephrased question");
      return RephrasedQuestion{std::move(t)};
    }
    case ActionKind::SchemaSelect: {
      json j = parse_object_payload(raw);
      SchemaSubset subset;
      subset.rationale = reasoning_of(j);
      for (const auto& [key, value] : j.items()) {
        if (key == kReasoningKey || !value.is_array()) continue;
        auto& cols = subset.tables[key];
        for (const auto& c : value)
          if (c.is_string()) cols.push_back(c.get<std::string>());
      }
      if (catalog) {
        subset.dropped = canonicalize_selection(*catalog, subset.tables);
        for (const auto& name : subset.dropped) spdlog::warn("schema selection: dropping unknown name '{}'", name);
      } else {
        for (auto& [_, cols] : subset.tables) std::sort(cols.begin(), cols.end());
      }
      std::erase_if(subset.tables, [](const auto& kv) { return kv.second.empty(); });
      if (subset.tables.empty()) throw ParseError("schema selection names no known columns");
      return subset;
    }
    case ActionKind::ValueIdent:
    case ActionKind::FunctionIdent: {
      std::string t = text::trim(raw);
      if (t.empty()) throw ParseError("empty identification notes");
      if (action == ActionKind::ValueIdent) return ValueNotes{std::move(t)};
      return FunctionNotes{std::move(t)};
    }
    case ActionKind::SqlGenerate: {
      json j = parse_object_payload(raw);
      return GeneratedSql{sql_of(j), reasoning_of(j)};
    }
    case ActionKind::SqlRevise: {
      json j = parse_object_payload(raw);
      return RevisedSql{sql_of(j), reasoning_of(j), 0};
    }
    case ActionKind::Terminate: return Terminated{};
  }
  throw ContractViolation("unknown action");
}

std::vector<ActionOutcome> run_action(ActionKind action, const NodeState& state, const ActionContext& ctx) {
  const auto& cfg = ctx.config;
  std::vector<ActionOutcome> out;
  if (action == ActionKind::Terminate) {
    auto valid = valid_next_actions(state.history());
    if (std::find(valid.begin(), valid.end(), action) == valid.end())
      throw ContractViolation("terminate is not valid here");
    out.push_back(ActionOutcome{Terminated{}, {}, {}});
    return out;
  }

  if (action != ActionKind::SqlRevise) {
    std::string prompt =
        build_action_prompt(action, ctx.question, state, ctx.catalog, ctx.retrieved_values, ctx.prompts);
    CompletionRequest req{prompt, cfg.t_expansion, cfg.n_expansion, cfg.max_tokens, std::string(action_name(action)), 0};
    auto samples = ctx.model.complete(req);
    for (auto& raw : samples) {
      try {
        out.push_back(ActionOutcome{parse_action_response(action, raw, &ctx.catalog), raw, prompt});
      } catch (const ParseError& e) {
        spdlog::debug("{}: discarding unparseable sample: {}", action_code(action), e.what());
      }
    }
    return out;
  }

  if (!state.sql) throw ContractViolation("sql revision requires a generated SQL query");
  for (std::size_t j = 0; j < cfg.n_expansion; ++j) {
    std::string current = *state.sql;
    ExecutionResult result = ctx.executor.run(current);
    std::size_t rounds = 0;
    std::optional<ActionOutcome> last;
    do {
      std::string prompt = build_action_prompt(action, ctx.question, state, ctx.catalog, ctx.retrieved_values,
                                               ctx.prompts, RevisionInput{current, describe_result(result)});
      CompletionRequest req{prompt, cfg.t_expansion, 1, cfg.max_tokens, std::string(action_name(action)),
                            j * cfg.n_revision + rounds};
      std::string raw = ctx.model.complete(req).at(0);
      ++rounds;
      try {
        auto revised = std::get<RevisedSql>(parse_action_response(action, raw, &ctx.catalog));
        current = revised.sql;
        last = ActionOutcome{std::move(revised), std::move(raw), std::move(prompt)};
      } catch (const ParseError& e) {
        spdlog::debug("A6: discarding unparseable revision: {}", e.what());
        continue;
      }
      result = ctx.executor.run(current);
    } while (rounds < cfg.n_revision && !result.ok());
    if (!last) continue;
    std::get<RevisedSql>(last->artifact).rounds_used = rounds;
    out.push_back(std::move(*last));
  }
  return out;
}

std::string build_keyword_prompt(const NLQuestion& q, const PromptLibrary& prompts) {
  return fill_template(prompts.get(PromptId::KeywordExtract), {{"QUESTION", q.question}, {"HINT", q.hint}});
}

std::vector<std::string> parse_keyword_list(std::string_view raw) {
  for (std::size_t open = raw.find('['); open != std::string_view::npos; open = raw.find('[', open + 1)) {
    std::vector<std::string> items;
    std::size_t i = open + 1;
    bool closed = false, bad = false;
    while (i < raw.size()) {
      char c = raw[i];
      if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
        ++i;
      } else if (c == ']') {
        closed = true;
        break;
      } else if (c == '"' || c == '\'') {
        const char quote = c;
        std::string item;
        ++i;
        bool terminated = false;
        while (i < raw.size()) {
          if (raw[i] == '\\' && i + 1 < raw.size()) {
            item.push_back(raw[i + 1]);
            i += 2;
          } else if (raw[i] == quote) {
            ++i;
            terminated = true;
            break;
          } else {
            item.push_back(raw[i++]);
          }
        }
        if (!terminated) {
          bad = true;
          break;
        }
        item = text::trim(item);
        if (!item.empty()) items.push_back(std::move(item));
      } else {
        // Unquoted token (lenient): read to the next separator.
        std::size_t end = raw.find_first_of(",]", i);
        if (end == std::string_view::npos) {
          bad = true;
          break;
        }
        std::string item = text::trim(raw.substr(i, end - i));
        if (!item.empty()) items.push_back(std::move(item));
        i = end;
      }
    }
    if (closed && !bad) return items;
  }
  return {};
}

std::vector<std::string> extract_keywords(const NLQuestion& q, ChatModel& model, const PromptLibrary& prompts) {
  CompletionRequest req{build_keyword_prompt(q, prompts), 0.0, 1, 1024, "keyword_extract", 0};
  auto raw = model.complete(req);
  return parse_keyword_list(raw.at(0));
}

}  // namespace treesql
