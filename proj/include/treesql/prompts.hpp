#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

namespace treesql {

enum class PromptId {
  Rephrase,
  SchemaSelect,
  ValueIdent,
  FunctionIdent,
  SqlGenerate,
  SqlRevise,
  KeywordExtract,
  Baseline,
};

inline constexpr std::array<PromptId, 8> kAllPrompts = {
    PromptId::Rephrase,   PromptId::SchemaSelect, PromptId::ValueIdent,     PromptId::FunctionIdent,
    PromptId::SqlGenerate, PromptId::SqlRevise,   PromptId::KeywordExtract, PromptId::Baseline};

/// Asset file stem, e.g. "schema_select" for schema_select.txt.
std::string_view prompt_file_stem(PromptId id);

/// Prompt templates with {QUESTION}, {HINT}, {SCHEMA_CONTEXT} (and for
/// revision {SQL}, {EXECUTION_RESULT}) placeholders. The built-in set is
/// compiled from prompts/*.txt; a directory can override any subset.
class PromptLibrary {
 public:
  static PromptLibrary builtin();
  /// Files missing from `dir` keep their built-in text.
  static PromptLibrary from_directory(const std::filesystem::path& dir);

  const std::string& get(PromptId id) const;
  std::string sha256(PromptId id) const;

 private:
  std::map<PromptId, std::string> templates_;
};

/// The template a filled prompt was built from, recognised by the literal
/// text before its first placeholder.
std::optional<PromptId> identify_prompt(std::string_view prompt, const PromptLibrary& prompts);

/// Single-pass placeholder substitution; substituted text is never rescanned,
/// so values that themselves contain "{QUESTION}" are inserted verbatim.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace treesql
