#include "treesql/prompts.hpp"

#include <fstream>
#include <sstream>

#include "treesql/errors.hpp"
#include "treesql/text.hpp"

namespace treesql {

namespace detail {
extern const std::string_view kBuiltinPrompts[];
}

std::string_view prompt_file_stem(PromptId id) {
  switch (id) {
    case PromptId::Rephrase: return "rephrase";
    case PromptId::SchemaSelect: return "schema_select";
    case PromptId::ValueIdent: return "value_ident";
    case PromptId::FunctionIdent: return "function_ident";
    case PromptId::SqlGenerate: return "sql_generate";
    case PromptId::SqlRevise: return "sql_revise";
    case PromptId::KeywordExtract: return "keyword_extract";
    case PromptId::Baseline: return "baseline";
  }
  return "unknown";
}

PromptLibrary PromptLibrary::builtin() {
  PromptLibrary lib;
  for (std::size_t i = 0; i < kAllPrompts.size(); ++i)
    lib.templates_[kAllPrompts[i]] = std::string(detail::kBuiltinPrompts[i]);
  return lib;
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
  std::error_code ec;
  if (!std::filesystem::is_directory(dir, ec)) throw IoError("prompt directory not found: " + dir.string());
  PromptLibrary lib = builtin();
  for (PromptId id : kAllPrompts) {
    auto path = dir / (std::string(prompt_file_stem(id)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::ostringstream ss;
    ss << in.rdbuf();
    lib.templates_[id] = ss.str();
  }
  return lib;
}

const std::string& PromptLibrary::get(PromptId id) const { return templates_.at(id); }

std::string PromptLibrary::sha256(PromptId id) const { return text::sha256_hex(get(id)); }

std::optional<PromptId> identify_prompt(std::string_view prompt, const PromptLibrary& prompts) {
  std::optional<PromptId> best;
  std::size_t best_len = 0;
  for (PromptId id : kAllPrompts) {
    std::string_view tmpl = prompts.get(id);
    std::string_view head = tmpl.substr(0, tmpl.find('{'));
    if (head.size() > best_len && prompt.starts_with(head)) {
      best = id;
      best_len = head.size();
    }
  }
  return best;
}

std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = vars.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != vars.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

}  // namespace treesql
