#include <doctest.h>

#include <fstream>
#include <nlohmann/json.hpp>

#include "support.hpp"
#include "treesql/action_model.hpp"
#include "treesql/catalog.hpp"
#include "treesql/errors.hpp"
#include "treesql/text.hpp"

using namespace treesql;
using namespace treesql::testing;
using A = ActionKind;

namespace {

struct Env {
  TempDir dir;
  fs::path file = write_restaurant_db(dir.path());
  DatabaseCatalog catalog = load_catalog_from_root(dir.path(), "restaurant");
  PromptLibrary prompts = PromptLibrary::builtin();
  NLQuestion q{"Which thai restaurants are on solano ave?", "thai refers to food_type = 'thai'", "restaurant"};
  SearchConfig cfg;
};

NodeState after(std::initializer_list<std::pair<A, ActionArtifact>> steps) {
  NodeState s;
  for (const auto& [a, art] : steps) s = apply_artifact(s, art, "raw", std::string("prompt"));
  return s;
}

bool has(const std::string& s, std::string_view needle) { return s.find(needle) != std::string::npos; }

}  // namespace

TEST_CASE("prompt assets are stable") {
  auto lib = PromptLibrary::builtin();
  const std::map<PromptId, std::string> frozen = {
      {PromptId::Baseline, "b3dc9ef634e29ff2fd11db00d111b68c5eae5b26b5d6fdd7405450c8ed79f563"},
      {PromptId::FunctionIdent, "6da473257c3ad37b6e1c42cb916987529558f12f37353b0f7f3fd6f4c6cf6171"},
      {PromptId::KeywordExtract, "7c7a360d23f18a0b59b66888d937a8df654ca91eb2d621d67648486997fea025"},
      {PromptId::Rephrase, "4df829d2bf2af0ce3181f61c63117e7cbdc00cbb55ac8fecac568b6d67290ad1"},
      {PromptId::SchemaSelect, "d57986c2fd89cb0828e22a535a485aba168128433c7a58a9a5dba4daac5676b4"},
      {PromptId::SqlGenerate, "4cf9c81bd55e306f2e73e674a9282a031e156e33b074becef89f9a612e70ec3e"},
      {PromptId::SqlRevise, "1ded318bb14d42af48868d8fbefdc6ade4c229a1feac10f1f5c74c466a4eef82"},
      {PromptId::ValueIdent, "adb22b0a2179570631c8960472edadaba30f1d54a43a5efc2a32d8c419a6d590"},
  };
  for (PromptId id : kAllPrompts) {
    CAPTURE(prompt_file_stem(id));
    CHECK(lib.sha256(id) == frozen.at(id));
  }
}

TEST_CASE("prompt directory overrides a subset") {
  TempDir dir;
  {
    std::ofstream(dir.path() / "rephrase.txt") << "custom {QUESTION}";
  }
  auto lib = PromptLibrary::from_directory(dir.path());
  CHECK(lib.get(PromptId::Rephrase) == "custom {QUESTION}");
  CHECK(lib.get(PromptId::SqlGenerate) == PromptLibrary::builtin().get(PromptId::SqlGenerate));
}

TEST_CASE("template filling is single pass") {
  CHECK(fill_template("Q: {QUESTION} H: {HINT}", {{"QUESTION", "{HINT}"}, {"HINT", "h"}}) == "Q: {HINT} H: h");
}

TEST_CASE("rephrase prompt carries the few-shot examples") {
  Env e;
  auto p = build_action_prompt(A::Rephrase, e.q, {}, e.catalog, {}, e.prompts);
  CHECK(has(p, "Name movie titles released in year 1945"));
  CHECK(text::trim(p).ends_with("Rephrased Question:"));
  CHECK(has(p, e.q.question));
  CHECK(has(p, e.q.hint));
  CHECK(p == build_action_prompt(A::Rephrase, e.q, {}, e.catalog, {}, e.prompts));
}

TEST_CASE("schema selection always sees the whole catalog") {
  Env e;
  auto s = after({{A::ValueIdent, ValueNotes{"thai is a food_type value"}}});
  auto p = build_action_prompt(A::SchemaSelect, e.q, s, e.catalog, {}, e.prompts);
  CHECK(has(p, "CREATE TABLE location"));
  CHECK(has(p, "CREATE TABLE generalinfo"));
  CHECK(has(p, "thai is a food_type value"));
}

TEST_CASE("later prompts use the rephrased question, selected schema and notes") {
  Env e;
  auto s = after({{A::Rephrase, RephrasedQuestion{"Condition 1: thai food."}},
                  {A::SchemaSelect, SchemaSubset{{{"generalinfo", {"food_type", "label"}}}, "", {}}},
                  {A::FunctionIdent, FunctionNotes{"No functions needed."}}});
  std::vector<ValueRecord> values{{"generalinfo", "food_type", "thai"}};
  auto p = build_action_prompt(A::SqlGenerate, e.q, s, e.catalog, values, e.prompts);
  CHECK(has(p, "Condition 1: thai food."));
  CHECK_FALSE(has(p, e.q.question));
  CHECK_FALSE(has(p, "CREATE TABLE location"));
  CHECK(has(p, "-- Value Examples: 'thai'"));
  auto hint = p.find(e.q.hint), notes = p.find("No functions needed.");
  REQUIRE(hint != std::string::npos);
  REQUIRE(notes != std::string::npos);
  CHECK(hint < notes);
}

TEST_CASE("revision prompt embeds the failing SQL and its error") {
  Env e;
  auto s = after({{A::SqlGenerate, GeneratedSql{"SELEC x", ""}}});
  auto p = build_action_prompt(A::SqlRevise, e.q, s, e.catalog, {}, e.prompts,
                               RevisionInput{"SELEC x", "near \"SELEC\": syntax error"});
  CHECK(has(p, "SELEC x"));
  CHECK(has(p, "near \"SELEC\": syntax error"));
}

TEST_CASE("prompt building rejects structural and illegal requests") {
  Env e;
  CHECK_THROWS_AS(build_action_prompt(A::Terminate, e.q, after({{A::SqlGenerate, GeneratedSql{"SELECT 1", ""}}}),
                                      e.catalog, {}, e.prompts),
                  ContractViolation);
  CHECK_THROWS_AS(build_action_prompt(A::SqlRevise, e.q, {}, e.catalog, {}, e.prompts), ContractViolation);
  auto s = after({{A::Rephrase, RephrasedQuestion{"x"}}});
  CHECK_THROWS_AS(build_action_prompt(A::Rephrase, e.q, s, e.catalog, {}, e.prompts), ContractViolation);
}

TEST_CASE("parsing SQL responses") {
  auto a = parse_action_response(
      A::SqlGenerate, "```json\n{\"chain_of_thought_reasoning\": \"...\", \"sql_query\": \"SELECT 1\"}\n```");
  REQUIRE(std::holds_alternative<GeneratedSql>(a));
  CHECK(std::get<GeneratedSql>(a).sql == "SELECT 1");
  CHECK(std::get<GeneratedSql>(a).rationale == "...");

  auto lenient = parse_action_response(A::SqlGenerate, "Sure:\n{\"sql_query\": \"SELECT\n  2\",}\nDone.");
  CHECK(std::get<GeneratedSql>(lenient).sql == "SELECT\n  2");

  CHECK_THROWS_AS(parse_action_response(A::SqlGenerate, "SELECT 1 with no braces"), ParseError);
  CHECK_THROWS_AS(parse_action_response(A::SqlGenerate, "{\"sql_query\": \"\"}"), ParseError);
  CHECK_THROWS_AS(parse_action_response(A::SqlGenerate, "{\"other\": 1}"), ParseError);

  auto r = parse_action_response(A::SqlRevise, "```json\n{\"sql_query\": \"SELECT 3\"}\n```");
  CHECK(std::get<RevisedSql>(r).sql == "SELECT 3");
}

TEST_CASE("parsing schema selections") {
  Env e;
  auto a = parse_action_response(A::SchemaSelect, "{\"generalinfo\": [\"food_type\", \"city\"]}", &e.catalog);
  auto sub = std::get<SchemaSubset>(a);
  CHECK(sub.tables == SchemaSelection{{"generalinfo", {"city", "food_type"}}});

  auto fenced = parse_action_response(
      A::SchemaSelect,
      "```json\n{\"chain_of_thought_reasoning\": \"why\", \"GeneralInfo\": [\"Label\", \"made_up\"], \"ghost\": []}\n```",
      &e.catalog);
  auto f = std::get<SchemaSubset>(fenced);
  CHECK(f.tables == SchemaSelection{{"generalinfo", {"label"}}});
  CHECK(f.rationale == "why");
  CHECK(f.dropped.size() == 2);

  CHECK_THROWS_AS(parse_action_response(A::SchemaSelect, "{\"ghost\": [\"x\"]}", &e.catalog), ParseError);
}

TEST_CASE("schema subsets survive a render and echo round trip") {
  Env e;
  SchemaSelection sel{{"generalinfo", {"city", "food_type", "id_restaurant"}}, {"location", {"id_restaurant", "street_name"}}};
  nlohmann::json echo = nlohmann::json::object();
  for (const auto& [t, cols] : sel) echo[t] = cols;
  std::string ctx = render_schema_context(e.catalog, sel, {});
  CHECK(has(ctx, "street_name"));
  auto parsed = std::get<SchemaSubset>(parse_action_response(A::SchemaSelect, echo.dump(), &e.catalog));
  CHECK(parsed.tables == sel);
}

TEST_CASE("parsing free-text actions") {
  auto a = parse_action_response(A::Rephrase, "Rephrased Question: first\nRephrased Question:  final one \n");
  CHECK(std::get<RephrasedQuestion>(a).text == "final one");
  auto whole = parse_action_response(A::Rephrase, "  no marker here ");
  CHECK(std::get<RephrasedQuestion>(whole).text == "no marker here");
  CHECK(std::get<ValueNotes>(parse_action_response(A::ValueIdent, "  notes \n")).text == "notes");
  CHECK(std::get<FunctionNotes>(parse_action_response(A::FunctionIdent, "fn")).text == "fn");
}

TEST_CASE("fingerprints ignore reasoning and whitespace") {
  ActionArtifact a = GeneratedSql{"SELECT  label\nFROM t;", "one"};
  ActionArtifact b = GeneratedSql{"SELECT label FROM t", "two"};
  CHECK(artifact_fingerprint(a) == artifact_fingerprint(b));
  ActionArtifact s1 = SchemaSubset{{{"t", {"b", "a"}}, {"u", {"c"}}}, "x", {}};
  ActionArtifact s2 = SchemaSubset{{{"u", {"c"}}, {"t", {"a", "b"}}}, "y", {}};
  CHECK(artifact_fingerprint(s1) == artifact_fingerprint(s2));
  CHECK(normalize_sql("  SELECT 1 ;; ") == "SELECT 1");
}

TEST_CASE("json parsing tolerates common model slips") {
  auto j = parse_json_lenient("{\"a\": [1, 2,], \"b\": \"line\nbreak\",}");
  CHECK(j["a"].size() == 2);
  CHECK(j["b"] == "line\nbreak");
  CHECK_THROWS_AS(parse_json_lenient("{not json"), ParseError);
}

TEST_CASE("expansion samples N times and fingerprints duplicates") {
  Env e;
  SqlExecutor exec(Database::open_readonly(e.file), ExecOptions{});
  const std::vector<std::string> replies = {sql_reply("SELECT label FROM generalinfo"),
                                            sql_reply("SELECT  label   FROM generalinfo;"),
                                            sql_reply("SELECT city FROM generalinfo")};
  std::vector<CompletionRequest> seen;
  FunctionModel model([&](const CompletionRequest& req, std::size_t i) {
    seen.push_back(req);
    return replies[i];
  });
  ActionContext ctx{e.q, e.catalog, {}, e.cfg, model, exec, e.prompts};
  auto out = run_action(A::SqlGenerate, {}, ctx);
  REQUIRE(out.size() == 3);
  CHECK(model.calls() == 1);
  CHECK(seen[0].n_samples == 3);
  CHECK(seen[0].temperature == doctest::Approx(0.8));
  CHECK(artifact_fingerprint(out[0].artifact) == artifact_fingerprint(out[1].artifact));
  CHECK(artifact_fingerprint(out[0].artifact) != artifact_fingerprint(out[2].artifact));
  CHECK(out[0].prompt == seen[0].prompt);
}

TEST_CASE("unparseable samples are discarded") {
  Env e;
  SqlExecutor exec(Database::open_readonly(e.file), ExecOptions{});
  FunctionModel model([&](const CompletionRequest&, std::size_t i) {
    return i == 1 ? sql_reply("SELECT 1") : std::string("no json at all");
  });
  ActionContext ctx{e.q, e.catalog, {}, e.cfg, model, exec, e.prompts};
  auto out = run_action(A::SqlGenerate, {}, ctx);
  CHECK(out.size() == 1);
  FunctionModel none([&](const CompletionRequest&, std::size_t) { return std::string("nothing"); });
  ActionContext ctx2{e.q, e.catalog, {}, e.cfg, none, exec, e.prompts};
  CHECK(run_action(A::SqlGenerate, {}, ctx2).empty());
}

TEST_CASE("revision stops after the first clean execution") {
  Env e;
  SqlExecutor exec(Database::open_readonly(e.file), ExecOptions{});
  FunctionModel model([&](const CompletionRequest&, std::size_t) { return sql_reply(kThaiSolanoGold); });
  ActionContext ctx{e.q, e.catalog, {}, e.cfg, model, exec, e.prompts};
  auto s = after({{A::SqlGenerate, GeneratedSql{"SELEC label FROM generalinfo", ""}}});
  auto out = run_action(A::SqlRevise, s, ctx);
  REQUIRE(out.size() == 3);
  for (const auto& o : out) {
    CHECK(std::get<RevisedSql>(o.artifact).rounds_used == 1);
    CHECK(std::get<RevisedSql>(o.artifact).sql == kThaiSolanoGold);
  }
  CHECK(model.calls() == 3);
}

TEST_CASE("revision gives up after the round limit") {
  Env e;
  SqlExecutor exec(Database::open_readonly(e.file), ExecOptions{});
  std::map<std::size_t, std::size_t> per_sample_calls;
  FunctionModel model([&](const CompletionRequest& req, std::size_t) {
    ++per_sample_calls[req.sample_offset / e.cfg.n_revision];
    return sql_reply("SELEC still broken " + std::to_string(req.sample_offset));
  });
  ActionContext ctx{e.q, e.catalog, {}, e.cfg, model, exec, e.prompts};
  auto s = after({{A::SqlGenerate, GeneratedSql{"SELEC label FROM generalinfo", ""}}});
  auto out = run_action(A::SqlRevise, s, ctx);
  REQUIRE(out.size() == 3);
  for (const auto& o : out) CHECK(std::get<RevisedSql>(o.artifact).rounds_used == 10);
  CHECK(per_sample_calls.size() == 3);
  for (const auto& [sample, calls] : per_sample_calls) CHECK(calls == 10);
}

TEST_CASE("revision rounds feed the previous attempt back") {
  Env e;
  SqlExecutor exec(Database::open_readonly(e.file), ExecOptions{});
  std::vector<std::string> inputs;
  FunctionModel model([&](const CompletionRequest& req, std::size_t) {
    inputs.push_back(revision_input_sql(req.prompt));
    std::size_t round = req.sample_offset % e.cfg.n_revision;
    return sql_reply(round < 2 ? "SELEC round " + std::to_string(round) : std::string("SELECT 1"));
  });
  SearchConfig cfg = e.cfg;
  cfg.n_expansion = 1;
  ActionContext ctx{e.q, e.catalog, {}, cfg, model, exec, e.prompts};
  auto s = after({{A::SqlGenerate, GeneratedSql{"SELEC start", ""}}});
  auto out = run_action(A::SqlRevise, s, ctx);
  REQUIRE(out.size() == 1);
  CHECK(std::get<RevisedSql>(out[0].artifact).rounds_used == 3);
  CHECK(inputs == std::vector<std::string>{"SELEC start", "SELEC round 0", "SELEC round 1"});
}

TEST_CASE("applying artifacts tracks SQL provenance") {
  NodeState s;
  s = apply_artifact(s, GeneratedSql{"SELECT 1", ""}, "raw", std::string("gen prompt"));
  REQUIRE(s.sql_source.has_value());
  CHECK(s.sql_source->action == A::SqlGenerate);
  CHECK(s.sql_source->prompt == "gen prompt");
  s = apply_artifact(s, RevisedSql{"SELECT 2", "", 4}, "raw", std::string("rev prompt"));
  CHECK(*s.sql == "SELECT 2");
  CHECK(s.revision_count == 4);
  CHECK(s.sql_source->action == A::SqlRevise);
  s = apply_artifact(s, Terminated{}, "", std::nullopt);
  CHECK(s.terminated());
  CHECK(s.history() == std::vector<A>{A::SqlGenerate, A::SqlRevise, A::Terminate});
}

TEST_CASE("keyword extraction") {
  NLQuestion q{"What is the annual revenue of Acme Corp in the United States for 2022?",
               "Focus on financial reports and U.S. market performance for the fiscal year 2022.", "db"};
  auto prompts = PromptLibrary::builtin();
  std::vector<CompletionRequest> seen;
  FunctionModel model([&](const CompletionRequest& req, std::size_t) {
    seen.push_back(req);
    return std::string(
        "[\"annual revenue\", \"Acme Corp\", \"United States\", \"2022\", \"financial reports\", "
        "\"U.S. market performance\", \"fiscal year\"]");
  });
  auto kw = extract_keywords(q, model, prompts);
  CHECK(kw == std::vector<std::string>{"annual revenue", "Acme Corp", "United States", "2022", "financial reports",
                                       "U.S. market performance", "fiscal year"});
  REQUIRE(seen.size() == 1);
  CHECK(seen[0].temperature == 0.0);
  CHECK(has(seen[0].prompt, q.question));
}

TEST_CASE("keyword list parsing") {
  CHECK(parse_keyword_list("[]").empty());
  CHECK(parse_keyword_list("no list").empty());
  CHECK(parse_keyword_list("Here you go:\n['thai', 'solano ave'] hope that helps [\"x\"]") ==
        std::vector<std::string>{"thai", "solano ave"});
  CHECK(parse_keyword_list("```python\n[\"Men's 200\", \"a, b\",]\n```") ==
        std::vector<std::string>{"Men's 200", "a, b"});
}
