#include <doctest.h>

#include <algorithm>
#include <set>

#include "support.hpp"
#include "treesql/catalog.hpp"
#include "treesql/core.hpp"
#include "treesql/errors.hpp"

using namespace treesql;
using namespace treesql::testing;
using A = ActionKind;

namespace {

std::set<A> next(std::vector<A> h) {
  auto v = valid_next_actions(h);
  return {v.begin(), v.end()};
}

}  // namespace

TEST_CASE("valid next actions follow the transition table") {
  CHECK(next({}) == std::set<A>{A::Rephrase, A::SchemaSelect, A::ValueIdent, A::FunctionIdent, A::SqlGenerate});
  CHECK(next({A::ValueIdent}) == std::set<A>{A::SchemaSelect, A::FunctionIdent, A::SqlGenerate});
  CHECK(next({A::Rephrase, A::SchemaSelect, A::SqlGenerate}) == std::set<A>{A::SqlRevise, A::Terminate});
  CHECK(next({A::SqlGenerate, A::SqlRevise}) == std::set<A>{A::Terminate});
  CHECK(next({A::SqlGenerate, A::Terminate}).empty());
  CHECK_THROWS_AS(valid_next_actions(std::vector<A>{A::SchemaSelect, A::ValueIdent, A::SchemaSelect}),
                  ContractViolation);
  CHECK_THROWS_AS(valid_next_actions(std::vector<A>{A::SqlRevise}), ContractViolation);
  CHECK_THROWS_AS(valid_next_actions(std::vector<A>{A::Rephrase, A::Rephrase}), ContractViolation);
}

TEST_CASE("extending a legal history stays legal and never repeats an action") {
  std::vector<std::vector<A>> frontier = {{}};
  std::size_t visited = 0;
  while (!frontier.empty()) {
    auto h = frontier.back();
    frontier.pop_back();
    ++visited;
    REQUIRE(is_legal_prefix(h));
    for (A a : valid_next_actions(h)) {
      auto ext = h;
      ext.push_back(a);
      CHECK(is_legal_prefix(ext));
      CHECK(std::count(ext.begin(), ext.end(), a) == 1);
      frontier.push_back(ext);
    }
  }
  CHECK(visited > 64);
}

TEST_CASE("trajectory enumeration") {
  auto all = enumerate_trajectories();
  CHECK(all.size() == 64);
  auto shortest = *std::min_element(all.begin(), all.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
  CHECK(shortest == std::vector<A>{A::SqlGenerate, A::Terminate});
  for (const auto& t : all) {
    auto sql = std::find(t.begin(), t.end(), A::SqlGenerate);
    REQUIRE(sql != t.end());
    CHECK(t.back() == A::Terminate);
    auto revise = std::find(t.begin(), t.end(), A::SqlRevise);
    if (revise != t.end()) CHECK(sql < revise);
  }
}

TEST_CASE("action codes and names round-trip") {
  for (A a : kAllActions) {
    CHECK(parse_action(action_code(a)) == a);
    CHECK(parse_action(action_name(a)) == a);
  }
  CHECK(action_code(A::SchemaSelect) == "A2");
  CHECK_FALSE(parse_action("A8").has_value());
}

TEST_CASE("search config validation") {
  SearchConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_reward = 0;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = {};
  c.eps_edit = 1.5;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
  c = {};
  c.t_expansion = -0.1;
  CHECK_THROWS_AS(c.validate(), ContractViolation);
}

TEST_CASE("node state history and sql invariants") {
  NodeState s;
  CHECK(s.history().empty());
  CHECK_FALSE(s.terminated());
  s.reasoning_log.push_back({A::SqlGenerate, "x"});
  s.reasoning_log.push_back({A::Terminate, ""});
  CHECK(s.history() == std::vector<A>{A::SqlGenerate, A::Terminate});
  CHECK(s.terminated());
}

TEST_CASE("catalog loading reads keys and descriptions") {
  TempDir dir;
  write_restaurant_db(dir.path());
  auto cat = load_catalog_from_root(dir.path(), "restaurant", 2);
  REQUIRE(cat.tables().size() == 2);
  const TableDef* g = cat.find_table("GeneralInfo");
  REQUIRE(g != nullptr);
  CHECK(g->primary_key == std::vector<std::string>{"id_restaurant"});
  const ColumnDef* food = g->find_column("food_type");
  REQUIRE(food != nullptr);
  CHECK(food->is_text());
  CHECK_FALSE(food->description.empty());
  CHECK(food->value_examples.size() == 2);
  CHECK(g->find_column("review")->value_examples.empty());
  REQUIRE(cat.relationships().size() == 1);
  CHECK(cat.relationships()[0].child_table == "location");
  CHECK(cat.relationships()[0].parent_table == "generalinfo");
}

TEST_CASE("schema rendering") {
  TempDir dir;
  write_restaurant_db(dir.path());
  auto cat = load_catalog_from_root(dir.path(), "restaurant");

  std::string full = render_schema_context(cat, std::nullopt, {});
  CHECK(full.find("CREATE TABLE generalinfo") != std::string::npos);
  CHECK(full.find("CREATE TABLE location") != std::string::npos);
  CHECK(full.find("foreign key (id_restaurant) references generalinfo (id_restaurant)") != std::string::npos);
  CHECK(render_schema_context(cat, std::nullopt, {}) == full);

  SchemaSelection sel{{"generalinfo", {"food_type"}}};
  std::vector<ValueRecord> values{{"generalinfo", "food_type", "thai"}};
  std::string sub = render_schema_context(cat, sel, values);
  CHECK(sub.find("food_type TEXT null, -- Value Examples: 'thai'") != std::string::npos);
  CHECK(sub.find("location") == std::string::npos);

  SchemaSelection bad{{"generalinfo", {"nope"}}};
  CHECK_THROWS_AS(render_schema_context(cat, bad, {}), ContractViolation);
}

TEST_CASE("retrieved values come before catalog examples") {
  TempDir dir;
  write_restaurant_db(dir.path());
  auto cat = load_catalog_from_root(dir.path(), "restaurant", 1);
  SchemaSelection sel{{"generalinfo", {"city"}}};
  std::vector<ValueRecord> values{{"generalinfo", "city", "san francisco"}};
  std::string s = render_schema_context(cat, sel, values);
  auto retrieved = s.find("'san francisco'");
  auto example = s.find("'albany'");
  REQUIRE(retrieved != std::string::npos);
  REQUIRE(example != std::string::npos);
  CHECK(retrieved < example);
}

TEST_CASE("selection canonicalization drops unknown names") {
  TempDir dir;
  write_restaurant_db(dir.path());
  auto cat = load_catalog_from_root(dir.path(), "restaurant");
  SchemaSelection sel{{"GENERALINFO", {"Food_Type", "ghost"}}, {"phantom", {"x"}}};
  auto dropped = canonicalize_selection(cat, sel);
  CHECK(sel == SchemaSelection{{"generalinfo", {"food_type"}}});
  CHECK(dropped.size() == 2);
}

TEST_CASE("csv reader handles quotes, newlines and a BOM") {
  auto rows = parse_csv("\xEF\xBB\xBFname,desc\n\"a, b\",\"line1\nline2\"\nc,\"say \"\"hi\"\"\"\n");
  REQUIRE(rows.size() == 3);
  CHECK(rows[0][0] == "name");
  CHECK(rows[1][0] == "a, b");
  CHECK(rows[1][1] == "line1\nline2");
  CHECK(rows[2][1] == "say \"hi\"");
}
