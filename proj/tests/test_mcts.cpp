#include <doctest.h>

#include <cmath>
#include <nlohmann/json.hpp>
#include <random>
#include <set>

#include "support.hpp"
#include "treesql/catalog.hpp"
#include "treesql/errors.hpp"
#include "treesql/mcts.hpp"

using namespace treesql;
using namespace treesql::testing;
using A = ActionKind;

namespace {

const std::vector<std::string> kSqls = {"SELECT label FROM generalinfo WHERE food_type = 'thai'",
                                        "SELECT label FROM generalinfo", "SELECT city FROM generalinfo"};

std::string toy_response(const CompletionRequest& req, std::size_t i) {
  switch (prompt_of(req).value()) {
    case PromptId::Rephrase: return "Rephrased Question: variant " + std::to_string(i % 2);
    case PromptId::SchemaSelect:
      return i % 2 ? "{\"generalinfo\": [\"food_type\", \"label\"]}" : "{\"generalinfo\": [\"label\", \"city\"]}";
    case PromptId::ValueIdent:
    case PromptId::FunctionIdent: return "note " + std::to_string(i % 2);
    case PromptId::SqlGenerate: return sql_reply(kSqls[i % kSqls.size()]);
    case PromptId::SqlRevise: return sql_reply(revision_input_sql(req.prompt));
    case PromptId::KeywordExtract: return "[]";
    case PromptId::Baseline: break;
  }
  throw std::logic_error("unexpected prompt");
}

struct Toy {
  TempDir dir;
  fs::path file = write_restaurant_db(dir.path());
  DatabaseCatalog catalog = load_catalog_from_root(dir.path(), "restaurant");
  PromptLibrary prompts = PromptLibrary::builtin();
  SqlExecutor exec{Database::open_readonly(file), ExecOptions{}};
  NLQuestion q{"Which restaurants serve thai food?", "", "restaurant"};
  FunctionModel model{toy_response};
  SearchConfig cfg;

  SearchDeps deps(FunctionModel& m) {
    return SearchDeps{catalog, m, exec, prompts, nullptr, nullptr, {},
                      [](const NodeState& s) { return s.sql && *s.sql == kSqls[0] ? 1.0 : 0.0; }};
  }
};

NodeId add_path(SearchTree& t, NodeId from, std::initializer_list<A> actions) {
  NodeId v = from;
  for (A a : actions) {
    NodeState s = t.node(v).state;
    s.reasoning_log.push_back({a, ""});
    if (a == A::SqlGenerate) s.sql = "SELECT 1";
    v = t.add_child(v, a, std::string(action_code(a)), s);
  }
  return v;
}

}  // namespace

TEST_CASE("uct formula") {
  CHECK(uct_score(2.0, 4, 10, 1.41421356) == doctest::Approx(1.5729830).epsilon(1e-6));
  CHECK(uct_score(0.0, 7, 30, 0.0) == 0.0);
  CHECK(uct_score(1.0, 2, 10, 1.0) > uct_score(2.0, 4, 10, 1.0));
  CHECK_THROWS_AS(uct_score(0.0, 0, 10, 1.0), ContractViolation);
}

TEST_CASE("selection walks by uct and prefers unvisited children") {
  SearchTree t;
  Rng rng(1);
  CHECK(select_path(t, std::sqrt(2.0), rng) == t.root());

  NodeState s;
  NodeId a1 = t.add_child(0, A::SqlGenerate, "a1", s);
  NodeId a2 = t.add_child(0, A::SqlGenerate, "a2", s);
  t.node(0).expanded = true;
  t.node(0).visits = 4;
  t.node(a1).edge_q = 3, t.node(a1).edge_n = 3;
  t.node(a2).edge_q = 0, t.node(a2).edge_n = 1;
  double u1 = 1.0 + std::sqrt(2.0) * std::sqrt(std::log(4.0) / 3.0);
  double u2 = 0.0 + std::sqrt(2.0) * std::sqrt(std::log(4.0) / 1.0);
  REQUIRE(u1 > u2);
  CHECK(select_path(t, std::sqrt(2.0), rng) == a1);

  NodeId fresh = t.add_child(0, A::Rephrase, "r", s);
  for (int i = 0; i < 20; ++i) CHECK(select_path(t, std::sqrt(2.0), rng) == fresh);
}

TEST_CASE("uct ties are broken by the seeded rng") {
  SearchTree t;
  NodeState s;
  NodeId a = t.add_child(0, A::SqlGenerate, "a", s);
  NodeId b = t.add_child(0, A::SqlGenerate, "b", s);
  t.node(0).expanded = true;
  t.node(0).visits = 2;
  for (NodeId c : {a, b}) t.node(c).edge_q = 1, t.node(c).edge_n = 1;
  std::set<NodeId> chosen;
  Rng rng(5);
  for (int i = 0; i < 50; ++i) chosen.insert(select_path(t, 1.0, rng));
  CHECK(chosen == std::set<NodeId>{a, b});
  Rng r1(9), r2(9);
  for (int i = 0; i < 20; ++i) CHECK(select_path(t, 1.0, r1) == select_path(t, 1.0, r2));
}

TEST_CASE("expansion follows the transition table") {
  Toy toy;
  auto deps = toy.deps(toy.model);
  SearchContext ctx{toy.q, deps, toy.cfg, {}};
  SearchTree t;
  auto created = expand_node(t, t.root(), ctx);
  auto stats = t.action_stats(t.root());
  CHECK(stats.size() == 5);
  std::map<A, int> per_action;
  for (NodeId c : created) ++per_action[*t.node(c).action];
  CHECK(per_action[A::SqlGenerate] == 3);
  CHECK(per_action[A::SchemaSelect] == 2);
  CHECK(per_action[A::Rephrase] == 2);

  NodeId sql_child = *std::find_if(created.begin(), created.end(), [&](NodeId c) { return *t.node(c).action == A::SqlGenerate; });
  auto next = expand_node(t, sql_child, ctx);
  std::set<A> kinds;
  for (NodeId c : next) kinds.insert(*t.node(c).action);
  CHECK(kinds == std::set<A>{A::SqlRevise, A::Terminate});
  CHECK(audit_tree(t, toy.cfg.n_revision).empty());
}

TEST_CASE("failing actions contribute no children and a childless node is dead") {
  Toy toy;
  FunctionModel flaky([](const CompletionRequest& req, std::size_t i) -> std::string {
    if (prompt_of(req) != PromptId::SqlGenerate) throw TransportError("down");
    return toy_response(req, i);
  });
  auto deps = toy.deps(flaky);
  SearchContext ctx{toy.q, deps, toy.cfg, {}};
  SearchTree t;
  expand_node(t, t.root(), ctx);
  for (NodeId c : t.node(0).children) CHECK(*t.node(c).action == A::SqlGenerate);
  CHECK_FALSE(t.node(0).dead);

  FunctionModel down([](const CompletionRequest&, std::size_t) -> std::string { throw TransportError("down"); });
  auto deps2 = toy.deps(down);
  SearchContext ctx2{toy.q, deps2, toy.cfg, {}};
  SearchTree t2;
  expand_node(t2, t2.root(), ctx2);
  CHECK(t2.node(0).dead);
  CHECK(t2.node(0).terminal());
  auto res = run_search(toy.q, deps2, toy.cfg);
  CHECK(res.trajectories.empty());
  CHECK(res.rollouts == toy.cfg.n_rollout);
}

TEST_CASE("simulation reaches a terminal within the table's bounds") {
  Toy toy;
  auto deps = toy.deps(toy.model);
  SearchContext ctx{toy.q, deps, toy.cfg, {}};
  SearchTree t;
  NodeState s;
  s.reasoning_log.push_back({A::SqlGenerate, ""});
  s.sql = kSqls[0];
  s.sql_source = SqlProvenance{A::SqlGenerate, "p"};
  NodeId after_sql = t.add_child(0, A::SqlGenerate, "x", s);
  t.node(0).expanded = true;
  Rng rng(3);
  NodeId leaf = simulate(t, after_sql, ctx, rng);
  CHECK(t.node(leaf).terminal());
  CHECK(t.path_to(leaf).size() - t.path_to(after_sql).size() <= 2);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SearchTree t1, t2;
    Rng r1(seed), r2(seed);
    NodeId l1 = simulate(t1, t1.root(), ctx, r1);
    NodeId l2 = simulate(t2, t2.root(), ctx, r2);
    CHECK(t1.node(l1).state.history() == t2.node(l2).state.history());
    CHECK(t1.node(l1).state.sql == t2.node(l2).state.sql);
    auto h = t1.node(l1).state.history();
    CHECK(std::set<A>(h.begin(), h.end()).size() == h.size());
    CHECK(h.back() == A::Terminate);
  }
}

TEST_CASE("backpropagation bookkeeping") {
  SearchTree t;
  NodeId leaf = add_path(t, 0, {A::Rephrase, A::SqlGenerate, A::Terminate});
  backpropagate(t, leaf, 0.6);
  for (NodeId u : t.path_to(leaf)) {
    CHECK(t.node(u).visits == 1);
    if (u != 0) {
      CHECK(t.node(u).edge_q == doctest::Approx(0.6));
      CHECK(t.node(u).edge_n == 1);
    }
  }
  NodeId sql = t.path_to(leaf)[2];
  NodeId other = add_path(t, sql, {A::SqlRevise, A::Terminate});
  backpropagate(t, other, 1.0);
  CHECK(t.node(0).visits == 2);
  CHECK(t.node(sql).visits == 2);
  CHECK(t.node(leaf).visits == 1);
  CHECK(t.node(other).visits == 1);
  CHECK(t.node(sql).edge_q == doctest::Approx(1.6));
  CHECK_THROWS_AS(backpropagate(t, leaf, 1.5), ContractViolation);
  CHECK_THROWS_AS(t.add_child(0, A::Rephrase, "A1", NodeState{}), ContractViolation);
}

TEST_CASE("search counters, audit and trajectory invariants") {
  Toy toy;
  auto deps = toy.deps(toy.model);
  SearchConfig cfg = toy.cfg;
  cfg.n_rollout = 10;
  cfg.rng_seed = 11;
  auto res = run_search(toy.q, deps, cfg);
  CHECK(res.rollouts == 10);
  CHECK(res.tree.node(0).visits == 10);
  std::size_t root_edges = 0;
  for (const auto& [a, s] : res.tree.action_stats(0)) root_edges += s.n;
  CHECK(root_edges == 10);
  CHECK(audit_tree(res.tree, cfg.n_revision).empty());
  REQUIRE_FALSE(res.trajectories.empty());
  for (const auto& tr : res.trajectories) {
    CHECK(tr.actions.back() == A::Terminate);
    CHECK(std::count(tr.actions.begin(), tr.actions.end(), A::SqlGenerate) == 1);
    CHECK_FALSE(tr.final_sql.empty());
    CHECK(tr.reward == (tr.final_sql == kSqls[0] ? 1.0 : 0.0));
    CHECK(tr.nodes.back() == tr.terminal);
  }
  CHECK(res.trajectories.size() <= 64 * 3 * 2 * 2 * 2 * 2);
  for (NodeId id = 0; id < res.tree.size(); ++id) {
    const auto& n = res.tree.node(id);
    for (const auto& [a, s] : res.tree.action_stats(id)) CHECK(s.q <= static_cast<double>(s.n) + 1e-9);
    for (NodeId c : n.children) CHECK(n.visits >= res.tree.node(c).edge_n);
  }
  auto j = tree_to_json(res.tree);
  CHECK(j["nodes"].size() == res.tree.size());
}

TEST_CASE("single rollout yields a trajectory") {
  Toy toy;
  auto deps = toy.deps(toy.model);
  SearchConfig cfg = toy.cfg;
  cfg.n_rollout = 1;
  CHECK(run_search(toy.q, deps, cfg).trajectories.size() == 1);
}

TEST_CASE("search is reproducible under a fixed seed") {
  Toy toy;
  auto deps = toy.deps(toy.model);
  SearchConfig cfg = toy.cfg;
  cfg.rng_seed = 42;
  auto a = run_search(toy.q, deps, cfg);
  auto b = run_search(toy.q, deps, cfg);
  CHECK(tree_to_json(a.tree) == tree_to_json(b.tree));
  REQUIRE(a.trajectories.size() == b.trajectories.size());
  for (std::size_t i = 0; i < a.trajectories.size(); ++i) CHECK(a.trajectories[i].final_sql == b.trajectories[i].final_sql);
}

TEST_CASE("preset values feed prompts without keyword extraction") {
  Toy toy;
  std::size_t keyword_calls = 0;
  bool saw_value = false;
  FunctionModel m([&](const CompletionRequest& req, std::size_t i) {
    if (prompt_of(req) == PromptId::KeywordExtract) ++keyword_calls;
    if (req.prompt.find("Value Examples: 'thai'") != std::string::npos) saw_value = true;
    return toy_response(req, i);
  });
  auto deps = toy.deps(m);
  deps.preset_values = {{"generalinfo", "food_type", "thai"}};
  SearchConfig cfg = toy.cfg;
  cfg.n_rollout = 3;
  run_search(toy.q, deps, cfg);
  CHECK(keyword_calls == 0);
  CHECK(saw_value);
}
