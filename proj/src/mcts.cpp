#include "treesql/mcts.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>

#include "treesql/errors.hpp"
#include "treesql/reward_select.hpp"

namespace treesql {

namespace {

NodeId pick(const std::vector<NodeId>& pool, Rng& rng) { return pool[rng() % pool.size()]; }

std::vector<NodeId> unvisited_children(const SearchTree& tree, NodeId id) {
  std::vector<NodeId> out;
  for (NodeId c : tree.node(id).children)
    if (tree.node(c).edge_n == 0) out.push_back(c);
  return out;
}

}  // namespace

SearchTree::SearchTree() : SearchTree(NodeState{}) {}

SearchTree::SearchTree(NodeState root_state) {
  SearchNode root;
  root.state = std::move(root_state);
  nodes_.push_back(std::move(root));
}

std::optional<NodeId> SearchTree::find_child(NodeId parent, ActionKind action, const std::string& fingerprint) const {
  for (NodeId c : node(parent).children) {
    const auto& n = node(c);
    if (n.action == action && n.fingerprint == fingerprint) return c;
  }
  return std::nullopt;
}

NodeId SearchTree::add_child(NodeId parent, ActionKind action, std::string fingerprint, NodeState state) {
  if (find_child(parent, action, fingerprint)) throw ContractViolation("duplicate child edge");
  SearchNode n;
  n.state = std::move(state);
  n.action = action;
  n.fingerprint = std::move(fingerprint);
  n.parent = parent;
  NodeId id = nodes_.size();
  nodes_.push_back(std::move(n));
  nodes_[parent].children.push_back(id);
  return id;
}

std::vector<NodeId> SearchTree::path_to(NodeId id) const {
  std::vector<NodeId> path;
  for (std::optional<NodeId> cur = id; cur; cur = node(*cur).parent) path.push_back(*cur);
  std::reverse(path.begin(), path.end());
  return path;
}

std::map<ActionKind, ActionStats> SearchTree::action_stats(NodeId id) const {
  std::map<ActionKind, ActionStats> out;
  for (NodeId c : node(id).children) {
    auto& s = out[*node(c).action];
    s.q += node(c).edge_q;
    s.n += node(c).edge_n;
  }
  return out;
}

double uct_score(double q, std::size_t n, std::size_t parent_visits, double c) {
  if (n == 0) throw ContractViolation("UCT is undefined for an unvisited edge");
  if (parent_visits == 0) throw ContractViolation("UCT parent has no visits");
  const double nd = static_cast<double>(n);
  return q / nd + c * std::sqrt(std::log(static_cast<double>(parent_visits)) / nd);
}

double uct_score(const SearchTree& tree, NodeId child, double c) {
  const auto& n = tree.node(child);
  if (!n.parent) throw ContractViolation("the root has no incoming edge");
  return uct_score(n.edge_q, n.edge_n, tree.node(*n.parent).visits, c);
}

NodeId select_path(const SearchTree& tree, double c, Rng& rng) {
  NodeId v = tree.root();
  while (true) {
    const auto& n = tree.node(v);
    if (n.terminal() || !n.expanded || n.children.empty()) return v;
    auto unvisited = unvisited_children(tree, v);
    if (!unvisited.empty()) return pick(unvisited, rng);
    double best = -std::numeric_limits<double>::infinity();
    std::vector<NodeId> ties;
    for (NodeId child : n.children) {
      double s = uct_score(tree, child, c);
      if (s > best) {
        best = s;
        ties.assign(1, child);
      } else if (s == best) {
        ties.push_back(child);
      }
    }
    v = ties.size() == 1 ? ties.front() : pick(ties, rng);
  }
}

std::vector<NodeId> expand_node(SearchTree& tree, NodeId id, const SearchContext& ctx) {
  if (tree.node(id).terminal()) throw ContractViolation("cannot expand a terminal node");
  if (tree.node(id).expanded) return tree.node(id).children;

  const NodeState state = tree.node(id).state;
  ActionContext actx{ctx.question,       ctx.deps.catalog,  ctx.retrieved_values, ctx.config,
                     ctx.deps.model,     ctx.deps.executor, ctx.deps.prompts};
  std::vector<NodeId> created;
  for (ActionKind action : valid_next_actions(state.history())) {
    std::vector<ActionOutcome> outcomes;
    try {
      outcomes = run_action(action, state, actx);
    } catch (const TransportError& e) {
      spdlog::warn("{}: model call failed, no children this rollout: {}", action_code(action), e.what());
      continue;
    } catch (const ProtocolError& e) {
      spdlog::warn("{}: malformed model response, no children this rollout: {}", action_code(action), e.what());
      continue;
    }
    for (auto& outcome : outcomes) {
      std::string fp = artifact_fingerprint(outcome.artifact);
      if (tree.find_child(id, action, fp)) continue;
      std::optional<std::string> prompt;
      if (!outcome.prompt.empty()) prompt = outcome.prompt;
      NodeState next = apply_artifact(state, outcome.artifact, std::move(outcome.raw), std::move(prompt));
      created.push_back(tree.add_child(id, action, std::move(fp), std::move(next)));
    }
  }
  auto& n = tree.node(id);
  n.expanded = true;
  if (n.children.empty()) {
    n.dead = true;
    spdlog::debug("node {} produced no children and is marked dead", id);
  }
  return created;
}

NodeId simulate(SearchTree& tree, NodeId id, const SearchContext& ctx, Rng& rng) {
  NodeId v = id;
  while (true) {
    if (tree.node(v).terminal()) return v;
    if (!tree.node(v).expanded) expand_node(tree, v, ctx);
    if (tree.node(v).dead) return v;
    auto pool = unvisited_children(tree, v);
    if (pool.empty()) pool = tree.node(v).children;
    v = pick(pool, rng);
  }
}

void backpropagate(SearchTree& tree, NodeId terminal, double reward) {
  if (!(reward >= 0.0 && reward <= 1.0)) throw ContractViolation("reward must lie in [0, 1]");
  for (NodeId u : tree.path_to(terminal)) {
    auto& n = tree.node(u);
    n.visits += 1;
    if (n.parent) {
      n.edge_q += reward;
      n.edge_n += 1;
    }
  }
}

SearchResult run_search(const NLQuestion& q, const SearchDeps& deps, const SearchConfig& cfg) {
  cfg.validate();
  SearchResult result;
  SearchContext ctx{q, deps, cfg, {}};

  if (!deps.preset_values.empty()) {
    ctx.retrieved_values = deps.preset_values;
  } else if (deps.index) {
    try {
      result.keywords = extract_keywords(q, deps.model, deps.prompts);
    } catch (const TransportError& e) {
      spdlog::warn("keyword extraction failed, continuing without values: {}", e.what());
    } catch (const ProtocolError& e) {
      spdlog::warn("keyword extraction failed, continuing without values: {}", e.what());
    }
    result.retrieved = retrieve_values(*deps.index, result.keywords, deps.embedder, RetrievalOptions::from(cfg));
    for (const auto& rv : result.retrieved) ctx.retrieved_values.push_back(rv.record);
  }

  RewardFunction reward = deps.reward;
  if (!reward) {
    reward = [&](const NodeState& s) {
      return compute_reward(s, deps.model, deps.executor, cfg, &deps.catalog).reward;
    };
  }

  Rng rng(cfg.rng_seed);
  SearchTree& tree = result.tree;
  std::set<NodeId> seen;
  for (std::size_t i = 0; i < cfg.n_rollout; ++i) {
    NodeId leaf = simulate(tree, select_path(tree, cfg.uct_c, rng), ctx, rng);
    double r = 0.0;
    if (!tree.node(leaf).dead) {
      if (!tree.node(leaf).reward) tree.node(leaf).reward = std::clamp(reward(tree.node(leaf).state), 0.0, 1.0);
      r = *tree.node(leaf).reward;
      const auto& state = tree.node(leaf).state;
      if (state.sql && seen.insert(leaf).second) {
        Trajectory t;
        t.terminal = leaf;
        t.nodes = tree.path_to(leaf);
        t.actions = state.history();
        t.final_sql = *state.sql;
        t.reward = r;
        t.rollout_index = i;
        t.state = state;
        result.trajectories.push_back(std::move(t));
      }
    } else {
      tree.node(leaf).reward = 0.0;
    }
    backpropagate(tree, leaf, r);
    ++result.rollouts;
  }
  return result;
}

std::vector<std::string> audit_tree(const SearchTree& tree, std::size_t n_revision) {
  std::vector<std::string> problems;
  auto report = [&](NodeId id, const std::string& what) { problems.push_back("node " + std::to_string(id) + ": " + what); };
  constexpr double kEps = 1e-9;

  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    const auto history = n.state.history();
    if (id == tree.root()) {
      if (n.parent || n.action) report(id, "root has a parent or action");
    } else {
      if (!n.parent || !n.action) {
        report(id, "non-root node without parent or action");
        continue;
      }
      const auto parent_history = tree.node(*n.parent).state.history();
      if (history.size() != parent_history.size() + 1 || history.back() != *n.action ||
          !std::equal(parent_history.begin(), parent_history.end(), history.begin()))
        report(id, "history does not extend its parent's by the edge action");
      if (n.edge_q < -kEps || n.edge_q > static_cast<double>(n.edge_n) + kEps) report(id, "edge Q outside [0, N]");
    }
    if (!is_legal_prefix(history)) report(id, "illegal action history");
    bool has_sql_action = std::find(history.begin(), history.end(), ActionKind::SqlGenerate) != history.end();
    if (has_sql_action != n.state.sql.has_value()) report(id, "sql present without generation, or missing after it");
    if (n.state.revision_count > n_revision) report(id, "revision count above the limit");
    if (n.terminal() && !n.children.empty()) report(id, "terminal node has children");

    std::set<std::pair<ActionKind, std::string>> keys;
    std::size_t child_visits = 0;
    for (NodeId c : n.children) {
      const auto& child = tree.node(c);
      if (child.parent != id) report(c, "parent link mismatch");
      if (child.action && !keys.insert({*child.action, child.fingerprint}).second)
        report(id, "duplicate (action, fingerprint) child");
      if (child.edge_n > n.visits) report(id, "child edge visited more often than the node");
      child_visits += child.edge_n;
    }
    if (child_visits > n.visits) report(id, "children visited more often than the node");
  }
  return problems;
}

nlohmann::json tree_to_json(const SearchTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (NodeId id = 0; id < tree.size(); ++id) {
    const auto& n = tree.node(id);
    nlohmann::json j;
    j["id"] = id;
    j["parent"] = n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr);
    j["action"] = n.action ? nlohmann::json(std::string(action_code(*n.action))) : nlohmann::json(nullptr);
    j["fingerprint"] = n.fingerprint;
    j["visits"] = n.visits;
    j["q"] = n.edge_q;
    j["n"] = n.edge_n;
    j["children"] = n.children;
    j["terminal"] = n.terminal();
    j["dead"] = n.dead;
    j["reward"] = n.reward ? nlohmann::json(*n.reward) : nlohmann::json(nullptr);
    j["sql"] = n.state.sql ? nlohmann::json(*n.state.sql) : nlohmann::json(nullptr);
    if (!n.state.reasoning_log.empty()) j["output"] = n.state.reasoning_log.back().raw_output;
    nodes.push_back(std::move(j));
  }
  return nlohmann::json{{"nodes", std::move(nodes)}};
}

}  // namespace treesql
