#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "treesql/action_model.hpp"
#include "treesql/catalog.hpp"
#include "treesql/core.hpp"
#include "treesql/llm_client.hpp"
#include "treesql/prompts.hpp"
#include "treesql/sql_exec.hpp"
#include "treesql/value_index.hpp"

namespace treesql {

using Rng = std::mt19937_64;
using NodeId = std::size_t;

/// One node of the search tree. The statistics of the edge from the parent
/// into this node, Q(parent, a) and N(parent, a), are stored on the node,
/// so two samples of the same action with different artifacts are separate
/// edges.
struct SearchNode {
  NodeState state;
  std::optional<ActionKind> action;
  std::string fingerprint;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;

  std::size_t visits = 0;  // N(v)
  double edge_q = 0.0;     // Q(parent, a)
  std::size_t edge_n = 0;  // N(parent, a)

  bool expanded = false;
  /// Expansion produced no child; treated as terminal with reward 0.
  bool dead = false;
  std::optional<double> reward;

  bool terminal() const { return dead || state.terminated(); }
};

struct ActionStats {
  double q = 0.0;
  std::size_t n = 0;
};

class SearchTree {
 public:
  SearchTree();
  explicit SearchTree(NodeState root_state);

  NodeId root() const { return 0; }
  SearchNode& node(NodeId id) { return nodes_.at(id); }
  const SearchNode& node(NodeId id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }

  /// Child of `parent` reached by (action, fingerprint), if any.
  std::optional<NodeId> find_child(NodeId parent, ActionKind action, const std::string& fingerprint) const;
  NodeId add_child(NodeId parent, ActionKind action, std::string fingerprint, NodeState state);

  /// Root first.
  std::vector<NodeId> path_to(NodeId id) const;

  /// Edge statistics of `id`'s children summed per action kind.
  std::map<ActionKind, ActionStats> action_stats(NodeId id) const;

 private:
  std::vector<SearchNode> nodes_;
};

/// Q/N + c * sqrt(ln(parent_visits) / N). Throws ContractViolation when N is 0.
double uct_score(double q, std::size_t n, std::size_t parent_visits, double c);
/// Score of the edge into `child`.
double uct_score(const SearchTree& tree, NodeId child, double c);

/// Descends from the root through fully visited nodes by maximal UCT (ties
/// broken at random). Stops at a terminal or unexpanded node, or returns a
/// uniformly chosen unvisited child.
NodeId select_path(const SearchTree& tree, double c, Rng& rng);

/// Returns the terminal state's reward in [0, 1].
using RewardFunction = std::function<double(const NodeState& terminal)>;

struct SearchDeps {
  const DatabaseCatalog& catalog;
  ChatModel& model;
  SqlExecutor& executor;
  const PromptLibrary& prompts;
  /// Keywords are extracted and matched against this index once per search.
  const ValueIndex* index = nullptr;
  Embedder* embedder = nullptr;
  /// Used instead of keyword retrieval when non-empty.
  std::vector<ValueRecord> preset_values;
  /// Defaults to the self-consistency reward.
  RewardFunction reward;
};

/// Shared state of one search: the question plus the values retrieved for it.
struct SearchContext {
  const NLQuestion& question;
  const SearchDeps& deps;
  const SearchConfig& config;
  std::vector<ValueRecord> retrieved_values;
};

/// Runs every valid action at `id` and adds one child per distinct
/// (action, fingerprint). An action whose model calls fail contributes no
/// children; a node left with none is marked dead.
std::vector<NodeId> expand_node(SearchTree& tree, NodeId id, const SearchContext& ctx);

/// Expands and descends through random unvisited children until a terminal
/// (or dead) node is reached.
NodeId simulate(SearchTree& tree, NodeId id, const SearchContext& ctx, Rng& rng);

/// N(u) += 1 on every node of the root path; Q += r and N += 1 on every edge.
void backpropagate(SearchTree& tree, NodeId terminal, double reward);

struct Trajectory {
  NodeId terminal = 0;
  std::vector<NodeId> nodes;
  std::vector<ActionKind> actions;
  std::string final_sql;
  double reward = 0.0;
  std::size_t rollout_index = 0;
  NodeState state;
};

struct SearchResult {
  SearchTree tree;
  std::vector<Trajectory> trajectories;
  std::vector<std::string> keywords;
  std::vector<RetrievedValue> retrieved;
  std::size_t rollouts = 0;
};

/// N_rollout select / simulate / reward / backpropagate cycles. Trajectories
/// are the distinct terminal nodes reached, in order of first arrival.
SearchResult run_search(const NLQuestion& q, const SearchDeps& deps, const SearchConfig& cfg);

/// Structural problems found in the tree (empty when sound).
std::vector<std::string> audit_tree(const SearchTree& tree, std::size_t n_revision);

nlohmann::json tree_to_json(const SearchTree& tree);

}  // namespace treesql
