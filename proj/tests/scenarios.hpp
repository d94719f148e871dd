#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "support.hpp"
#include "treesql/catalog.hpp"
#include "treesql/harness.hpp"
#include "treesql/mcts.hpp"
#include "treesql/sql_exec.hpp"

namespace treesql::testing {

/// Bandit-shaped search problem: only SQL generation taken directly from the
/// root can produce the gold query (one of three samples). Every other
/// terminal SQL executes to a distinct wrong result.
class ConvergenceEnv {
 public:
  ConvergenceEnv();

  struct Trial {
    bool root_action_strict_max = false;
    bool gold_edge_strict_max = false;
    bool final_is_gold = false;
    std::size_t trajectories = 0;
    std::vector<std::string> audit;
  };

  Trial run(std::uint64_t seed, std::size_t rollouts = 24);

  static const std::vector<std::string>& root_sqls();
  static const std::vector<std::string>& deep_sqls();
  const DatabaseCatalog& catalog() const { return catalog_; }
  const fs::path& root() const { return dir_.path(); }

 private:
  TempDir dir_;
  fs::path db_file_;
  DatabaseCatalog catalog_;
  PromptLibrary prompts_;
  NLQuestion question_;
};

/// Scripted responses for the restaurant pipeline: keywords, all six model
/// actions, one generation sample with an injected syntax error that the
/// revision action repairs.
std::string pipeline_response(const CompletionRequest& req, std::size_t sample);

struct PipelineFixture {
  TempDir dir;
  fs::path db_root;
  fs::path index_dir;
  std::vector<BenchmarkItem> items;

  PipelineFixture();
  RunOptions options(const fs::path& out, std::uint64_t seed) const;
};

}  // namespace treesql::testing
