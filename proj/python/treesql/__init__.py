"""Tree-search text-to-SQL: action space, search, value retrieval and evaluation."""

import json as _json

from . import _treesql
from ._treesql import (
    ConfigError,
    ContractViolation,
    Database,
    ExecutionResult,
    IngestError,
    IoError,
    action_name,
    build_value_index,
    edit_similarity,
    enumerate_trajectories,
    estimate_jaccard,
    exact_jaccard,
    is_legal_prefix,
    minhash_signature,
    parse_baseline_sql,
    prompt_template,
    results_equal,
    retrieve_values,
    shingles,
    uct_score,
    valid_next_actions,
)

__all__ = [
    "ConfigError",
    "ContractViolation",
    "Database",
    "ExecutionResult",
    "IngestError",
    "IoError",
    "action_name",
    "build_value_index",
    "default_config",
    "edit_similarity",
    "enumerate_trajectories",
    "estimate_jaccard",
    "exact_jaccard",
    "is_legal_prefix",
    "minhash_signature",
    "parse_baseline_sql",
    "prompt_template",
    "resolve_config",
    "results_equal",
    "retrieve_values",
    "run_benchmark",
    "search",
    "shingles",
    "uct_score",
    "valid_next_actions",
]


def default_config():
    """Search hyperparameters used when nothing is overridden."""
    return _json.loads(_treesql.default_config_json())


def resolve_config(**overrides):
    """Defaults with overrides applied and validated."""
    return _json.loads(_treesql.config_json(_json.dumps(overrides) if overrides else ""))


def search(question, db_root, db_id, model, hint="", index_path=None, **config):
    """Runs the tree search for one question.

    ``model(prompt, temperature, n, sample_offset)`` returns ``n`` completions
    (a single string is repeated).
    """
    raw = _treesql.search_json(
        question, hint, str(db_root), db_id, model, _json.dumps(config) if config else "",
        None if index_path is None else str(index_path))
    return _json.loads(raw)


def run_benchmark(dataset, db_root, out_dir, model, format="bird", mode="mcts", index_dir=None,
                  workers=1, resume=False, traces=False, **config):
    """Runs a dataset and returns the summary written to ``out_dir``."""
    raw = _treesql.run_benchmark_json(
        str(dataset), format, str(db_root), str(out_dir), model, mode,
        _json.dumps(config) if config else "",
        None if index_dir is None else str(index_dir), workers, resume, traces)
    return _json.loads(raw)
