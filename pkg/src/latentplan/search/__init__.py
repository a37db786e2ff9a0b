"""Monte Carlo tree search in latent space with PUCT selection."""

from .core import (
    EdgeStats,
    MinMaxStats,
    SearchConfig,
    SearchNode,
    SearchResult,
    apply_root_noise,
    backup,
    check_visit_conservation,
    improved_policy,
    puct_scores,
    run_search,
    sample_continuous_actions,
    select_child,
    write_search_trace,
)
from .planners import Evaluation, OracleEnvPlanner, WorldModelPlanner, exhaustive_best_action

__all__ = [
    "EdgeStats",
    "Evaluation",
    "MinMaxStats",
    "OracleEnvPlanner",
    "SearchConfig",
    "SearchNode",
    "SearchResult",
    "WorldModelPlanner",
    "apply_root_noise",
    "backup",
    "check_visit_conservation",
    "exhaustive_best_action",
    "improved_policy",
    "puct_scores",
    "run_search",
    "sample_continuous_actions",
    "select_child",
    "write_search_trace",
]
