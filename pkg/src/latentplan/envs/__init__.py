"""Desk-scale environments: VisualMatch plus oracle micro-environments."""

from .bandits import ContinuousBandit, DiscreteBandit
from .chain import ChainEnv
from .ppm import write_ppm
from .visualmatch import VisualMatchEnv

__all__ = ["ChainEnv", "ContinuousBandit", "DiscreteBandit", "VisualMatchEnv", "write_ppm", "make_env"]


def make_env(kind, **kwargs):
    """Build an environment from its config name."""
    registry = {
        "visualmatch": VisualMatchEnv,
        "chain": ChainEnv,
        "bandit": DiscreteBandit,
        "continuous_bandit": ContinuousBandit,
    }
    if kind not in registry:
        raise ValueError(f"unknown environment '{kind}' (choices: {sorted(registry)})")
    return registry[kind](**kwargs)
