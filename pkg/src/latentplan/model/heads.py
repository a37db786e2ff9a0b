"""Prediction heads and the action embedding.

Heads are two-layer GELU MLPs reading backbone hidden states: the dynamics
head (next latent + reward logits) reads hidden states at action-token
positions, the decision head (policy + value logits) reads hidden states at
latent-token positions. Output layers start at zero so an untrained model
predicts uniform distributions and zero value.
"""

from __future__ import annotations

from typing import Tuple

import numpy as np

from .. import tensor as T
from ..tensor import Embedding, Linear, Module
from .config import ActionSpace, ModelConfig
from .norms import latent_normalize


class MLPHead(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, dtype=np.float32, zero_last: bool = True):
        super().__init__()
        self.fc1 = Linear(d_in, d_in, rng, dtype=dtype)
        self.fc2 = Linear(d_in, d_out, rng, dtype=dtype, zero_init=zero_last)

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return self.fc2(T.gelu(self.fc1(x)))


class ActionEmbed(Module):
    """Discrete: learned row per action. Continuous: two-layer perceptron."""

    def __init__(self, action: ActionSpace, d_model: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.action = action
        if action.is_continuous:
            self.fc1 = Linear(action.dim, d_model, rng, dtype=dtype)
            self.fc2 = Linear(d_model, d_model, rng, dtype=dtype)
        else:
            self.table = Embedding(action.n, d_model, rng, dtype=dtype)

    def __call__(self, actions: np.ndarray) -> T.Tensor:
        if self.action.is_continuous:
            a = np.asarray(actions, dtype=self.fc1.weight.dtype)
            if a.ndim == 0:
                a = a.reshape(1)
            if a.shape[-1] != self.action.dim:
                if self.action.dim != 1:
                    raise ValueError(f"action dim {a.shape[-1]} != {self.action.dim}")
                a = a[..., None]
            return self.fc2(T.gelu(self.fc1(T.Tensor(a))))
        idx = np.asarray(actions)
        if idx.size and (idx.min() < 0 or idx.max() >= self.action.n):
            raise IndexError(f"discrete action out of range [0, {self.action.n})")
        return self.table(idx)


class DynamicsHead(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dtype = cfg.np_dtype
        self.next_latent = MLPHead(cfg.d_model, cfg.d_model, rng, dtype=dtype)
        self.reward = MLPHead(cfg.d_model, cfg.bins, rng, dtype=dtype)
        self.cfg = cfg

    def __call__(self, h_action: T.Tensor) -> Tuple[T.Tensor, T.Tensor]:
        z_next = latent_normalize(
            self.next_latent(h_action), self.cfg.norm_kind, self.cfg.simnorm_group, self.cfg.tau
        )
        return z_next, self.reward(h_action)


class DecisionHead(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dtype = cfg.np_dtype
        self.value = MLPHead(cfg.d_model, cfg.bins, rng, dtype=dtype)
        if cfg.action.is_continuous:
            self.policy = MLPHead(cfg.d_model, 2 * cfg.action.dim, rng, dtype=dtype)
        else:
            self.policy = MLPHead(cfg.d_model, cfg.action.n, rng, dtype=dtype)
        self.cfg = cfg

    def __call__(self, h_latent: T.Tensor):
        """Discrete: (policy_logits, value_logits). Continuous: ((mu, sigma), value_logits)."""
        v = self.value(h_latent)
        p = self.policy(h_latent)
        if not self.cfg.action.is_continuous:
            return p, v
        dim = self.cfg.action.dim
        mu = p[..., :dim]
        sigma = T.tclip(T.softplus(p[..., dim:]), self.cfg.sigma_min, self.cfg.sigma_max)
        return (mu, sigma), v
