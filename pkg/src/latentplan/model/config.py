"""Model hyperparameter schema and validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ActionSpace:
    kind: str  # "discrete" | "continuous"
    n: int = 0  # discrete action count
    dim: int = 0  # continuous action dimensionality

    def validate(self) -> None:
        if self.kind == "discrete":
            if self.n < 2:
                raise ConfigError("discrete action space needs n >= 2")
        elif self.kind == "continuous":
            if self.dim < 1:
                raise ConfigError("continuous action space needs dim >= 1")
        else:
            raise ConfigError(f"unknown action space kind: {self.kind!r}")

    @property
    def is_continuous(self) -> bool:
        return self.kind == "continuous"


@dataclass
class ModelConfig:
    d_model: int = 64
    simnorm_group: int = 8  # group size V; L = d_model / V simplices
    tau: float = 1.0
    n_layers: int = 2
    n_heads: int = 4
    dropout: float = 0.1
    action: ActionSpace = field(default_factory=lambda: ActionSpace("discrete", n=2))
    obs_shape: Tuple[int, ...] = (3, 5, 5)
    encoder: str = "mlp"  # "mlp" | "conv"
    encoder_norm: str = "layernorm"  # "layernorm" | "batchnorm" (conv stack)
    encoder_hidden: int = 128
    norm_kind: str = "simnorm"  # "simnorm" | "softmax" | "sigmoid"
    bins: int = 101  # reward/value support size, odd
    h_train: int = 10  # training context length (timesteps)
    h_infer: int = 10  # inference context length (timesteps)
    max_episode_steps: int = 10
    search_depth_budget: int = 64
    sigma_min: float = 0.05
    sigma_max: float = 2.0
    exact_gelu: bool = False
    with_decoder: bool = False
    debug_attention: bool = False
    dtype: str = "float32"

    def validate(self) -> None:
        if self.d_model % self.simnorm_group != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by group size {self.simnorm_group}")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.bins % 2 != 1:
            raise ConfigError("bin count must be odd")
        if self.encoder not in ("mlp", "conv"):
            raise ConfigError(f"unknown encoder kind: {self.encoder!r}")
        if self.encoder_norm not in ("layernorm", "batchnorm"):
            raise ConfigError(f"unknown encoder norm: {self.encoder_norm!r}")
        if self.norm_kind not in ("simnorm", "softmax", "sigmoid"):
            raise ConfigError(f"unknown latent norm kind: {self.norm_kind!r}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype: {self.dtype!r}")
        self.action.validate()

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32

    @property
    def pos_capacity(self) -> int:
        """Learned position table size: two tokens per timestep plus slack.

        Hypothetical search steps keep assigning ascending positions past the
        episode's own tokens, so the table also carries a search-depth margin.
        """
        span = 2 * max(self.h_train, self.h_infer, self.max_episode_steps) + 2
        return span + 2 * self.search_depth_budget

    @property
    def cache_capacity(self) -> int:
        return 2 * self.h_infer

    @property
    def obs_dim(self) -> int:
        return int(np.prod(self.obs_shape))
