"""Latent-state normalizers.

The default partitions the D-vector into L = D/V groups of size V and applies
a temperature softmax inside each group, so every group is a probability
simplex and the total L1 norm is exactly L. The two ablation modes (one
softmax over all D, or an elementwise sigmoid) drop the per-group structure.
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from .config import ConfigError


def simnorm(x: T.Tensor, group: int, tau: float = 1.0) -> T.Tensor:
    d = x.shape[-1]
    if d % group != 0:
        raise ConfigError(f"latent dim {d} not divisible by group size {group}")
    grouped = T.reshape(x, x.shape[:-1] + (d // group, group))
    if tau != 1.0:
        grouped = T.mul(grouped, 1.0 / tau)
    return T.reshape(T.softmax(grouped, axis=-1), x.shape)


def latent_normalize(x: T.Tensor, kind: str, group: int, tau: float = 1.0) -> T.Tensor:
    if kind == "simnorm":
        return simnorm(x, group, tau)
    if kind == "softmax":
        y = T.mul(x, 1.0 / tau) if tau != 1.0 else x
        return T.softmax(y, axis=-1)
    if kind == "sigmoid":
        return T.sigmoid(x)
    raise ConfigError(f"unknown latent norm kind: {kind!r}")


def check_latent_invariants(z: np.ndarray, group: int, atol_group: float = 1e-5, atol_l1: float = 1e-4) -> bool:
    """True iff every group sums to 1 and the total L1 norm equals D/V."""
    d = z.shape[-1]
    g = z.reshape(z.shape[:-1] + (d // group, group))
    if (g < -1e-9).any():
        return False
    if not np.allclose(g.sum(axis=-1), 1.0, atol=atol_group):
        return False
    return bool(np.allclose(np.abs(z).sum(axis=-1), d // group, atol=atol_l1))
