"""AdamW with decoupled weight decay, plus global-norm gradient clipping."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .module import Parameter


@dataclass
class OptimState:
    """Per-parameter moments and the shared step counter / hyperparameters."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    t: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


class AdamW:
    def __init__(
        self,
        named_params: Sequence[Tuple[str, Parameter]],
        lr: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
    ):
        self.named_params = list(named_params)
        self.state = OptimState(lr=lr, beta1=beta1, beta2=beta2, eps=eps, weight_decay=weight_decay)
        # Eager moments: the state dict has one entry per parameter from step 0,
        # so a checkpoint's array inventory never depends on training progress.
        for name, p in self.named_params:
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def step(self) -> None:
        st = self.state
        st.t += 1
        bc1 = 1.0 - st.beta1**st.t
        bc2 = 1.0 - st.beta2**st.t
        for name, p in self.named_params:
            if p.grad is None:
                continue
            adamw_step_single(p.data, p.grad, st, name, bc1, bc2)

    def zero_grad(self) -> None:
        for _, p in self.named_params:
            p.grad = None


def adamw_step_single(
    param: np.ndarray,
    grad: np.ndarray,
    st: OptimState,
    key: str,
    bias_corr1: Optional[float] = None,
    bias_corr2: Optional[float] = None,
) -> None:
    """One AdamW update in place. Decay is decoupled: θ ← θ − lr·λ·θ, applied
    independently of the adaptive step."""
    if key not in st.m:
        st.m[key] = np.zeros_like(param)
        st.v[key] = np.zeros_like(param)
    if st.m[key].shape != param.shape:
        raise ValueError(f"optimizer state shape mismatch for {key}")
    bc1 = bias_corr1 if bias_corr1 is not None else 1.0 - st.beta1**st.t
    bc2 = bias_corr2 if bias_corr2 is not None else 1.0 - st.beta2**st.t
    if st.weight_decay:
        param -= st.lr * st.weight_decay * param
    m, v = st.m[key], st.v[key]
    m *= st.beta1
    m += (1.0 - st.beta1) * grad
    v *= st.beta2
    v += (1.0 - st.beta2) * grad * grad
    mhat = m / bc1
    vhat = v / bc2
    param -= st.lr * mhat / (np.sqrt(vhat) + st.eps)


def clip_global_norm(grads: List[np.ndarray], max_norm: float) -> Tuple[List[np.ndarray], float]:
    """Scale all grads by max_norm/‖g‖ when the global L2 norm exceeds max_norm.

    Returns the (possibly scaled, in place) grads and the pre-clip norm.
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = 0.0
    for g in grads:
        total += float((g.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads:
            g *= scale
    return grads, norm
