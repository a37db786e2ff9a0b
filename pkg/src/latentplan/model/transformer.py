"""Causal transformer backbone with a rolling per-layer KV cache.

Blocks are post-norm: attention → dropout → output linear → dropout →
residual → LayerNorm, then the GELU feed-forward → dropout → residual →
LayerNorm. Position embeddings are learned per absolute token position;
cached keys/values keep the positions they were computed with, so planning
across cache evictions stays consistent.
"""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

from .. import tensor as T
from ..tensor import Embedding, LayerNorm, Linear, Module
from .config import ConfigError, ModelConfig

NEG_INF = -1e9


class CacheOverflowError(RuntimeError):
    pass


class KVCache:
    """Per-layer key/value memory of at most ``capacity`` tokens."""

    def __init__(self, n_layers: int, n_heads: int, capacity: int, head_dim: int, dtype=np.float32):
        self.k = np.zeros((n_layers, n_heads, capacity, head_dim), dtype=dtype)
        self.v = np.zeros_like(self.k)
        self.positions = np.full(capacity, -1, dtype=np.int64)
        self.capacity = capacity
        self.length = 0
        self.next_pos = 0

    def clone(self) -> "KVCache":
        c = KVCache.__new__(KVCache)
        c.k = self.k.copy()
        c.v = self.v.copy()
        c.positions = self.positions.copy()
        c.capacity = self.capacity
        c.length = self.length
        c.next_pos = self.next_pos
        return c

    def reset(self) -> None:
        self.length = 0
        self.next_pos = 0
        self.positions[:] = -1

    def trim_to(self, n: int) -> None:
        """Keep only the most recent n tokens."""
        if n > self.length:
            raise ValueError(f"trim_to({n}) beyond current length {self.length}")
        if n == self.length:
            return
        start = self.length - n
        self.k[:, :, :n] = self.k[:, :, start : self.length]
        self.v[:, :, :n] = self.v[:, :, start : self.length]
        self.positions[:n] = self.positions[start : self.length]
        self.positions[n:] = -1
        self.length = n

    def evict_oldest_step(self) -> None:
        """Overflow policy: drop the oldest full timestep (two tokens)."""
        self.trim_to(max(self.length - 2, 0))

    def append(self, new_k: np.ndarray, new_v: np.ndarray, positions: np.ndarray) -> None:
        """new_k/new_v: (n_layers, n_heads, t_new, head_dim)."""
        t_new = new_k.shape[2]
        if self.length + t_new > self.capacity:
            raise CacheOverflowError(f"cache overflow: {self.length}+{t_new} > {self.capacity}")
        self.k[:, :, self.length : self.length + t_new] = new_k
        self.v[:, :, self.length : self.length + t_new] = new_v
        self.positions[self.length : self.length + t_new] = positions
        self.length += t_new
        self.next_pos = int(positions[-1]) + 1

    def layer_lengths(self) -> List[int]:
        # one shared counter by construction; exposed for the invariant check
        return [self.length] * self.k.shape[0]


def kv_cache_manage(cache: KVCache, action: str, n: Optional[int] = None, kv=None) -> KVCache:
    """Uniform entry point for cache bookkeeping: append / trim_to / reset."""
    if action == "reset":
        cache.reset()
    elif action == "trim_to":
        cache.trim_to(int(n))
    elif action == "append":
        new_k, new_v, positions = kv
        if cache.length + new_k.shape[2] > cache.capacity:
            cache.evict_oldest_step()
        cache.append(new_k, new_v, positions)
    else:
        raise ValueError(f"unknown cache action: {action!r}")
    return cache


class TransformerBlock(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dtype = cfg.np_dtype
        d = cfg.d_model
        self.qkv = Linear(d, 3 * d, rng, dtype=dtype)
        self.attn_out = Linear(d, d, rng, dtype=dtype)
        self.ln1 = LayerNorm(d, dtype=dtype)
        self.ffn_in = Linear(d, 4 * d, rng, dtype=dtype)
        self.ffn_out = Linear(4 * d, d, rng, dtype=dtype)
        self.ln2 = LayerNorm(d, dtype=dtype)
        self.n_heads = cfg.n_heads
        self.head_dim = d // cfg.n_heads
        self.p_drop = cfg.dropout
        self.act_kind = "gelu_exact" if cfg.exact_gelu else "gelu"

    def _drop(self, y: T.Tensor, rng) -> T.Tensor:
        # dropout fires only in train mode AND when a generator was supplied
        return T.dropout(y, self.p_drop, rng, self.training and rng is not None)

    def __call__(
        self,
        x: T.Tensor,
        mask_add: np.ndarray,
        cached_kv: Optional[Tuple[np.ndarray, np.ndarray]],
        drop_rng: Optional[np.random.Generator],
    ) -> Tuple[T.Tensor, np.ndarray, np.ndarray, np.ndarray]:
        B, t, d = x.shape
        nh, hd = self.n_heads, self.head_dim
        qkv = T.reshape(self.qkv(x), (B, t, 3, nh, hd))
        q = T.transpose(qkv[:, :, 0], (0, 2, 1, 3))  # (B, nh, t, hd)
        k = T.transpose(qkv[:, :, 1], (0, 2, 1, 3))
        v = T.transpose(qkv[:, :, 2], (0, 2, 1, 3))
        if cached_kv is not None:
            ck, cv = cached_kv  # (nh, L, hd) — cached inference is batch-1
            k_all = T.concat([T.Tensor(ck[None]), k], axis=2)
            v_all = T.concat([T.Tensor(cv[None]), v], axis=2)
        else:
            k_all, v_all = k, v
        scores = T.mul(T.matmul(q, T.swapaxes(k_all, -1, -2)), 1.0 / math.sqrt(hd))
        att = T.softmax(T.add(scores, mask_add), axis=-1)
        y = T.matmul(att, v_all)
        y = T.reshape(T.transpose(y, (0, 2, 1, 3)), (B, t, d))
        y = self._drop(y, drop_rng)
        y = self._drop(self.attn_out(y), drop_rng)
        x2 = self.ln1(T.add(y, x))
        f = self.ffn_out(T.activation(self.ffn_in(x2), self.act_kind))
        out = self.ln2(T.add(self._drop(f, drop_rng), x2))
        return out, k.data[0], v.data[0], att.data


class Backbone(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        self.pos_emb = Embedding(cfg.pos_capacity, cfg.d_model, rng, dtype=cfg.np_dtype)
        self.blocks = [TransformerBlock(cfg, rng) for _ in range(cfg.n_layers)]
        self.cfg = cfg
        self.last_attention: List[np.ndarray] = []

    def new_cache(self) -> KVCache:
        c = self.cfg
        return KVCache(c.n_layers, c.n_heads, c.cache_capacity, c.d_model // c.n_heads, dtype=c.np_dtype)

    def __call__(
        self,
        tokens: T.Tensor,
        positions: Optional[np.ndarray] = None,
        cache: Optional[KVCache] = None,
        drop_rng: Optional[np.random.Generator] = None,
    ) -> T.Tensor:
        """tokens (B, t, D) → hidden states (B, t, D).

        With a cache, new tokens attend over every cached token plus the causal
        prefix of themselves; their keys/values are appended to the cache.
        """
        B, t, d = tokens.shape
        prefix = cache.length if cache is not None else 0
        if positions is None:
            start = cache.next_pos if cache is not None else 0
            positions = np.arange(start, start + t)
        positions = np.asarray(positions)
        if positions.max() >= self.cfg.pos_capacity:
            raise CacheOverflowError(
                f"position {positions.max()} exceeds embedding capacity {self.cfg.pos_capacity}"
            )
        if cache is not None:
            if B != 1:
                raise ValueError("cached forward is single-sequence (batch 1)")
            if positions.ndim != 1:
                raise ValueError("cached forward takes a flat position array")
            if cache.length + t > cache.capacity:
                raise CacheOverflowError(f"cache overflow: {cache.length}+{t} > {cache.capacity}")

        if positions.ndim == 1:
            pos = T.reshape(self.pos_emb(positions), (1, t, d))
        else:  # (B, t): windows sampled at different in-episode offsets
            pos = self.pos_emb(positions)
        x = T.add(tokens, pos)
        dt = self.cfg.np_dtype
        mask = np.zeros((t, prefix + t), dtype=dt)
        if t > 1:
            future = np.triu(np.ones((t, t), dtype=bool), k=1)
            mask[:, prefix:][future] = NEG_INF

        new_ks, new_vs = [], []
        if self.cfg.debug_attention:
            self.last_attention = []
        for i, block in enumerate(self.blocks):
            cached_kv = (cache.k[i, :, : cache.length], cache.v[i, :, : cache.length]) if cache is not None and prefix else None
            x, nk, nv, att = block(x, mask, cached_kv, drop_rng)
            new_ks.append(nk)
            new_vs.append(nv)
            if self.cfg.debug_attention:
                self.last_attention.append(att)
        if cache is not None:
            cache.append(np.stack(new_ks), np.stack(new_vs), positions)
        return x
