"""The assembled latent world model: encoder → backbone → heads.

Two usage modes:
  * training — ``unroll`` runs the full interleaved (z, a) sequence through
    the backbone in one batched forward and splits hidden states by token
    parity for the two heads;
  * planning — ``EpisodeContext`` carries a KV cache; tokens are fed one at a
    time and the hidden state of the newest token drives the heads.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .. import tensor as T
from ..tensor import Module
from .config import ModelConfig
from .encoders import MirrorDecoder, build_encoder
from .heads import ActionEmbed, DecisionHead, DynamicsHead
from .transformer import Backbone, KVCache


@dataclass
class EpisodeContext:
    """Rolling inference state for one episode (or one search-tree node)."""

    cache: KVCache

    def clone(self) -> "EpisodeContext":
        return EpisodeContext(cache=self.cache.clone())


class WorldModel(Module):
    def __init__(self, cfg: ModelConfig, seed=0):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        key = list(seed) if isinstance(seed, (list, tuple)) else [seed]
        init_rng = np.random.default_rng(np.random.SeedSequence(key + [0xE17C0DE]))
        self.encoder = build_encoder(cfg, init_rng)
        self.act_embed = ActionEmbed(cfg.action, cfg.d_model, init_rng, dtype=cfg.np_dtype)
        self.backbone = Backbone(cfg, init_rng)
        self.dynamics = DynamicsHead(cfg, init_rng)
        self.decision = DecisionHead(cfg, init_rng)
        self.decoder = MirrorDecoder(cfg, init_rng) if cfg.with_decoder else None
        self._drop_rng = np.random.default_rng(np.random.SeedSequence(key + [0xD509]))

    # ---- training-mode forward ----------------------------------------------

    def encode_observation(self, obs: np.ndarray, batched: Optional[bool] = None) -> T.Tensor:
        """obs → latent; a single observation gains (and keeps) no batch dim."""
        arr = np.asarray(obs)
        if batched is None:
            batched = arr.shape[: max(arr.ndim - len(self.cfg.obs_shape), 0)] != ()
        if not batched:
            return T.reshape(self.encoder(arr[None]), (self.cfg.d_model,))
        lead = arr.shape[: arr.ndim - len(self.cfg.obs_shape)]
        flat = arr.reshape((-1,) + tuple(self.cfg.obs_shape))
        out = self.encoder(flat)
        return T.reshape(out, lead + (self.cfg.d_model,))

    def embed_action(self, actions: np.ndarray) -> T.Tensor:
        return self.act_embed(actions)

    def unroll(self, latents: T.Tensor, actions: np.ndarray, positions: Optional[np.ndarray] = None) -> Tuple[T.Tensor, T.Tensor]:
        """Interleave (z_t, a_t) pairs and return (h_z, h_a), each (B, H, D)."""
        B, H, D = latents.shape
        emb = self.act_embed(actions)  # (B, H, D)
        tokens = T.reshape(T.stack([latents, emb], axis=2), (B, 2 * H, D))
        if positions is None:
            positions = np.arange(2 * H)
        rng = self._drop_rng if self.training else None
        hidden = self.backbone(tokens, positions=positions, drop_rng=rng)
        return hidden[:, 0::2], hidden[:, 1::2]

    def dynamics_predict(self, h_action: T.Tensor) -> Tuple[T.Tensor, T.Tensor]:
        return self.dynamics(h_action)

    def decision_predict(self, h_latent: T.Tensor):
        return self.decision(h_latent)

    # ---- planning-mode forward (single token, cached) -------------------------

    def new_episode_context(self) -> EpisodeContext:
        return EpisodeContext(cache=self.backbone.new_cache())

    def _forward_token(self, ctx: EpisodeContext, token: T.Tensor) -> np.ndarray:
        if ctx.cache.length + 1 > ctx.cache.capacity:
            ctx.cache.evict_oldest_step()
        hidden = self.backbone(T.reshape(token, (1, 1, self.cfg.d_model)), cache=ctx.cache, drop_rng=None)
        return hidden.data[0, 0]

    def append_latent(self, ctx: EpisodeContext, z) -> np.ndarray:
        """Feed one latent token through the cache; returns its hidden state."""
        data = z.data if isinstance(z, T.Tensor) else z
        with T.no_grad():
            return self._forward_token(ctx, T.Tensor(np.asarray(data, dtype=self.cfg.np_dtype)))

    def append_action(self, ctx: EpisodeContext, action) -> np.ndarray:
        with T.no_grad():
            tok = self.act_embed(np.asarray(action))
            return self._forward_token(ctx, T.reshape(tok, (self.cfg.d_model,)))

    # ---- misc -----------------------------------------------------------------

    def export_attention_csv(self, out_dir: str) -> list:
        """Dump the most recent forward's attention maps, one CSV per layer/head
        (rows = query token, cols = key token). Requires cfg.debug_attention."""
        maps = self.backbone.last_attention
        paths = []
        os.makedirs(out_dir, exist_ok=True)
        for layer, att in enumerate(maps):
            for head in range(att.shape[1]):
                path = os.path.join(out_dir, f"attention_l{layer}_h{head}.csv")
                with open(path, "w", newline="") as f:
                    w = csv.writer(f)
                    for row in att[0, head]:
                        w.writerow([f"{x:.8f}" for x in row])
                paths.append(path)
        return paths

    def state_arrays(self) -> dict:
        out = {name: p.data for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            out[f"buffer.{name}"] = buf
        return out

    def load_state_arrays(self, arrays: dict) -> None:
        from ..tensor import restore_into

        restore_into(self.named_parameters(), arrays)
        for name, buf in self.named_buffers():
            key = f"buffer.{name}"
            if key in arrays:
                buf[...] = arrays[key].astype(buf.dtype)


def clone_model(model: WorldModel) -> WorldModel:
    """Structural copy with identical parameter values (used for the target)."""
    twin = WorldModel(model.cfg, seed=0)
    for (_, src), (_, dst) in zip(model.named_parameters(), twin.named_parameters()):
        dst.data = src.data.copy()
    for (_, src), (_, dst) in zip(model.named_buffers(), twin.named_buffers()):
        dst[...] = src
    twin.eval()
    return twin


def update_target_model(
    model: WorldModel,
    target: WorldModel,
    mode: str = "soft",
    momentum: float = 0.05,
    hard_interval: int = 100,
    step: int = 0,
) -> None:
    """soft: EMA with the given momentum; hard: full copy every ``hard_interval``
    steps; none: the target is the model itself (caller passes the alias)."""
    if mode == "none" or target is model:
        return
    src = model.named_parameters()
    dst = target.named_parameters()
    if [n for n, _ in src] != [n for n, _ in dst]:
        raise ValueError("model/target parameter lists are misaligned")
    if mode == "soft":
        for (_, s), (_, d) in zip(src, dst):
            d.data += momentum * (s.data - d.data)
    elif mode == "hard":
        if step % hard_interval == 0:
            for (_, s), (_, d) in zip(src, dst):
                d.data = s.data.copy()
    else:
        raise ValueError(f"unknown target mode: {mode!r}")
    for (_, s), (_, d) in zip(model.named_buffers(), target.named_buffers()):
        d[...] = s
