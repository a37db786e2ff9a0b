"""Observation encoders (and the mirror decoder used for L1 regularization).

The conv stack follows the small-image recipe: three 3×3 stride-1 convolutions
(3→16→32→64 channels) each followed by a norm layer and LeakyReLU, global
average pooling, and a linear projection into the latent. The default norm is
LayerNorm over channels for batch-size-independent determinism; BatchNorm is
available behind ``encoder_norm="batchnorm"``.
"""

from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..tensor import LayerNorm, Linear, Module, Parameter
from .config import ModelConfig
from .norms import latent_normalize

_CONV_CHANNELS = (16, 32, 64)


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.gain = Parameter(np.ones(channels), dtype=dtype)
        self.bias = Parameter(np.zeros(channels), dtype=dtype)
        self.momentum = momentum
        self.eps = eps
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def __call__(self, x: T.Tensor) -> T.Tensor:
        if self.training:
            mean = x.data.mean(axis=(0, 2, 3))
            var = x.data.var(axis=(0, 2, 3))
            rm, rv = self._buffers["running_mean"], self._buffers["running_var"]
            rm += self.momentum * (mean - rm)
            rv += self.momentum * (var - rv)
            return T.batch_norm(x, self.gain, self.bias, mean, var, eps=self.eps, stats_from_batch=True)
        return T.batch_norm(
            x,
            self.gain,
            self.bias,
            self._buffers["running_mean"].copy(),
            self._buffers["running_var"].copy(),
            eps=self.eps,
            stats_from_batch=False,
        )


class ChannelLayerNorm(Module):
    """LayerNorm over the channel axis at every spatial site of (B,C,H,W)."""

    def __init__(self, channels: int, dtype=np.float32):
        super().__init__()
        self.ln = LayerNorm(channels, dtype=dtype)

    def __call__(self, x: T.Tensor) -> T.Tensor:
        return T.transpose(self.ln(T.transpose(x, (0, 2, 3, 1))), (0, 3, 1, 2))


class ConvEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dtype = cfg.np_dtype
        c_in = cfg.obs_shape[0]
        self.convs = []
        self.norms = []
        for c_out in _CONV_CHANNELS:
            w = rng.normal(0.0, np.sqrt(2.0 / (c_in * 9)), size=(c_out, c_in * 9))
            conv = Module()
            conv.weight = Parameter(w, dtype=dtype)
            conv.bias = Parameter(np.zeros(c_out), dtype=dtype)
            self.convs.append(conv)
            if cfg.encoder_norm == "batchnorm":
                self.norms.append(BatchNorm2d(c_out, dtype=dtype))
            else:
                self.norms.append(ChannelLayerNorm(c_out, dtype=dtype))
            c_in = c_out
        self.proj = Linear(_CONV_CHANNELS[-1], cfg.d_model, rng, dtype=dtype)
        self.cfg = cfg

    def __call__(self, obs: np.ndarray) -> T.Tensor:
        x = T.Tensor(np.asarray(obs, dtype=self.cfg.np_dtype))
        for conv, norm in zip(self.convs, self.norms):
            x = T.conv3x3(x, conv.weight, conv.bias)
            x = norm(x)
            x = T.leaky_relu(x)
        pooled = T.tmean(x, axis=(2, 3))  # global average pool → (B, C)
        return latent_normalize(self.proj(pooled), self.cfg.norm_kind, self.cfg.simnorm_group, self.cfg.tau)


class MLPEncoder(Module):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dtype = cfg.np_dtype
        self.fc1 = Linear(cfg.obs_dim, cfg.encoder_hidden, rng, dtype=dtype)
        self.ln = LayerNorm(cfg.encoder_hidden, dtype=dtype)
        self.fc2 = Linear(cfg.encoder_hidden, cfg.d_model, rng, dtype=dtype)
        self.cfg = cfg

    def __call__(self, obs: np.ndarray) -> T.Tensor:
        flat = np.asarray(obs, dtype=self.cfg.np_dtype).reshape(len(obs), -1)
        h = T.leaky_relu(self.ln(self.fc1(T.Tensor(flat))))
        return latent_normalize(self.fc2(h), self.cfg.norm_kind, self.cfg.simnorm_group, self.cfg.tau)


def build_encoder(cfg: ModelConfig, rng: np.random.Generator) -> Module:
    return ConvEncoder(cfg, rng) if cfg.encoder == "conv" else MLPEncoder(cfg, rng)


class MirrorDecoder(Module):
    """Latent → observation MLP used only by the L1 decode-regularization term."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__()
        dtype = cfg.np_dtype
        self.fc1 = Linear(cfg.d_model, cfg.encoder_hidden, rng, dtype=dtype)
        self.fc2 = Linear(cfg.encoder_hidden, cfg.obs_dim, rng, dtype=dtype)
        self.cfg = cfg

    def __call__(self, z: T.Tensor) -> T.Tensor:
        return self.fc2(T.leaky_relu(self.fc1(z)))
