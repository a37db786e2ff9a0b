"""Minimal dense-tensor engine with reverse-mode autodiff.

Tensors wrap numpy arrays (float32 by default, float64 for gradient checks).
Every differentiable op records a backward closure on the implicit graph;
``backward()`` on a scalar root walks the graph in reverse topological order.
A module-level switch (``no_grad``) disables recording entirely so that
inference pays no graph-building cost.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

Arrayish = Union["Tensor", np.ndarray, float, int, list, tuple]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Context manager: ops executed inside build no backward graph."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(
        self,
        data: Arrayish,
        requires_grad: bool = False,
        dtype: Optional[np.dtype] = None,
    ):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float32)
        self.data: np.ndarray = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op: str = "leaf"

    # ---- basic properties -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, grad={self.requires_grad})"

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Stop-gradient marker: shares data, drops graph membership."""
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # ---- graph plumbing ---------------------------------------------------

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self, record: Optional["ComputationRecord"] = None) -> "ComputationRecord":
        """Reverse-topological gradient accumulation from a scalar root."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar root, got shape {self.shape}")
        rec = record if record is not None else ComputationRecord.from_root(self)
        self._accumulate(np.ones_like(self.data))
        for t in reversed(rec.order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)
        return rec

    # ---- operator sugar ---------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other, self.dtype), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other, self.dtype), mul(self, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tensor(other, self.dtype)
        return mul(self, pow_scalar(other, -1.0))

    def __rtruediv__(self, other):
        return mul(_as_tensor(other, self.dtype), pow_scalar(self, -1.0))

    def __pow__(self, p):
        return pow_scalar(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes if axes else None)

    def swapaxes(self, a, b):
        return swapaxes(self, a, b)


class ComputationRecord:
    """Topologically ordered list of the ops behind one scalar result.

    ``order`` holds the output tensor of every recorded op such that each
    entry appears after every entry that produced one of its inputs.
    """

    def __init__(self, order: list):
        self.order = order

    @staticmethod
    def from_root(root: Tensor) -> "ComputationRecord":
        order: list = []
        seen = set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        return ComputationRecord(order)

    def entries(self) -> list:
        """(op_name, input_ids, output_id) triples, topologically ordered."""
        return [(t._op, tuple(id(p) for p in t._parents), id(t)) for t in self.order]


# ---- op construction helpers ----------------------------------------------


def _as_tensor(x: Arrayish, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype if dtype is not None else np.float32))


def _pair(a: Arrayish, b: Arrayish):
    """Coerce a binary op's operands; a bare scalar adopts its sibling's dtype
    so float64 graphs are not polluted by float32-rounded constants."""
    if isinstance(a, Tensor):
        return a, _as_tensor(b, dtype=a.dtype)
    if isinstance(b, Tensor):
        return _as_tensor(a, dtype=b.dtype), b
    return _as_tensor(a), _as_tensor(b)


def _make(data: np.ndarray, parents: Sequence[Tensor], bw: Optional[Callable], op: str) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._op = op
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = bw
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the original operand shape."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---- elementwise arithmetic -------------------------------------------------


def add(a: Arrayish, b: Arrayish) -> Tensor:
    a, b = _pair(a, b)
    data = a.data + b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(data, (a, b), bw, "add")


def mul(a: Arrayish, b: Arrayish) -> Tensor:
    a, b = _pair(a, b)
    data = a.data * b.data

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.shape))

    return _make(data, (a, b), bw, "mul")


def pow_scalar(a: Arrayish, p: float) -> Tensor:
    a = _as_tensor(a)
    data = a.data**p

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * p * a.data ** (p - 1))

    return _make(data, (a,), bw, "pow")


def texp(a: Arrayish) -> Tensor:
    a = _as_tensor(a)
    data = np.exp(a.data)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * data)

    return _make(data, (a,), bw, "exp")


def tlog(a: Arrayish) -> Tensor:
    a = _as_tensor(a)
    data = np.log(a.data)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return _make(data, (a,), bw, "log")


def tsqrt(a: Arrayish) -> Tensor:
    return pow_scalar(a, 0.5)


def ttanh(a: Arrayish) -> Tensor:
    a = _as_tensor(a)
    data = np.tanh(a.data)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - data * data))

    return _make(data, (a,), bw, "tanh")


# ---- reductions / shape ------------------------------------------------------


def tsum(a: Arrayish, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if not a.requires_grad:
            return
        gg = g if (axis is None or keepdims) else np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(gg, a.shape).astype(a.dtype, copy=True))

    return _make(np.asarray(data), (a,), bw, "sum")


def tmean(a: Arrayish, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        n = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([a.shape[ax] for ax in axes]))
    return mul(tsum(a, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(a: Arrayish, shape: tuple) -> Tensor:
    a = _as_tensor(a)
    data = a.data.reshape(shape)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.shape))

    return _make(data, (a,), bw, "reshape")


def transpose(a: Arrayish, axes: Optional[tuple] = None) -> Tensor:
    a = _as_tensor(a)
    data = a.data.transpose(axes)
    inv = None if axes is None else tuple(np.argsort(axes))

    def bw(g):
        if a.requires_grad:
            a._accumulate(g.transpose(inv))

    return _make(data, (a,), bw, "transpose")


def swapaxes(a: Arrayish, ax1: int, ax2: int) -> Tensor:
    a = _as_tensor(a)
    data = a.data.swapaxes(ax1, ax2)

    def bw(g):
        if a.requires_grad:
            a._accumulate(g.swapaxes(ax1, ax2))

    return _make(data, (a,), bw, "swapaxes")


def getitem(a: Tensor, idx) -> Tensor:
    data = a.data[idx]

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full)

    return _make(np.ascontiguousarray(data), (a,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def bw(g):
        offset = 0
        for t, s in zip(tensors, sizes):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + s)
                t._accumulate(g[tuple(sl)])
            offset += s

    return _make(data, tensors, bw, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


# ---- linear algebra ---------------------------------------------------------


def matmul(a: Arrayish, b: Arrayish) -> Tensor:
    """Matrix product with numpy broadcasting over leading (batch) dims."""
    a, b = _pair(a, b)
    if a.shape[-1] != b.shape[-2 if b.ndim > 1 else 0]:
        raise ValueError(f"matmul inner dims disagree: {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            ga = np.matmul(g, b.data.swapaxes(-1, -2)) if b.ndim > 1 else np.multiply.outer(g, b.data)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            if a.ndim > 1:
                gb = np.matmul(a.data.swapaxes(-1, -2), g)
            else:
                gb = np.multiply.outer(a.data, g)
            b._accumulate(_unbroadcast(gb, b.shape))

    return _make(data, (a, b), bw, "matmul")


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
    """Row gather: out[i...] = table[indices[i...]] (scatter-add backward)."""
    idx = np.asarray(indices)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding index out of range for table of {table.shape[0]} rows")
    data = table.data[idx]

    def bw(g):
        if table.requires_grad:
            full = np.zeros_like(table.data)
            np.add.at(full, idx, g)
            table._accumulate(full)

    return _make(data, (table,), bw, "embedding")


# ---- fused nonlinear ops ------------------------------------------------------

_GELU_C = math.sqrt(2.0 / math.pi)


def softmax(x: Arrayish, axis: int = -1) -> Tensor:
    """Numerically stabilized softmax along ``axis``."""
    x = _as_tensor(x)
    if np.isnan(x.data).any():
        raise ValueError("softmax received NaN input")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if x.requires_grad:
            dot = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate(y * (g - dot))

    return _make(y, (x,), bw, "softmax")


def log_softmax(x: Arrayish, axis: int = -1) -> Tensor:
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    y = shifted - lse

    def bw(g):
        if x.requires_grad:
            x._accumulate(g - np.exp(y) * g.sum(axis=axis, keepdims=True))

    return _make(y, (x,), bw, "log_softmax")


def layer_norm(x: Arrayish, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    x = _as_tensor(x)
    if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
        raise ValueError("layer_norm gain/bias must match the last dimension")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    y = xhat * gain.data + bias.data

    def bw(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            bias._accumulate(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gh = g * gain.data
            m1 = gh.mean(axis=-1, keepdims=True)
            m2 = (gh * xhat).mean(axis=-1, keepdims=True)
            x._accumulate(inv * (gh - m1 - xhat * m2))

    return _make(y, (x, gain, bias), bw, "layer_norm")


def gelu(x: Arrayish, exact: bool = False) -> Tensor:
    """GELU activation; tanh approximation by default, erf form behind a flag."""
    x = _as_tensor(x)
    if exact:
        from scipy.special import erf

        cdf = 0.5 * (1.0 + erf(x.data / math.sqrt(2.0)))
        y = x.data * cdf

        def bw(g):
            if x.requires_grad:
                pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)
                x._accumulate(g * (cdf + x.data * pdf))

        return _make(y, (x,), bw, "gelu_exact")

    u = _GELU_C * (x.data + 0.044715 * x.data**3)
    t = np.tanh(u)
    y = 0.5 * x.data * (1.0 + t)

    def bw(g):
        if x.requires_grad:
            du = _GELU_C * (1.0 + 3 * 0.044715 * x.data * x.data)
            x._accumulate(g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du))

    return _make(y, (x,), bw, "gelu")


def leaky_relu(x: Arrayish, slope: float = 0.01) -> Tensor:
    x = _as_tensor(x)
    pos = x.data > 0
    y = np.where(pos, x.data, slope * x.data)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * np.where(pos, 1.0, slope).astype(x.dtype))

    return _make(y, (x,), bw, "leaky_relu")


def sigmoid(x: Arrayish) -> Tensor:
    x = _as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * y * (1.0 - y))

    return _make(y, (x,), bw, "sigmoid")


def tabs(x: Arrayish) -> Tensor:
    x = _as_tensor(x)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * np.sign(x.data))

    return _make(np.abs(x.data), (x,), bw, "abs")


def tclip(x: Arrayish, lo: float, hi: float) -> Tensor:
    x = _as_tensor(x)
    y = np.clip(x.data, lo, hi)
    inside = ((x.data >= lo) & (x.data <= hi)).astype(x.dtype)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * inside)

    return _make(y, (x,), bw, "clip")


def softplus(x: Arrayish) -> Tensor:
    x = _as_tensor(x)
    y = np.logaddexp(0.0, x.data)

    def bw(g):
        if x.requires_grad:
            x._accumulate(g / (1.0 + np.exp(-x.data)))

    return _make(y, (x,), bw, "softplus")


def activation(x: Arrayish, kind: str) -> Tensor:
    if kind == "gelu":
        return gelu(x)
    if kind == "gelu_exact":
        return gelu(x, exact=True)
    if kind == "leaky_relu":
        return leaky_relu(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation kind: {kind!r}")


def dropout(x: Arrayish, p: float, rng: np.random.Generator, training: bool) -> Tensor:
    """Inverted dropout; identity when eval or p == 0."""
    x = _as_tensor(x)
    if not training or p <= 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    y = x.data * mask

    def bw(g):
        if x.requires_grad:
            x._accumulate(g * mask)

    return _make(y, (x,), bw, "dropout")


def cross_entropy_from_logits(logits: Arrayish, target: Arrayish, axis: int = -1) -> Tensor:
    """−Σ target · log_softmax(logits) along ``axis``; grads flow to logits only.

    ``target`` must be a probability distribution along ``axis`` (validated).
    Returns per-row cross-entropies (scalar for 1-D inputs).
    """
    logits = _as_tensor(logits)
    tgt = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=logits.dtype)
    if (tgt < -1e-9).any():
        raise ValueError("cross-entropy target has negative entries")
    sums = tgt.sum(axis=axis)
    if not np.allclose(sums, 1.0, atol=1e-6):
        raise ValueError("cross-entropy target does not sum to 1")
    shifted = logits.data - logits.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    logp = shifted - lse
    y = -(tgt * logp).sum(axis=axis)

    def bw(g):
        if logits.requires_grad:
            p = np.exp(logp)
            logits._accumulate((p - tgt) * np.expand_dims(g, axis))

    return _make(np.asarray(y), (logits,), bw, "cross_entropy")


# ---- image ops (3×3 stride-1 convolution via im2col) ---------------------------


def im2col3x3(x: Tensor) -> Tensor:
    """(B,C,H,W) → (B, H·W, C·9) patch matrix, zero-padded by 1."""
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2, W + 2), dtype=x.dtype)
    xp[:, :, 1 : H + 1, 1 : W + 1] = x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(B, H * W, C * 9)

    def bw(g):
        if not x.requires_grad:
            return
        gw = g.reshape(B, H, W, C, 3, 3)
        gp = np.zeros((B, C, H + 2, W + 2), dtype=x.dtype)
        for di in range(3):
            for dj in range(3):
                gp[:, :, di : di + H, dj : dj + W] += gw[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
        x._accumulate(gp[:, :, 1 : H + 1, 1 : W + 1])

    return _make(np.ascontiguousarray(cols), (x,), bw, "im2col3x3")


def conv3x3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """3×3 stride-1 pad-1 convolution; weight (C_out, C_in·9), bias (C_out,)."""
    B, C, H, W = x.shape
    cols = im2col3x3(x)
    out = add(matmul(cols, transpose(weight)), bias)  # (B, H·W, C_out)
    return transpose(reshape(out, (B, H, W, weight.shape[0])), (0, 3, 1, 2))


def batch_norm(
    x: Tensor,
    gain: Tensor,
    bias: Tensor,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float = 1e-5,
    stats_from_batch: bool = True,
) -> Tensor:
    """Channel-wise normalization of (B,C,H,W) with externally supplied stats.

    With ``stats_from_batch`` the caller passed this batch's own statistics and
    the backward pass differentiates through them; otherwise (eval mode with
    running statistics) the stats are constants.
    """
    x = _as_tensor(x)
    shape = (1, -1, 1, 1)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(shape)) * inv.reshape(shape)
    y = xhat * gain.data.reshape(shape) + bias.data.reshape(shape)
    n = x.shape[0] * x.shape[2] * x.shape[3]

    def bw(g):
        if gain.requires_grad:
            gain._accumulate((g * xhat).sum(axis=(0, 2, 3)))
        if bias.requires_grad:
            bias._accumulate(g.sum(axis=(0, 2, 3)))
        if x.requires_grad:
            gh = g * gain.data.reshape(shape)
            if stats_from_batch:
                m1 = gh.sum(axis=(0, 2, 3), keepdims=True) / n
                m2 = (gh * xhat).sum(axis=(0, 2, 3), keepdims=True) / n
                x._accumulate(inv.reshape(shape) * (gh - m1 - xhat * m2))
            else:
                x._accumulate(inv.reshape(shape) * gh)

    return _make(y, (x, gain, bias), bw, "batch_norm")
