"""Parameter containers: a small Module system over the Tensor engine."""

from __future__ import annotations

from typing import Iterator, List, Optional, Tuple

import numpy as np

from .core import Tensor, add, matmul


class Parameter(Tensor):
    """A Tensor that is a trainable leaf of the model."""

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Module:
    """Base class: parameter discovery, train/eval mode, recursion.

    Child modules/parameters are found by walking ``__dict__`` (plus lists and
    dicts of them) in sorted attribute order, so parameter naming is
    deterministic across runs and processes. A parameter or buffer reachable
    through several paths (a trunk shared by task models) is reported once,
    under the first path in traversal order — optimizers, EMA updates, and
    checkpoints each touch it exactly once.
    """

    def __init__(self):
        self.training = True
        self._buffers: dict = {}

    def register_buffer(self, name: str, arr: np.ndarray) -> None:
        """Non-trainable state that still belongs in checkpoints (e.g. running stats)."""
        self._buffers[name] = arr

    def named_buffers(self, prefix: str = "", _seen: Optional[set] = None) -> List[Tuple[str, np.ndarray]]:
        seen = set() if _seen is None else _seen
        out: List[Tuple[str, np.ndarray]] = []
        for name in sorted(getattr(self, "_buffers", {})):
            buf = self._buffers[name]
            if id(buf) not in seen:
                seen.add(id(buf))
                out.append((f"{prefix}{name}", buf))
        for name, child in self._children():
            if isinstance(child, Module):
                out.extend(child.named_buffers(prefix=f"{prefix}{name}.", _seen=seen))
        return out

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name in sorted(self.__dict__):
            val = self.__dict__[name]
            if isinstance(val, (Parameter, Module)):
                yield name, val
            elif isinstance(val, (list, tuple)):
                for i, v in enumerate(val):
                    if isinstance(v, (Parameter, Module)):
                        yield f"{name}.{i}", v
            elif isinstance(val, dict):
                for k in sorted(val):
                    if isinstance(val[k], (Parameter, Module)):
                        yield f"{name}.{k}", val[k]

    def named_parameters(self, prefix: str = "", _seen: Optional[set] = None) -> List[Tuple[str, Parameter]]:
        seen = set() if _seen is None else _seen
        out: List[Tuple[str, Parameter]] = []
        for name, child in self._children():
            full = f"{prefix}{name}"
            if isinstance(child, Parameter):
                if id(child) not in seen:
                    seen.add(id(child))
                    out.append((full, child))
            else:
                out.extend(child.named_parameters(prefix=full + ".", _seen=seen))
        return out

    def parameters(self) -> List[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self._children():
            if isinstance(child, Module):
                yield from child.modules()

    def train(self) -> "Module":
        for m in self.modules():
            m.training = True
        return self

    def eval(self) -> "Module":
        for m in self.modules():
            m.training = False
        return self

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


class Linear(Module):
    """y = x W^T + b with normal(0, std) init; final layers often zero-init."""

    def __init__(
        self,
        in_features: int,
        out_features: int,
        rng: np.random.Generator,
        std: float = 0.02,
        zero_init: bool = False,
        bias: bool = True,
        dtype=np.float32,
    ):
        super().__init__()
        if zero_init:
            w = np.zeros((out_features, in_features))
        else:
            w = rng.normal(0.0, std, size=(out_features, in_features))
        self.weight = Parameter(w, dtype=dtype)
        self.bias = Parameter(np.zeros(out_features), dtype=dtype) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight.swapaxes(0, 1))
        if self.bias is not None:
            y = add(y, self.bias)
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.gain = Parameter(np.ones(dim), dtype=dtype)
        self.bias = Parameter(np.zeros(dim), dtype=dtype)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        from .core import layer_norm

        return layer_norm(x, self.gain, self.bias, eps=self.eps)


class Embedding(Module):
    def __init__(self, num_rows: int, dim: int, rng: np.random.Generator, std: float = 0.02, dtype=np.float32):
        super().__init__()
        self.weight = Parameter(rng.normal(0.0, std, size=(num_rows, dim)), dtype=dtype)

    def __call__(self, indices: np.ndarray) -> Tensor:
        from .core import embedding

        return embedding(self.weight, indices)
