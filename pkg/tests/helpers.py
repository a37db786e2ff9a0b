"""Shared test oracles: central finite differences and the op gradient suite."""

from __future__ import annotations

import math
from typing import Callable, Dict, List

import numpy as np

from latentplan import tensor as T


def finite_difference_grads(f: Callable[[], float], arrays: List[np.ndarray], eps: float = 1e-6) -> List[np.ndarray]:
    """Central differences of a scalar-valued closure w.r.t. each array, in place."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat, gf = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + eps
            fp = f()
            flat[i] = old - eps
            fm = f()
            flat[i] = old
            gf[i] = (fp - fm) / (2.0 * eps)
        grads.append(g)
    return grads


def max_rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.abs(a), np.abs(b)) + 1e-6
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def check_grads(build: Callable[[List[T.Tensor]], T.Tensor], arrays: List[np.ndarray], eps: float = 1e-6) -> float:
    """Autodiff vs central FD for scalar build(tensors); returns max rel err."""
    tensors = [T.Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    out = build(tensors)
    out.backward()
    auto = [t.grad if t.grad is not None else np.zeros_like(t.data) for t in tensors]

    def f():
        vals = [T.Tensor(t.data, dtype=np.float64) for t in tensors]
        return build(vals).item()

    fd = finite_difference_grads(f, [t.data for t in tensors], eps=eps)
    return max(max_rel_err(a, b) for a, b in zip(auto, fd))


def _rand(rng, *shape, lo=-1.0, hi=1.0):
    return rng.uniform(lo, hi, size=shape)


def op_gradient_cases(rng: np.random.Generator) -> Dict[str, Callable[[], float]]:
    """One randomized FD check per differentiable op; each returns max rel err."""

    def matmul_case():
        return check_grads(lambda ts: T.tsum(T.matmul(ts[0], ts[1])), [_rand(rng, 3, 4), _rand(rng, 4, 2)])

    def matmul_batched_case():
        w = _rand(rng, 2, 3, 2)
        return check_grads(
            lambda ts: T.tsum(T.mul(T.matmul(ts[0], ts[1]), w)),
            [_rand(rng, 2, 3, 4), _rand(rng, 4, 2)],
        )

    def add_mul_case():
        w = _rand(rng, 2, 3)
        return check_grads(lambda ts: T.tsum(T.mul(T.add(ts[0], ts[1]), w)), [_rand(rng, 2, 3), _rand(rng, 3)])

    def pow_case():
        return check_grads(lambda ts: T.tsum(T.pow_scalar(ts[0], 3.0)), [_rand(rng, 4, lo=0.5, hi=2.0)])

    def exp_log_case():
        return check_grads(lambda ts: T.tsum(T.tlog(T.texp(ts[0]))), [_rand(rng, 5)])

    def tanh_case():
        return check_grads(lambda ts: T.tsum(T.ttanh(ts[0])), [_rand(rng, 6)])

    def softmax_case():
        w = _rand(rng, 2, 5)
        return check_grads(lambda ts: T.tsum(T.mul(T.softmax(ts[0], axis=-1), w)), [_rand(rng, 2, 5, lo=-2, hi=2)])

    def log_softmax_case():
        w = _rand(rng, 2, 5)
        return check_grads(lambda ts: T.tsum(T.mul(T.log_softmax(ts[0], axis=-1), w)), [_rand(rng, 2, 5)])

    def layer_norm_case():
        w = _rand(rng, 3, 6)
        return check_grads(
            lambda ts: T.tsum(T.mul(T.layer_norm(ts[0], ts[1], ts[2], eps=1e-6), w)),
            [_rand(rng, 3, 6, lo=-2, hi=2), _rand(rng, 6, lo=0.5, hi=1.5), _rand(rng, 6)],
        )

    def gelu_case():
        # keep inputs away from huge values where tanh saturates to machine flatness
        return check_grads(lambda ts: T.tsum(T.gelu(ts[0])), [_rand(rng, 8, lo=-2.5, hi=2.5)])

    def gelu_exact_case():
        return check_grads(lambda ts: T.tsum(T.gelu(ts[0], exact=True)), [_rand(rng, 8, lo=-2.5, hi=2.5)])

    def leaky_relu_case():
        # kink at 0: sample away from it so central differences are valid
        x = _rand(rng, 8, lo=0.05, hi=1.0) * rng.choice([-1.0, 1.0], size=8)
        return check_grads(lambda ts: T.tsum(T.leaky_relu(ts[0])), [x])

    def abs_case():
        x = _rand(rng, 8, lo=0.05, hi=1.0) * rng.choice([-1.0, 1.0], size=8)
        return check_grads(lambda ts: T.tsum(T.tabs(ts[0])), [x])

    def sigmoid_case():
        return check_grads(lambda ts: T.tsum(T.sigmoid(ts[0])), [_rand(rng, 7, lo=-3, hi=3)])

    def softplus_case():
        return check_grads(lambda ts: T.tsum(T.softplus(ts[0])), [_rand(rng, 7, lo=-3, hi=3)])

    def cross_entropy_case():
        tgt = rng.dirichlet(np.ones(5), size=2)
        return check_grads(
            lambda ts: T.tsum(T.cross_entropy_from_logits(ts[0], tgt)), [_rand(rng, 2, 5, lo=-2, hi=2)]
        )

    def mean_case():
        return check_grads(lambda ts: T.tsum(T.tmean(ts[0], axis=1)), [_rand(rng, 3, 4)])

    def reshape_transpose_case():
        w = _rand(rng, 4, 3)
        return check_grads(
            lambda ts: T.tsum(T.mul(T.transpose(T.reshape(ts[0], (3, 4)), (1, 0)), w)), [_rand(rng, 12)]
        )

    def getitem_case():
        w = _rand(rng, 2, 3)
        return check_grads(lambda ts: T.tsum(T.mul(ts[0][1:3], w)), [_rand(rng, 4, 3)])

    def concat_case():
        w = _rand(rng, 5, 2)
        return check_grads(
            lambda ts: T.tsum(T.mul(T.concat([ts[0], ts[1]], axis=0), w)), [_rand(rng, 2, 2), _rand(rng, 3, 2)]
        )

    def embedding_case():
        idx = rng.integers(0, 4, size=6)
        w = _rand(rng, 6, 3)
        return check_grads(lambda ts: T.tsum(T.mul(T.embedding(ts[0], idx), w)), [_rand(rng, 4, 3)])

    def conv3x3_case():
        w = _rand(rng, 2, 2, 4, 4)
        return check_grads(
            lambda ts: T.tsum(T.mul(T.conv3x3(ts[0], ts[1], ts[2]), w)),
            [_rand(rng, 2, 3, 4, 4), _rand(rng, 2, 27), _rand(rng, 2)],
        )

    def batch_norm_case():
        w = _rand(rng, 2, 3, 2, 2)

        def build(ts):
            mean = ts[0].data.mean(axis=(0, 2, 3))
            var = ts[0].data.var(axis=(0, 2, 3))
            return T.tsum(T.mul(T.batch_norm(ts[0], ts[1], ts[2], mean, var, eps=1e-6), w))

        return check_grads(build, [_rand(rng, 2, 3, 2, 2, lo=-2, hi=2), _rand(rng, 3, lo=0.5, hi=1.5), _rand(rng, 3)])

    def linear_chain_case():
        # two-layer toy network end to end
        def build(ts):
            h = T.gelu(T.add(T.matmul(ts[0], ts[1]), ts[2]))
            out = T.matmul(h, ts[3])
            return T.tsum(T.pow_scalar(out, 2.0))

        return check_grads(build, [_rand(rng, 2, 3), _rand(rng, 3, 4), _rand(rng, 4), _rand(rng, 4, 2)])

    return {
        "matmul": matmul_case,
        "matmul_batched": matmul_batched_case,
        "add_mul": add_mul_case,
        "pow": pow_case,
        "exp_log": exp_log_case,
        "tanh": tanh_case,
        "softmax": softmax_case,
        "log_softmax": log_softmax_case,
        "layer_norm": layer_norm_case,
        "gelu": gelu_case,
        "gelu_exact": gelu_exact_case,
        "leaky_relu": leaky_relu_case,
        "abs": abs_case,
        "sigmoid": sigmoid_case,
        "softplus": softplus_case,
        "cross_entropy": cross_entropy_case,
        "mean": mean_case,
        "reshape_transpose": reshape_transpose_case,
        "getitem": getitem_case,
        "concat": concat_case,
        "embedding": embedding_case,
        "conv3x3": conv3x3_case,
        "batch_norm": batch_norm_case,
        "two_layer_net": linear_chain_case,
    }
