"""Scalar <-> categorical transforms for distributional reward/value heads.

Scalars are squashed by an invertible signed-sqrt contraction and then spread
as a two-hot weighting over the two adjacent integers of a fixed symmetric
support, turning regression into cross-entropy over bins.
"""

import numpy as np

CONTRACT_EPS = 1e-3
SUPPORT_MAX = 50  # integer support -50..50 -> 101 bins
NUM_BINS = 2 * SUPPORT_MAX + 1


def support_bins(support_max=SUPPORT_MAX):
    return np.arange(-support_max, support_max + 1, dtype=np.float64)


def contract(x):
    """h(x) = sign(x)(sqrt(|x|+1) - 1) + eps*x"""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * (np.sqrt(np.abs(x) + 1.0) - 1.0) + CONTRACT_EPS * x


def expand(y):
    """Closed-form inverse of contract()."""
    y = np.asarray(y, dtype=np.float64)
    inner = np.sqrt(1.0 + 4.0 * CONTRACT_EPS * (np.abs(y) + 1.0 + CONTRACT_EPS))
    return np.sign(y) * (((inner - 1.0) / (2.0 * CONTRACT_EPS)) ** 2 - 1.0)


def scalar_to_categorical(x, support_max=SUPPORT_MAX):
    """Two-hot encode scalars (any shape) into (..., 2*support_max+1) weights."""
    y = np.clip(contract(x), -support_max, support_max)
    lo = np.floor(y)
    frac = y - lo
    idx = (lo + support_max).astype(np.int64)
    flat_idx = idx.reshape(-1)
    flat_frac = frac.reshape(-1)
    n_bins = 2 * support_max + 1
    out = np.zeros((flat_idx.size, n_bins), dtype=np.float64)
    rows = np.arange(flat_idx.size)
    out[rows, flat_idx] = 1.0 - flat_frac
    hi = np.minimum(flat_idx + 1, n_bins - 1)
    out[rows, hi] += flat_frac
    return out.reshape(y.shape + (n_bins,))


def categorical_to_scalar(probs, support_max=SUPPORT_MAX):
    """Inverse map: expectation over the support, then expand()."""
    probs = np.asarray(probs, dtype=np.float64)
    n_bins = 2 * support_max + 1
    if probs.shape[-1] != n_bins:
        raise ValueError(f"expected {n_bins} bins, got {probs.shape[-1]}")
    if (probs < -1e-7).any() or not np.allclose(probs.sum(axis=-1), 1.0, atol=1e-4):
        raise ValueError("probs must be a distribution over the support")
    return expand(probs @ support_bins(support_max))
