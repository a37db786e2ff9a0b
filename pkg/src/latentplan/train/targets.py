"""n-step TD value targets bootstrapped from the target model.

Targets are recomputed at sample time: the target model runs once over each
sampled episode's full stored prefix (grouped by episode length so the
forwards batch), yielding a per-timestep bootstrap value array. The n-step
sum then truncates at termination, dropping the bootstrap term when the
episode ends within the n-step window.
"""

import numpy as np

from .. import tensor as T
from ..scalars import categorical_to_scalar


def compute_value_target(rewards, t, n, gamma, bootstrap_values):
    """v_t = sum_k gamma^k r_{t+k} over k < n (truncated) + gamma^n * v(t+n)."""
    length = len(rewards)
    if not 0 <= t < length:
        raise IndexError(f"t={t} outside segment of length {length}")
    end = min(t + n, length)
    v = 0.0
    for k in range(end - t):
        v += (gamma ** k) * float(rewards[t + k])
    if t + n < length:
        v += (gamma ** n) * float(bootstrap_values[t + n])
    return v


def episode_bootstrap_values(target_model, segments):
    """Per-timestep target-head values for whole episodes, batched by length.

    Returns {id(segment): (T,) float array}. Runs under no_grad with absolute
    in-episode positions, so the value at index t sees exactly the stored
    prefix up to o_t.
    """
    by_length = {}
    for seg in segments:
        by_length.setdefault(len(seg), []).append(seg)
    out = {}
    with T.no_grad():
        for length, group in sorted(by_length.items()):
            obs = np.stack([seg.observations[:length] for seg in group])
            acts = np.stack([seg.actions for seg in group])
            flat = obs.reshape((-1,) + obs.shape[2:])
            z = target_model.encode_observation(flat, batched=True)
            z = T.reshape(z, (len(group), length, -1))
            hz, _ = target_model.unroll(z, acts)
            _, v_logits = target_model.decision_predict(hz)
            probs = T.softmax(v_logits).data.astype(np.float64)
            values = categorical_to_scalar(probs)
            for seg, vals in zip(group, values):
                out[id(seg)] = vals
    return out


def window_value_targets(samples, window, n, gamma, target_model):
    """(B, window) n-step targets for sampled (segment, offset) windows."""
    unique = {id(seg): seg for seg, _ in samples}
    boot = episode_bootstrap_values(target_model, list(unique.values()))
    targets = np.zeros((len(samples), window), dtype=np.float64)
    for i, (seg, off) in enumerate(samples):
        vals = boot[id(seg)]
        for j in range(window):
            targets[i, j] = compute_value_target(seg.rewards, off + j, n, gamma, vals)
    return targets
