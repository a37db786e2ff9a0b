"""The joint world-model/policy objective and its ablation switches.

One training window contributes four cross-terms per timestep: squared error
between the predicted next latent and the target encoder's (gradient-stopped)
latent, cross-entropy of the two-hot reward, cross-entropy of the policy
against the search-improved policy, and cross-entropy of the two-hot n-step
value target. Everything is averaged over batch and time; the total is the
beta-weighted sum, optionally plus an entropy bonus and an L1 decode
regularizer.
"""

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .. import tensor as T
from ..scalars import scalar_to_categorical

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LossWeights:
    beta_z: float = 10.0
    beta_r: float = 1.0
    beta_p: float = 1.0
    beta_v: float = 0.5
    entropy_coef: float = 1e-4
    decode_coef: float = 0.0

    def validate(self):
        for name, val in self.__dict__.items():
            if val < 0:
                raise ValueError(f"loss weight {name} must be >= 0, got {val}")
        return self


def gaussian_log_density(actions, mu, sigma):
    """Sum over action dims of log N(a; mu, sigma^2); actions are constants.

    actions: (..., K, dim) array; mu, sigma: (..., dim) Tensors.
    Returns a (..., K) Tensor.
    """
    shape = mu.shape[:-1] + (1, mu.shape[-1])
    mu_b = T.reshape(mu, shape)
    sigma_b = T.reshape(sigma, shape)
    diff = T.add(T.Tensor(np.asarray(actions, dtype=mu.dtype)), T.mul(mu_b, -1.0))
    zscore = T.mul(diff, T.pow_scalar(sigma_b, -1.0))
    quad = T.mul(T.pow_scalar(zscore, 2.0), -0.5)
    logs = T.add(T.mul(T.tlog(sigma_b), -1.0), -0.5 * LOG_2PI)
    return T.tsum(T.add(quad, logs), axis=-1)


def continuous_policy_loss(sampled_actions, weights, mu, sigma):
    """-sum_i pi_beta(a_i) * log N(a_i; mu, sigma^2), averaged over batch/time."""
    w = np.asarray(weights, dtype=np.float64)
    if not np.allclose(w.sum(axis=-1), 1.0, atol=1e-5):
        raise ValueError("improved weights must sum to 1 over sampled actions")
    log_dens = gaussian_log_density(sampled_actions, mu, sigma)
    per_step = T.tsum(T.mul(log_dens, w.astype(log_dens.dtype)), axis=-1)
    return T.mul(T.tmean(per_step), -1.0)


def policy_entropy(logits):
    """Mean Shannon entropy of softmax(logits) over all leading axes."""
    p = T.softmax(logits)
    logp = T.log_softmax(logits)
    return T.mul(T.tmean(T.tsum(T.mul(p, logp), axis=-1)), -1.0)


def gaussian_entropy(sigma):
    """Mean Gaussian entropy: sum_d (0.5 log(2 pi e) + log sigma_d)."""
    dim = sigma.shape[-1]
    const = 0.5 * dim * (LOG_2PI + 1.0)
    return T.add(T.tmean(T.tsum(T.tlog(sigma), axis=-1)), const)


def decode_regularization(obs, recon, coef):
    """coef * L1 reconstruction error, summed over features, averaged over steps."""
    target = np.asarray(obs, dtype=recon.dtype).reshape(recon.shape)
    diff = T.add(recon, T.Tensor(-target))
    return T.mul(T.tmean(T.tsum(T.tabs(diff), axis=-1)), coef)


def multitask_aggregate(task_losses):
    """Arithmetic mean of per-task loss tensors."""
    if not task_losses:
        raise ValueError("no task losses to aggregate")
    return T.mul(reduce(T.add, task_losses), 1.0 / len(task_losses))


def joint_loss(model, target_model, batch, weights):
    """Assemble the per-window objective; returns (total Tensor, breakdown dict).

    batch fields: obs (B,H+1,...), actions (B,H[,dim]), rewards (B,H),
    value_targets (B,H), positions (B,2H), and either policies (B,H,A) or
    sampled_actions (B,H,K,dim) + policy_weights (B,H,K).
    """
    weights.validate()
    obs = batch["obs"]
    actions = batch["actions"]
    B, H = actions.shape[:2]
    dt = model.cfg.np_dtype

    flat_now = obs[:, :H].reshape((-1,) + obs.shape[2:])
    z = model.encode_observation(flat_now, batched=True)
    z = T.reshape(z, (B, H, -1))
    with T.no_grad():
        flat_next = obs[:, 1 : H + 1].reshape((-1,) + obs.shape[2:])
        z_target = target_model.encode_observation(flat_next, batched=True).data.reshape(B, H, -1)

    hz, ha = model.unroll(z, actions, positions=batch["positions"])
    z_next, reward_logits = model.dynamics_predict(ha)
    policy_out, value_logits = model.decision_predict(hz)

    diff = T.add(z_next, T.Tensor(-z_target.astype(dt)))
    loss_z = T.tmean(T.tsum(T.pow_scalar(diff, 2.0), axis=-1))
    loss_r = T.tmean(T.cross_entropy_from_logits(reward_logits, scalar_to_categorical(batch["rewards"])))
    loss_v = T.tmean(T.cross_entropy_from_logits(value_logits, scalar_to_categorical(batch["value_targets"])))

    if model.cfg.action.is_continuous:
        mu, sigma = policy_out
        loss_p = continuous_policy_loss(batch["sampled_actions"], batch["policy_weights"], mu, sigma)
        entropy = gaussian_entropy(sigma)
    else:
        loss_p = T.tmean(T.cross_entropy_from_logits(policy_out, batch["policies"]))
        entropy = policy_entropy(policy_out)

    total = T.add(
        T.add(T.mul(loss_z, weights.beta_z), T.mul(loss_r, weights.beta_r)),
        T.add(T.mul(loss_p, weights.beta_p), T.mul(loss_v, weights.beta_v)),
    )
    if weights.entropy_coef > 0:
        total = T.add(total, T.mul(entropy, -weights.entropy_coef))
    breakdown = {
        "loss_z": float(loss_z.data),
        "loss_r": float(loss_r.data),
        "loss_p": float(loss_p.data),
        "loss_v": float(loss_v.data),
        "entropy": float(entropy.data),
    }
    if weights.decode_coef > 0:
        recon = model.decoder(T.reshape(z, (B * H, -1)))
        decode = decode_regularization(flat_now.reshape(B * H, -1), recon, weights.decode_coef)
        total = T.add(total, decode)
        breakdown["loss_decode"] = float(decode.data)
    breakdown["loss_total"] = float(total.data)
    return total, breakdown
