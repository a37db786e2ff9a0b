"""The collect/train alternation loop with target updates and checkpoints.

Schedule: gather a round of search-guided episodes, then run
collected_steps * replay_ratio gradient steps on uniformly sampled windows,
updating the target model after each step. Evaluation fires on an env-step
cadence; a run stops at the env-step budget, on an early-stop success rate,
or when the loss diverges (which is recorded, not raised, so ablation runs
can report instability as a result).
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..model import clone_model, update_target_model
from ..search import WorldModelPlanner
from ..tensor import AdamW, clip_global_norm
from .buffer import ReplayBuffer
from .collect import collect_experience, evaluate
from .losses import LossWeights, joint_loss
from .targets import window_value_targets


@dataclass
class TrainConfig:
    total_env_steps: int = 50_000
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 1e-4
    grad_clip: float = 5.0
    discount: float = 0.997
    td_steps: int = 5
    context_length: int = 10
    replay_ratio: float = 0.25
    episodes_per_collect: int = 8
    buffer_capacity: int = 1_000_000
    target_mode: str = "soft"  # soft | hard | none
    target_momentum: float = 0.05
    target_interval: int = 100
    eval_interval: int = 1000
    eval_episodes: int = 10
    success_threshold: float = 0.999
    early_stop_success: Optional[float] = None
    divergence_threshold: float = 1e6
    weights: LossWeights = field(default_factory=LossWeights)

    def validate(self):
        if self.target_mode not in ("soft", "hard", "none"):
            raise ValueError(f"unknown target_mode '{self.target_mode}'")
        if self.context_length < 1 or self.batch_size < 1:
            raise ValueError("context_length and batch_size must be positive")
        if not 0 < self.replay_ratio:
            raise ValueError("replay_ratio must be positive")
        self.weights.validate()
        return self


def assemble_batch(samples, window, n, gamma, target_model, continuous):
    """Stack sampled (segment, offset) windows into dense training arrays."""
    value_targets = window_value_targets(samples, window, n, gamma, target_model)
    obs, actions, rewards, positions = [], [], [], []
    policies, sampled_actions = [], []
    for seg, off in samples:
        obs.append(seg.observations[off : off + window + 1])
        actions.append(seg.actions[off : off + window])
        rewards.append(seg.rewards[off : off + window])
        policies.append(seg.policies[off : off + window])
        positions.append(np.arange(2 * off, 2 * off + 2 * window))
        if continuous:
            sampled_actions.append(seg.sampled_actions[off : off + window])
    batch = {
        "obs": np.stack(obs),
        "actions": np.stack(actions),
        "rewards": np.stack(rewards),
        "value_targets": value_targets,
        "positions": np.stack(positions),
    }
    if continuous:
        batch["sampled_actions"] = np.stack(sampled_actions)
        batch["policy_weights"] = np.stack(policies)
    else:
        batch["policies"] = np.stack(policies)
    return batch


class Trainer:
    def __init__(self, env, model, search_cfg, train_cfg, seed=0, eval_env=None, metrics_sink=None):
        train_cfg.validate()
        self.env = env
        self.eval_env = eval_env if eval_env is not None else env
        self.model = model.eval()
        self.cfg = train_cfg
        self.search_cfg = search_cfg
        self.target = model if train_cfg.target_mode == "none" else clone_model(model)
        self.planner = WorldModelPlanner(self.model, self.target, search_cfg)
        self.optimizer = AdamW(list(model.named_parameters()), lr=train_cfg.lr,
                               weight_decay=train_cfg.weight_decay)
        self.buffer = ReplayBuffer(train_cfg.buffer_capacity)
        self.collect_rng = np.random.default_rng([seed, 0xC0])
        self.sample_rng = np.random.default_rng([seed, 0x5A])
        self.eval_rng = np.random.default_rng([seed, 0xE7])
        self.metrics_sink = metrics_sink  # callable(dict) or None
        self.step = 0
        self.env_steps = 0
        self.diverged = False
        self._next_eval = train_cfg.eval_interval

    # -- one gradient step ----------------------------------------------------

    def train_step(self):
        cfg = self.cfg
        samples = self.buffer.sample(cfg.batch_size, cfg.context_length, self.sample_rng)
        batch = assemble_batch(samples, cfg.context_length, cfg.td_steps, cfg.discount,
                               self.target, self.model.cfg.action.is_continuous)
        self.model.train()
        total, breakdown = joint_loss(self.model, self.target, batch, cfg.weights)
        self.model.eval()
        loss_val = breakdown["loss_total"]
        grad_norm = float("nan")
        bad = not math.isfinite(loss_val) or abs(loss_val) > cfg.divergence_threshold
        if not bad:
            total.backward()
            grads = [p.grad for _, p in self.optimizer.named_params if p.grad is not None]
            _, grad_norm = clip_global_norm(grads, cfg.grad_clip)
            if math.isfinite(grad_norm):
                self.optimizer.step()
                self.step += 1
                update_target_model(self.model, self.target, mode=cfg.target_mode,
                                    momentum=cfg.target_momentum,
                                    hard_interval=cfg.target_interval, step=self.step)
            else:
                bad = True
        self.model.zero_grad()
        if bad:
            self.diverged = True
        record = {
            "step": self.step,
            "env_steps": self.env_steps,
            "loss_total": breakdown["loss_total"],
            "loss_z": breakdown["loss_z"],
            "loss_r": breakdown["loss_r"],
            "loss_p": breakdown["loss_p"],
            "loss_v": breakdown["loss_v"],
            "entropy": breakdown["entropy"],
            "grad_norm": grad_norm,
        }
        if self.diverged:
            record["diverged"] = True
        self._emit(record)
        return record

    # -- loop machinery ---------------------------------------------------------

    def collect_round(self):
        stats = collect_experience(self.env, self.planner, self.search_cfg, self.buffer,
                                   self.collect_rng, episodes=self.cfg.episodes_per_collect)
        self.env_steps += stats["env_steps"]
        return stats

    def eval_round(self):
        result = evaluate(self.eval_env, self.planner, self.search_cfg, self.eval_rng,
                          episodes=self.cfg.eval_episodes,
                          success_threshold=self.cfg.success_threshold)
        record = {"step": self.step, "env_steps": self.env_steps,
                  "eval_return": result["eval_return"], "success_rate": result["success_rate"]}
        self._emit(record)
        return result

    def run(self, on_checkpoint=None):
        """Alternate collection and training until budget/early-stop/divergence."""
        last_eval = None
        while self.env_steps < self.cfg.total_env_steps and not self.diverged:
            stats = self.collect_round()
            n_updates = int(round(stats["env_steps"] * self.cfg.replay_ratio))
            for _ in range(n_updates):
                try:
                    self.train_step()
                except LookupError:
                    break  # no stored episode spans a training window yet
                if self.diverged:
                    break
            if self.env_steps >= self._next_eval or self.env_steps >= self.cfg.total_env_steps:
                while self._next_eval <= self.env_steps:
                    self._next_eval += self.cfg.eval_interval
                last_eval = self.eval_round()
                if on_checkpoint is not None:
                    on_checkpoint(self)
                stop = self.cfg.early_stop_success
                if stop is not None and last_eval["success_rate"] >= stop:
                    break
        return {
            "env_steps": self.env_steps,
            "train_steps": self.step,
            "diverged": self.diverged,
            "final_eval": last_eval,
        }

    def _emit(self, record):
        if self.metrics_sink is not None:
            self.metrics_sink(record)

    # -- state (for checkpoints) ------------------------------------------------

    def state_arrays(self):
        arrays = {f"model.{k}": v for k, v in self.model.state_arrays().items()}
        if self.target is not self.model:
            arrays.update({f"target.{k}": v for k, v in self.target.state_arrays().items()})
        st = self.optimizer.state
        arrays.update({f"opt.m.{k}": v for k, v in st.m.items()})
        arrays.update({f"opt.v.{k}": v for k, v in st.v.items()})
        return arrays

    def state_meta(self):
        return {"step": self.step, "env_steps": self.env_steps,
                "opt_t": self.optimizer.state.t, "diverged": self.diverged}

    def load_state(self, arrays, meta):
        self.model.load_state_arrays({k[len("model."):]: v for k, v in arrays.items()
                                      if k.startswith("model.")})
        target_arrays = {k[len("target."):]: v for k, v in arrays.items() if k.startswith("target.")}
        if target_arrays and self.target is not self.model:
            self.target.load_state_arrays(target_arrays)
        st = self.optimizer.state
        for k, v in arrays.items():
            if k.startswith("opt.m."):
                st.m[k[len("opt.m."):]] = v.copy()
            elif k.startswith("opt.v."):
                st.v[k[len("opt.v."):]] = v.copy()
        st.t = int(meta["opt_t"])
        self.step = int(meta["step"])
        self.env_steps = int(meta["env_steps"])
        self.diverged = bool(meta.get("diverged", False))
        self._next_eval = (self.env_steps // self.cfg.eval_interval + 1) * self.cfg.eval_interval
