"""Multi-task training: shared encoder/backbone, per-task heads and buffers.

Each task keeps its own data collector, replay buffer, dynamics head, and
decision head; the encoder, action embedding, and transformer backbone are
single shared objects rebound into every task's model. One gradient step
samples a per-task batch from every buffer, computes each task's joint loss,
averages them, and backpropagates once — so a task's head parameters can only
receive gradient from that task's own loss term.

Tasks must present a common observation shape and action space; vector
observations from smaller tasks are zero-padded up front by PaddedObsEnv.
"""

import math

import numpy as np

from ..model import WorldModel
from ..search import WorldModelPlanner
from ..tensor import AdamW
from .buffer import ReplayBuffer
from .collect import collect_experience, evaluate
from .losses import joint_loss, multitask_aggregate
from .trainer import Trainer, assemble_batch


class PaddedObsEnv:
    """Zero-pads a task's 1-D observations up to a shared dimension."""

    def __init__(self, env, obs_dim):
        if len(env.obs_shape) != 1:
            raise ValueError("observation padding supports vector observations only")
        if env.obs_shape[0] > obs_dim:
            raise ValueError(f"observation dim {env.obs_shape[0]} exceeds shared dim {obs_dim}")
        self.env = env
        self.obs_shape = (int(obs_dim),)
        self.continuous = getattr(env, "continuous", False)
        self.num_actions = getattr(env, "num_actions", None)
        self.action_dim = getattr(env, "action_dim", None)
        self.max_episode_steps = env.max_episode_steps

    def _pad(self, obs):
        out = np.zeros(self.obs_shape, dtype=np.float32)
        out[: obs.shape[0]] = obs
        return out

    def reset(self, **kwargs):
        return self._pad(self.env.reset(**kwargs))

    def step(self, action):
        obs, reward, done, info = self.env.step(action)
        return self._pad(obs), reward, done, info


class MultiTaskModel:
    """``n_tasks`` world models that share one encoder/action-embed/backbone.

    Task 0's trunk becomes the shared trunk; every other task keeps only its
    freshly initialized dynamics and decision heads. Parameter traversal
    reports each shared parameter once (under the task-0 path), so the
    optimizer, EMA target update, and checkpoints treat the trunk correctly.
    """

    def __init__(self, cfg, n_tasks, seed=0):
        if n_tasks < 1:
            raise ValueError("need at least one task")
        self.cfg = cfg
        self.tasks = [WorldModel(cfg, seed=[seed, t]) for t in range(n_tasks)]
        trunk = self.tasks[0]
        for wm in self.tasks[1:]:
            wm.encoder = trunk.encoder
            wm.act_embed = trunk.act_embed
            wm.backbone = trunk.backbone
            if trunk.decoder is not None:
                wm.decoder = trunk.decoder

    # Module-style API, delegated over the task list (shared pieces dedupe).

    def named_parameters(self):
        seen = set()
        out = []
        for t, wm in enumerate(self.tasks):
            out.extend(wm.named_parameters(prefix=f"tasks.{t}.", _seen=seen))
        return out

    def named_buffers(self):
        seen = set()
        out = []
        for t, wm in enumerate(self.tasks):
            out.extend(wm.named_buffers(prefix=f"tasks.{t}.", _seen=seen))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def train(self):
        for wm in self.tasks:
            wm.train()
        return self

    def eval(self):
        for wm in self.tasks:
            wm.eval()
        return self

    @property
    def training(self):
        return self.tasks[0].training

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_arrays(self):
        out = {name: p.data for name, p in self.named_parameters()}
        for name, buf in self.named_buffers():
            out[f"buffer.{name}"] = buf
        return out

    def load_state_arrays(self, arrays):
        from ..tensor import restore_into

        restore_into(self.named_parameters(), arrays)
        for name, buf in self.named_buffers():
            key = f"buffer.{name}"
            if key in arrays:
                buf[...] = arrays[key].astype(buf.dtype)


def clone_multitask_model(model: MultiTaskModel) -> MultiTaskModel:
    """Structural copy (same sharing pattern) with identical parameter values."""
    twin = MultiTaskModel(model.cfg, len(model.tasks), seed=0)
    for (_, src), (_, dst) in zip(model.named_parameters(), twin.named_parameters()):
        dst.data = src.data.copy()
    for (_, src), (_, dst) in zip(model.named_buffers(), twin.named_buffers()):
        dst[...] = src
    twin.eval()
    return twin


class MultiTaskTrainer(Trainer):
    """Trainer over several tasks; ``cfg.batch_size`` is the per-task batch.

    Collection walks the task list round-robin each round; one gradient step
    averages the per-task joint losses and backpropagates the mean once.
    """

    def __init__(self, envs, model, search_cfg, train_cfg, seed=0, eval_envs=None,
                 metrics_sink=None):
        if len(envs) != len(model.tasks):
            raise ValueError("one environment per task model is required")
        train_cfg.validate()
        self.envs = list(envs)
        self.eval_envs = list(eval_envs) if eval_envs is not None else self.envs
        self.model = model.eval()
        self.cfg = train_cfg
        self.search_cfg = search_cfg
        self.target = model if train_cfg.target_mode == "none" else clone_multitask_model(model)
        self.planners = [
            WorldModelPlanner(model.tasks[t], self.target.tasks[t], search_cfg)
            for t in range(len(model.tasks))
        ]
        self.optimizer = AdamW(model.named_parameters(), lr=train_cfg.lr,
                               weight_decay=train_cfg.weight_decay)
        self.buffers = [ReplayBuffer(train_cfg.buffer_capacity) for _ in model.tasks]
        self.collect_rngs = [np.random.default_rng([seed, 0xC0, t]) for t in range(len(model.tasks))]
        self.sample_rngs = [np.random.default_rng([seed, 0x5A, t]) for t in range(len(model.tasks))]
        self.eval_rng = np.random.default_rng([seed, 0xE7])
        self.metrics_sink = metrics_sink
        self.step = 0
        self.env_steps = 0
        self.diverged = False
        self._next_eval = train_cfg.eval_interval

    def collect_round(self):
        steps = 0
        returns = []
        for t, env in enumerate(self.envs):
            stats = collect_experience(env, self.planners[t], self.search_cfg,
                                       self.buffers[t], self.collect_rngs[t],
                                       episodes=self.cfg.episodes_per_collect, task_id=t)
            steps += stats["env_steps"]
            returns.append(stats["mean_return"])
        self.env_steps += steps
        return {"env_steps": steps, "mean_return": float(np.mean(returns))}

    def task_batches(self):
        """One freshly sampled batch per task; raises LookupError while any
        task's buffer lacks a window-length episode (cold start)."""
        cfg = self.cfg
        out = []
        for t in range(len(self.model.tasks)):
            samples = self.buffers[t].sample(cfg.batch_size, cfg.context_length, self.sample_rngs[t])
            out.append(assemble_batch(samples, cfg.context_length, cfg.td_steps, cfg.discount,
                                      self.target.tasks[t], self.model.cfg.action.is_continuous))
        return out

    def task_losses(self, batches=None):
        """Per-task (loss Tensor, breakdown); the model must be in train mode."""
        if batches is None:
            batches = self.task_batches()
        return [joint_loss(self.model.tasks[t], self.target.tasks[t], batch, self.cfg.weights)
                for t, batch in enumerate(batches)]

    def train_step(self):
        from ..model import update_target_model
        from ..tensor import clip_global_norm

        cfg = self.cfg
        batches = self.task_batches()  # sample before mode flip: may raise LookupError
        self.model.train()
        per_task = self.task_losses(batches)
        self.model.eval()
        total = multitask_aggregate([loss for loss, _ in per_task])
        loss_val = float(total.data)
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
        record = {"step": self.step, "env_steps": self.env_steps, "loss_total": loss_val}
        for key in ("loss_z", "loss_r", "loss_p", "loss_v", "entropy"):
            record[key] = float(np.mean([bd[key] for _, bd in per_task]))
        record["grad_norm"] = grad_norm
        if self.diverged:
            record["diverged"] = True
        self._emit(record)
        return record

    def eval_round(self):
        per_task = [
            evaluate(env, self.planners[t], self.search_cfg, self.eval_rng,
                     episodes=self.cfg.eval_episodes,
                     success_threshold=self.cfg.success_threshold)
            for t, env in enumerate(self.eval_envs)
        ]
        result = {
            "episodes": sum(r["episodes"] for r in per_task),
            "eval_return": float(np.mean([r["eval_return"] for r in per_task])),
            "return_std": float(np.mean([r["return_std"] for r in per_task])),
            "success_rate": float(np.mean([r["success_rate"] for r in per_task])),
            "per_task": per_task,
        }
        record = {"step": self.step, "env_steps": self.env_steps,
                  "eval_return": result["eval_return"], "success_rate": result["success_rate"]}
        self._emit(record)
        return result
