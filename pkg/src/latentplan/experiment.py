"""Experiment assembly: one JSON config drives environments, model, training.

The config is a single document with sections ``env`` (or ``tasks``),
``model``, ``search``, ``train``, and ``loss`` plus top-level ``seed`` and
``out``. Every key is validated against the matching dataclass before any
compute; unknown keys are rejected with the offending names. The effective
(fully defaulted) configuration is echoed into ``metadata.json`` so a run
directory is self-describing.

Checkpoints are directories holding a JSON manifest (array names, shapes,
dtypes, and trainer counters) next to an ``arrays.npz`` blob. Loading
validates the blob against the manifest and the manifest against the live
model before a single value is assigned, so a corrupt or mismatched
checkpoint can never leave a half-restored trainer.
"""

import dataclasses
import json
import os

import numpy as np

from .envs import make_env
from .model import ActionSpace, ConfigError, ModelConfig, WorldModel
from .search import SearchConfig
from .train import (
    LossWeights,
    MultiTaskModel,
    MultiTaskTrainer,
    PaddedObsEnv,
    TrainConfig,
    Trainer,
)

EVAL_SEED_OFFSET = 10_007  # evaluation env draws an episode stream of its own


class IntegrityError(RuntimeError):
    """A checkpoint's blob, manifest, and model disagree."""


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

TOP_LEVEL_KEYS = ("seed", "out", "env", "tasks", "model", "search", "train", "loss")
ENV_DERIVED_MODEL_KEYS = ("obs_shape", "action", "max_episode_steps")


def _reject_unknown(section, allowed, where):
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _dataclass_fields(cls):
    return [f.name for f in dataclasses.fields(cls)]


def _build_env(spec, where, default_seed):
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigError(f"{where} must be an object with a 'name' key")
    kwargs = {k: v for k, v in spec.items() if k != "name"}
    kwargs.setdefault("seed", default_seed)
    try:
        return make_env(spec["name"], **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _env_action_space(env):
    if getattr(env, "continuous", False):
        return ActionSpace("continuous", dim=env.action_dim)
    return ActionSpace("discrete", n=env.num_actions)


@dataclasses.dataclass
class ExperimentConfig:
    seed: int
    out: str
    env_spec: dict | None
    task_specs: list | None
    model: ModelConfig
    search: SearchConfig
    train: TrainConfig

    @property
    def is_multitask(self):
        return self.task_specs is not None

    def make_envs(self, eval_stream=False):
        """Fresh environment instances; the eval stream gets offset seeds."""
        offset = EVAL_SEED_OFFSET if eval_stream else 0
        specs = self.task_specs if self.is_multitask else [self.env_spec]
        envs = [_build_env(spec, "env", self.seed + offset) for spec in specs]
        if not self.is_multitask:
            return envs[0]
        dim = max(e.obs_shape[0] for e in envs)
        return [PaddedObsEnv(e, dim) for e in envs]

    def echo(self):
        """The fully defaulted config as a JSON-ready dict."""
        model = dataclasses.asdict(self.model)
        model["obs_shape"] = list(self.model.obs_shape)
        train = dataclasses.asdict(self.train)
        loss = train.pop("weights")
        doc = {"seed": self.seed, "out": self.out}
        if self.is_multitask:
            doc["tasks"] = self.task_specs
        else:
            doc["env"] = self.env_spec
        doc.update({"model": model, "search": dataclasses.asdict(self.search),
                    "train": train, "loss": loss})
        return doc


def parse_config(doc, seed=None, out=None, env_steps=None):
    """Validate a config document and resolve it into runnable dataclasses.

    ``seed``/``out``/``env_steps`` are command-line overrides for the
    top-level scalars of the same names.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(doc, TOP_LEVEL_KEYS, "config")
    if ("env" in doc) == ("tasks" in doc):
        raise ConfigError("config needs exactly one of 'env' or 'tasks'")

    seed = int(doc.get("seed", 0)) if seed is None else int(seed)
    out = str(doc.get("out", "runs/experiment")) if out is None else str(out)

    task_specs = None
    env_spec = None
    if "tasks" in doc:
        if not isinstance(doc["tasks"], list) or not doc["tasks"]:
            raise ConfigError("'tasks' must be a non-empty list of env specs")
        task_specs = doc["tasks"]
        probes = [_build_env(spec, f"tasks[{i}]", seed) for i, spec in enumerate(task_specs)]
        spaces = [_env_action_space(e) for e in probes]
        if any(s.is_continuous for s in spaces):
            raise ConfigError("multi-task mode supports discrete action spaces only")
        if len({s.n for s in spaces}) != 1:
            raise ConfigError("multi-task environments must share one action space")
        if any(len(e.obs_shape) != 1 for e in probes):
            raise ConfigError("multi-task mode supports vector observations only")
        obs_shape = (max(e.obs_shape[0] for e in probes),)
        action = spaces[0]
        max_steps = max(e.max_episode_steps for e in probes)
        env_kind = None
    else:
        env_spec = doc["env"]
        probe = _build_env(env_spec, "env", seed)
        obs_shape = tuple(probe.obs_shape)
        action = _env_action_space(probe)
        max_steps = probe.max_episode_steps
        env_kind = env_spec.get("name")

    model_sec = dict(doc.get("model", {}))
    for key in ENV_DERIVED_MODEL_KEYS:
        if key in model_sec:
            raise ConfigError(f"model.{key} is derived from the environment and cannot be set")
    _reject_unknown(model_sec, set(_dataclass_fields(ModelConfig)) - set(ENV_DERIVED_MODEL_KEYS),
                    "model")
    # VisualMatch trains over whole episodes; other tasks default to 10 steps
    default_h = max_steps if env_kind == "visualmatch" else min(10, max_steps)
    model_sec.setdefault("h_train", default_h)
    model_sec.setdefault("h_infer", default_h)
    if env_kind == "visualmatch":
        model_sec.setdefault("encoder", "conv")
    try:
        model = ModelConfig(obs_shape=obs_shape, action=action, max_episode_steps=max_steps,
                            **model_sec)
        model.validate()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"model: {exc}") from exc

    train_sec = dict(doc.get("train", {}))
    _reject_unknown(train_sec, set(_dataclass_fields(TrainConfig)) - {"weights"}, "train")
    loss_sec = dict(doc.get("loss", {}))
    _reject_unknown(loss_sec, _dataclass_fields(LossWeights), "loss")
    train_sec.setdefault("context_length", model.h_train)
    if env_steps is not None:
        train_sec["total_env_steps"] = int(env_steps)
    try:
        train = TrainConfig(weights=LossWeights(**loss_sec), **train_sec)
        train.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from exc
    if train.context_length > model.h_train:
        raise ConfigError(
            f"train.context_length {train.context_length} exceeds model.h_train {model.h_train}")

    search_sec = dict(doc.get("search", {}))
    _reject_unknown(search_sec, _dataclass_fields(SearchConfig), "search")
    search_sec.setdefault("discount", train.discount)
    search_sec.setdefault("continuous", action.is_continuous)
    try:
        search = SearchConfig(**search_sec)
        search.validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"search: {exc}") from exc
    if train.weights.decode_coef > 0:
        model.with_decoder = True

    return ExperimentConfig(seed=seed, out=out, env_spec=env_spec, task_specs=task_specs,
                            model=model, search=search, train=train)


def load_config_file(path, **overrides):
    try:
        with open(path) as f:
            doc = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(doc, **overrides)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

MANIFEST_NAME = "manifest.json"
ARRAYS_NAME = "arrays.npz"


def save_checkpoint(ckpt_dir, arrays, meta):
    """Write manifest + blob; the manifest lands last so readers never see a
    manifest without its arrays."""
    os.makedirs(ckpt_dir, exist_ok=True)
    manifest = {
        "meta": meta,
        "arrays": {name: {"shape": list(a.shape), "dtype": str(a.dtype)}
                   for name, a in arrays.items()},
    }
    np.savez(os.path.join(ckpt_dir, ARRAYS_NAME), **arrays)
    tmp = os.path.join(ckpt_dir, MANIFEST_NAME + ".tmp")
    with open(tmp, "w") as f:
        json.dump(manifest, f, indent=1)
    os.replace(tmp, os.path.join(ckpt_dir, MANIFEST_NAME))


def load_checkpoint(ckpt_dir):
    """Read and cross-validate a checkpoint; returns (arrays, meta)."""
    manifest_path = os.path.join(ckpt_dir, MANIFEST_NAME)
    try:
        with open(manifest_path) as f:
            manifest = json.load(f)
    except FileNotFoundError as exc:
        raise IntegrityError(f"no checkpoint manifest at {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"corrupt checkpoint manifest: {exc}") from exc
    declared = manifest.get("arrays")
    meta = manifest.get("meta")
    if not isinstance(declared, dict) or not isinstance(meta, dict):
        raise IntegrityError("checkpoint manifest is missing 'arrays'/'meta'")
    try:
        with np.load(os.path.join(ckpt_dir, ARRAYS_NAME)) as blob:
            stored = {name: blob[name] for name in blob.files}
    except (OSError, ValueError) as exc:
        raise IntegrityError(f"unreadable checkpoint blob: {exc}") from exc
    if set(stored) != set(declared):
        missing = sorted(set(declared) - set(stored))
        extra = sorted(set(stored) - set(declared))
        raise IntegrityError(f"blob/manifest array names disagree "
                             f"(missing: {missing[:4]}, extra: {extra[:4]})")
    for name, spec in declared.items():
        arr = stored[name]
        if list(arr.shape) != list(spec["shape"]) or str(arr.dtype) != spec["dtype"]:
            raise IntegrityError(
                f"array '{name}' is {arr.shape}/{arr.dtype}, manifest says "
                f"{tuple(spec['shape'])}/{spec['dtype']}")
    return stored, meta


def restore_trainer(trainer, ckpt_dir):
    """Validate a checkpoint against the live trainer, then load it whole."""
    arrays, meta = load_checkpoint(ckpt_dir)
    live = trainer.state_arrays()
    if set(arrays) != set(live):
        missing = sorted(set(live) - set(arrays))
        extra = sorted(set(arrays) - set(live))
        raise IntegrityError(f"checkpoint does not match this configuration "
                             f"(missing: {missing[:4]}, extra: {extra[:4]})")
    for name, arr in arrays.items():
        if arr.shape != live[name].shape:
            raise IntegrityError(f"array '{name}' shape {arr.shape} does not match "
                                 f"model shape {live[name].shape}")
    trainer.load_state(arrays, meta)
    return meta


def checkpoint_root(out_dir):
    return os.path.join(out_dir, "checkpoints")


def latest_checkpoint(out_dir):
    """Newest checkpoint directory under a run directory, or None."""
    root = checkpoint_root(out_dir)
    pointer = os.path.join(root, "latest")
    if not os.path.exists(pointer):
        return None
    with open(pointer) as f:
        name = f.read().strip()
    return os.path.join(root, name)


def resolve_checkpoint(path):
    """Accept either a checkpoint directory or a run directory."""
    if os.path.isfile(os.path.join(path, MANIFEST_NAME)):
        return path
    latest = latest_checkpoint(path)
    if latest and os.path.isfile(os.path.join(latest, MANIFEST_NAME)):
        return latest
    raise IntegrityError(f"no checkpoint found at {path}")


# ---------------------------------------------------------------------------
# run / evaluate / inspect
# ---------------------------------------------------------------------------


def build_trainer(cfg, metrics_sink=None):
    if cfg.is_multitask:
        model = MultiTaskModel(cfg.model, len(cfg.task_specs), seed=cfg.seed)
        return MultiTaskTrainer(cfg.make_envs(), model, cfg.search, cfg.train,
                                seed=cfg.seed, eval_envs=cfg.make_envs(eval_stream=True),
                                metrics_sink=metrics_sink)
    model = WorldModel(cfg.model, seed=cfg.seed)
    return Trainer(cfg.make_envs(), model, cfg.search, cfg.train, seed=cfg.seed,
                   eval_env=cfg.make_envs(eval_stream=True), metrics_sink=metrics_sink)


def run_experiment(config_path, seed=None, out=None, env_steps=None, log=print):
    """Train per the config; returns the summary dict. Artifacts in cfg.out."""
    cfg = load_config_file(config_path, seed=seed, out=out, env_steps=env_steps)
    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "metadata.json"), "w") as f:
        json.dump(cfg.echo(), f, indent=1)
        f.write("\n")

    metrics_path = os.path.join(cfg.out, "metrics.jsonl")
    resume_from = latest_checkpoint(cfg.out)
    mode = "a" if resume_from else "w"
    with open(metrics_path, mode) as metrics_file:
        def sink(record):
            metrics_file.write(json.dumps(record) + "\n")
            metrics_file.flush()

        trainer = build_trainer(cfg, metrics_sink=sink)
        if resume_from:
            meta = restore_trainer(trainer, resume_from)
            log(f"resumed from {resume_from} at env step {meta['env_steps']}")

        def on_checkpoint(tr):
            name = f"step_{tr.env_steps:08d}"
            root = checkpoint_root(cfg.out)
            save_checkpoint(os.path.join(root, name), tr.state_arrays(), tr.state_meta())
            with open(os.path.join(root, "latest"), "w") as f:
                f.write(name + "\n")

        summary = trainer.run(on_checkpoint=on_checkpoint)
        on_checkpoint(trainer)

    with open(os.path.join(cfg.out, "summary.json"), "w") as f:
        json.dump(summary, f, indent=1)
        f.write("\n")
    log(f"finished at env step {summary['env_steps']} "
        f"(train steps {summary['train_steps']}, diverged={summary['diverged']})")
    return summary


def evaluate_checkpoint(ckpt_path, config_path, episodes=10, seed=None):
    """Greedy evaluation of a stored model; returns the aggregate dict."""
    cfg = load_config_file(config_path, seed=seed)
    trainer = build_trainer(cfg)
    restore_trainer(trainer, resolve_checkpoint(ckpt_path))
    trainer.cfg.eval_episodes = int(episodes)
    return trainer.eval_round()


def inspect_checkpoint(ckpt_path):
    """Summarize a checkpoint from its manifest alone (no model build)."""
    ckpt_dir = resolve_checkpoint(ckpt_path)
    with open(os.path.join(ckpt_dir, MANIFEST_NAME)) as f:
        manifest = json.load(f)
    arrays = manifest["arrays"]
    groups = {}
    for name, spec in arrays.items():
        prefix = name.split(".", 1)[0]
        g = groups.setdefault(prefix, {"arrays": 0, "parameters": 0})
        g["arrays"] += 1
        g["parameters"] += int(np.prod(spec["shape"])) if spec["shape"] else 1
    return {
        "checkpoint": ckpt_dir,
        "meta": manifest["meta"],
        "total_arrays": len(arrays),
        "groups": groups,
    }
