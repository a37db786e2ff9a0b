"""Acceptance gate: ten end-to-end behaviors of the finished system.

Each test prints one ``criterion NN [PASS|FAIL]`` line. The three learning
criteria (07-09) train real agents; their runs are deterministic per
(config, seed), so finished artifacts under ``runs/acceptance/`` are reused
verbatim on re-runs (a repeat run would produce byte-identical metrics). The
timing sidecar always records the duration of the run that actually executed.
"""

import hashlib
import json
import math
import os
import shutil
import time

import numpy as np

from helpers import max_rel_err, op_gradient_cases
from latentplan import tensor as T
from latentplan.envs import ChainEnv, DiscreteBandit
from latentplan.experiment import build_trainer, parse_config, resolve_checkpoint, run_experiment
from latentplan.model import ActionSpace, ModelConfig, WorldModel, clone_model
from latentplan.model.norms import simnorm
from latentplan.model.transformer import Backbone
from latentplan.scalars import SUPPORT_MAX, expand, categorical_to_scalar, scalar_to_categorical
from latentplan.search import (
    OracleEnvPlanner,
    SearchConfig,
    SearchNode,
    exhaustive_best_action,
    puct_scores,
    run_search,
    select_child,
)
from latentplan.train import GameSegment, LossWeights, joint_loss, multitask_aggregate

ACCEPT_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "runs", "acceptance")


def report(num, label, ok, detail=""):
    tail = f" ({detail})" if detail else ""
    line = f"criterion {num:02d} [{'PASS' if ok else 'FAIL'}] {label}{tail}"
    print(line, flush=True)
    assert ok, line


def cached_run(name, doc, env_steps=None):
    """Execute a config via the experiment runner, or reuse its finished run."""
    key_src = json.dumps(doc, sort_keys=True) + f"|{env_steps}"
    key = hashlib.sha256(key_src.encode()).hexdigest()[:10]
    out = os.path.abspath(os.path.join(ACCEPT_DIR, f"{name}-{key}"))
    summary_path = os.path.join(out, "summary.json")
    timing_path = os.path.join(out, "timing.json")
    if not (os.path.isfile(summary_path) and os.path.isfile(timing_path)):
        if os.path.isdir(out):
            shutil.rmtree(out)  # unfinished attempt: restart for a clean timing
        os.makedirs(out)
        cfg_path = os.path.join(out, "config.json")
        with open(cfg_path, "w") as f:
            json.dump(doc, f, indent=1)
        t0 = time.time()
        run_experiment(cfg_path, out=out, env_steps=env_steps, log=lambda *_: None)
        with open(timing_path, "w") as f:
            json.dump({"seconds": time.time() - t0}, f)
    with open(summary_path) as f:
        summary = json.load(f)
    with open(timing_path) as f:
        seconds = json.load(f)["seconds"]
    evals = []
    with open(os.path.join(out, "metrics.jsonl")) as f:
        for line in f:
            rec = json.loads(line)
            if "eval_return" in rec:
                evals.append(rec)
    return out, summary, seconds, evals


# ---------------------------------------------------------------------------
# criterion 1: gradients
# ---------------------------------------------------------------------------


def _chain_segment(env, rng):
    obs_list, actions, rewards, dones = [env.reset()], [], [], []
    done = False
    while not done:
        a = int(rng.integers(2))
        obs, r, done, _ = env.step(a)
        obs_list.append(obs)
        actions.append(a)
        rewards.append(r)
        dones.append(done)
    n = len(actions)
    return GameSegment(np.stack(obs_list), actions, rewards, dones,
                       np.full((n, 2), 0.5), np.zeros(n))


def _joint_loss_fd_error():
    """Max relative error of backward() vs central differences through the
    whole training loss, on a 64-bit model with all heads nudged off zero."""
    from latentplan.train import assemble_batch

    rng = np.random.default_rng(99)
    cfg = ModelConfig(d_model=8, simnorm_group=4, n_layers=1, n_heads=2, dropout=0.0,
                      obs_shape=(3,), action=ActionSpace("discrete", n=2), encoder="mlp",
                      encoder_hidden=8, h_train=3, h_infer=3, max_episode_steps=6,
                      dtype="float64")
    model = WorldModel(cfg, seed=3)
    for _, p in model.named_parameters():
        p.data += rng.normal(scale=0.05, size=p.data.shape)
    target = clone_model(model)
    env = ChainEnv(3)
    segments = [_chain_segment(env, rng) for _ in range(4)]
    samples = [(segments[int(rng.integers(len(segments)))], 0) for _ in range(2)]
    samples = [(s, int(rng.integers(len(s) - 3 + 1))) for s, _ in samples]
    batch = assemble_batch(samples, 3, 2, 0.9, target, continuous=False)
    weights = LossWeights()

    def loss_value():
        total, _ = joint_loss(model, target, batch, weights)
        return float(total.data)

    total, _ = joint_loss(model, target, batch, weights)
    total.backward()
    named = model.named_parameters()
    worst = 0.0
    eps = 1e-6
    picks = rng.choice(len(named), size=12, replace=False)
    for pi in picks:
        _, p = named[pi]
        auto = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        aflat = auto.reshape(-1)
        for ei in rng.choice(flat.size, size=min(4, flat.size), replace=False):
            old = flat[ei]
            flat[ei] = old + eps
            fp = loss_value()
            flat[ei] = old - eps
            fm = loss_value()
            flat[ei] = old
            fd = (fp - fm) / (2 * eps)
            worst = max(worst, abs(aflat[ei] - fd) / (max(abs(aflat[ei]), abs(fd)) + 1e-6))
    for _, p in named:
        p.grad = None
    return worst


class TestCriterion01:
    def test_criterion_01_gradient_suite(self):
        t0 = time.time()
        rng = np.random.default_rng(2024)
        cases = op_gradient_cases(rng)
        trials = 0
        op_worst = 0.0
        for case in cases.values():
            for _ in range(5):
                op_worst = max(op_worst, case())
                trials += 1
        e2e = _joint_loss_fd_error()
        elapsed = time.time() - t0
        ok = op_worst < 1e-4 and e2e < 1e-3 and trials >= 100 and elapsed < 120
        report(1, "gradient checks: ops and full training loss", ok,
               f"{trials} op trials, worst op {op_worst:.1e}, end-to-end {e2e:.1e}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# criterion 2: latent simplex normalization
# ---------------------------------------------------------------------------


class TestCriterion02:
    def test_criterion_02_simnorm_invariants(self):
        rng = np.random.default_rng(7)
        worst_group, worst_l1 = 0.0, 0.0
        for d in (8, 64):
            for _ in range(25):
                x = rng.normal(scale=3.0, size=(16, d))
                z = simnorm(T.Tensor(x), 8).data
                groups = z.reshape(16, d // 8, 8)
                worst_group = max(worst_group, float(np.abs(groups.sum(axis=-1) - 1.0).max()))
                worst_l1 = max(worst_l1, float(np.abs(np.abs(z).sum(axis=-1) - d // 8).max()))
        ok = worst_group < 1e-5 and worst_l1 < 1e-4
        report(2, "group simplex sums and fixed total L1", ok,
               f"group err {worst_group:.1e}, L1 err {worst_l1:.1e}")


# ---------------------------------------------------------------------------
# criterion 3: KV-cache equivalence
# ---------------------------------------------------------------------------


def _cache_cfg(h_infer, n_layers=2):
    # 64-bit so the comparison isolates cache bookkeeping from BLAS
    # accumulation-order noise (batched vs incremental matmuls).
    return ModelConfig(d_model=16, simnorm_group=8, n_layers=n_layers, n_heads=2, dropout=0.0,
                       obs_shape=(4,), action=ActionSpace("discrete", n=2), encoder="mlp",
                       h_train=10, h_infer=h_infer, max_episode_steps=10, dtype="float64")


class TestCriterion03:
    def test_criterion_03_kv_cache_equivalence(self):
        rng = np.random.default_rng(31)
        worst = 0.0
        # every split point of 20-token sequences (capacity exactly 20)
        bb = Backbone(_cache_cfg(h_infer=10), np.random.default_rng(5))
        bb.eval()
        for _ in range(3):
            tok = rng.normal(size=(1, 20, 16)).astype(np.float32)
            full = bb(T.Tensor(tok)).data[0]
            for split in range(1, 20):
                cache = bb.new_cache()
                a = bb(T.Tensor(tok[:, :split]), cache=cache).data[0]
                b = bb(T.Tensor(tok[:, split:]), cache=cache).data[0]
                worst = max(worst, float(np.abs(np.vstack([a, b]) - full).max()))
        # One eviction event: capacity 18, token 19 forces the oldest timestep
        # out. Single layer, where "full forward over the surviving suffix" is
        # the exact reference (deeper layers' cached K/V legitimately embed
        # pre-eviction context, so no independent full pass reproduces them).
        bb = Backbone(_cache_cfg(h_infer=9, n_layers=1), np.random.default_rng(5))
        bb.eval()
        evictions = 0
        tok = rng.normal(size=(1, 20, 16)).astype(np.float32)
        cache, outs = bb.new_cache(), []
        for i in range(20):
            if cache.length + 1 > cache.capacity:
                cache.evict_oldest_step()
                evictions += 1
            outs.append(bb(T.Tensor(tok[:, i:i + 1]), positions=np.array([i]),
                           cache=cache).data[0, 0])
        # survivors are tokens 2..19 at their original positions
        ref = bb(T.Tensor(tok[:, 2:]), positions=np.arange(2, 20)).data[0]
        post = float(max(np.abs(outs[18] - ref[16]).max(), np.abs(outs[19] - ref[17]).max()))
        worst = max(worst, post)
        ok = worst < 1e-5 and evictions == 1
        report(3, "incremental forward equals full forward at every split", ok,
               f"max abs diff {worst:.1e} across {3 * 19} splits + {evictions} eviction")


# ---------------------------------------------------------------------------
# criterion 4: search oracle equivalence
# ---------------------------------------------------------------------------


class TestCriterion04:
    def test_criterion_04_search_matches_exhaustive(self):
        rng = np.random.default_rng(41)
        scfg = SearchConfig(num_simulations=200, noise_weight=0.0, discount=0.997)
        cases = agree = 0
        visits_exact = True
        for _ in range(30):
            r0 = float(rng.uniform(-1, 1))
            gap = float(rng.uniform(0.1, 1.0)) * float(rng.choice([-1.0, 1.0]))
            env = DiscreteBandit((r0, r0 - gap))
            res = run_search(OracleEnvPlanner(env), 0, None, scfg, rng, collect=False)
            best, _ = exhaustive_best_action(env, 0, 1, scfg.discount)
            cases += 1
            agree += int(np.argmax(res.policy)) == best
            visits_exact &= sum(e.visit_count for e in res.root.edges) == 200
        for n in (3, 4, 5):
            env = ChainEnv(n)
            for start in env.enumerate_starts():
                res = run_search(OracleEnvPlanner(env), start, None, scfg, rng, collect=False)
                best, _ = exhaustive_best_action(env, start, env.horizon, scfg.discount)
                cases += 1
                agree += int(np.argmax(res.policy)) == best
                visits_exact &= sum(e.visit_count for e in res.root.edges) == 200
        ok = agree == cases and visits_exact
        report(4, "200-sim search equals exhaustive optimum on oracles", ok,
               f"{agree}/{cases} argmax matches, root visits exact: {visits_exact}")


# ---------------------------------------------------------------------------
# criterion 5: two-hot round trip
# ---------------------------------------------------------------------------


class TestCriterion05:
    def test_criterion_05_two_hot_round_trip(self):
        rng = np.random.default_rng(53)
        hi = expand(float(SUPPORT_MAX))
        xs = rng.uniform(-hi, hi, size=1000)
        back = categorical_to_scalar(scalar_to_categorical(xs))
        worst = float(np.abs(back - xs).max())
        ok = worst < 1e-4
        report(5, "scalar -> two-hot -> scalar round trip", ok,
               f"max abs err {worst:.1e} over support +/-{hi:.0f}")


# ---------------------------------------------------------------------------
# criterion 6: PUCT selection formula
# ---------------------------------------------------------------------------


class TestCriterion06:
    def test_criterion_06_puct_formula(self):
        rng = np.random.default_rng(61)
        cfg = SearchConfig(c1=1.25, c2=19652.0, normalize_q=False)
        worst = 0.0
        select_agrees = True
        for _ in range(100):
            k = int(rng.integers(2, 6))
            n = rng.integers(1, 50, size=k)
            p = rng.dirichlet(np.ones(k))
            q = rng.uniform(-1, 1, size=k)
            scores = puct_scores(n, p, q, 1.25, 19652.0)
            total = float(n.sum())
            direct = np.array([
                q[i] + p[i] * math.sqrt(total) / (1.0 + n[i])
                * (1.25 + math.log((total + 19652.0 + 1.0) / 19652.0))
                for i in range(k)
            ])
            worst = max(worst, float(np.abs(scores - direct).max()))
            node = SearchNode(None, list(range(k)), p, depth=0)
            for i, e in enumerate(node.edges):
                e.visit_count = int(n[i])
                e.value_sum = float(q[i] * n[i])
            picked = select_child(node, cfg, None)
            expected = max(range(k), key=lambda i: (direct[i], p[i], -i))
            select_agrees &= picked == expected
        ok = worst < 1e-10 and select_agrees
        report(6, "select_child scores match the PUCT formula", ok,
               f"max abs diff {worst:.1e} over 100 stat tables")


# ---------------------------------------------------------------------------
# criterion 7: scaled learning result on VisualMatch
# ---------------------------------------------------------------------------

C7_DOC = {
    "seed": 0,
    "env": {"name": "visualmatch", "memory_length": 2},
    "model": {"d_model": 64, "n_layers": 2, "n_heads": 4, "simnorm_group": 8},
    "search": {"num_simulations": 25},
    "train": {
        "total_env_steps": 50000,
        "batch_size": 64,
        "eval_interval": 1000,
        "eval_episodes": 30,
        "early_stop_success": 0.9,
    },
}


class TestCriterion07:
    def test_criterion_07_visualmatch_learning(self):
        _, summary, seconds, evals = cached_run("c7-visualmatch", C7_DOC)
        hits = [r for r in evals if r["success_rate"] >= 0.9 and r["env_steps"] <= 50000]
        ok = bool(hits) and seconds < 45 * 60 and not summary["diverged"]
        first = hits[0]["env_steps"] if hits else None
        report(7, "VisualMatch memlen-2 reaches 0.9 success (random ~ 1/3)", ok,
               f"success >= 0.9 at env step {first}, wall {seconds / 60:.1f} min")


# ---------------------------------------------------------------------------
# criterion 8: ablation directions
# ---------------------------------------------------------------------------

C8_ENV_STEPS = 8000
C8_SEEDS = (0, 1, 2)


def _c8_doc(norm_kind, target_mode, seed):
    return {
        "seed": seed,
        "env": {"name": "visualmatch", "memory_length": 2},
        "model": {"d_model": 64, "n_layers": 2, "n_heads": 4, "simnorm_group": 8,
                  "norm_kind": norm_kind},
        "search": {"num_simulations": 25},
        "train": {
            "total_env_steps": C8_ENV_STEPS,
            "batch_size": 64,
            "eval_interval": 2000,
            "eval_episodes": 30,
            "target_mode": target_mode,
        },
    }


def _c8_outcome(norm_kind, target_mode, seed):
    name = f"c8-{norm_kind}-{target_mode}"
    _, summary, _, evals = cached_run(name, _c8_doc(norm_kind, target_mode, seed))
    final = evals[-1]["success_rate"] if evals else 0.0
    return final, summary["diverged"]


class TestCriterion08:
    def test_criterion_08_ablation_directions(self):
        finals = {}
        diverged = {}
        for kind in ("simnorm", "softmax", "sigmoid"):
            rows = [_c8_outcome(kind, "soft", s) for s in C8_SEEDS]
            finals[kind] = float(np.mean([r[0] for r in rows]))
            diverged[kind] = any(r[1] for r in rows)
        nt_rows = [_c8_outcome("simnorm", "none", s) for s in C8_SEEDS]
        nt_final = float(np.mean([r[0] for r in nt_rows]))
        nt_diverged = any(r[1] for r in nt_rows)
        order_ok = finals["simnorm"] >= finals["softmax"] >= finals["sigmoid"]
        nt_ok = nt_diverged or nt_final < finals["simnorm"]
        ok = order_ok and nt_ok
        report(8, "SimNorm >= Softmax >= Sigmoid; no-target diverges or lags", ok,
               f"means {finals['simnorm']:.2f}/{finals['softmax']:.2f}/{finals['sigmoid']:.2f}, "
               f"no-target {'diverged' if nt_diverged else f'{nt_final:.2f}'}")


# ---------------------------------------------------------------------------
# criterion 9: continuous control pipeline
# ---------------------------------------------------------------------------

C9_SEEDS = (0, 1, 2)


def _c9_doc(seed):
    return {
        "seed": seed,
        "env": {"name": "continuous_bandit"},
        "model": {"d_model": 16, "simnorm_group": 8, "n_layers": 1, "n_heads": 2,
                  "dropout": 0.0, "encoder_hidden": 32},
        "search": {"num_simulations": 25},
        "train": {"total_env_steps": 5000, "batch_size": 64, "lr": 3e-4,
                  "eval_interval": 1000, "eval_episodes": 10},
    }


def _policy_mean(run_dir, doc):
    cfg = parse_config(doc)
    trainer = build_trainer(cfg)
    from latentplan.experiment import restore_trainer

    restore_trainer(trainer, resolve_checkpoint(run_dir))
    model = trainer.model
    with T.no_grad():
        ctx = model.new_episode_context()
        z = model.encode_observation(np.ones((1,), dtype=np.float32))
        hidden = model.append_latent(ctx, z)
        (mu, _), _ = model.decision_predict(T.Tensor(hidden[None, :]))
    return float(mu.data[0, 0])


class TestCriterion09:
    def test_criterion_09_continuous_bandit(self):
        mus = []
        for seed in C9_SEEDS:
            doc = _c9_doc(seed)
            run_dir, summary, _, _ = cached_run("c9-bandit", doc)
            assert summary["env_steps"] <= 5000 + 64  # budget respected (round granularity)
            mus.append(_policy_mean(run_dir, doc))
        errs = [abs(m - 0.3) for m in mus]
        ok = all(e < 0.05 for e in errs)
        report(9, "sampled-action search drives policy mean to the optimum", ok,
               "mu = " + ", ".join(f"{m:.3f}" for m in mus) + " (target 0.3)")


# ---------------------------------------------------------------------------
# criterion 10: multi-task gradient routing
# ---------------------------------------------------------------------------

C10_DOC = {
    "seed": 0,
    "tasks": [{"name": "chain", "n_states": 4}, {"name": "bandit"}],
    "model": {"d_model": 16, "simnorm_group": 8, "n_layers": 1, "n_heads": 2,
              "dropout": 0.0, "encoder_hidden": 32},
    "search": {"num_simulations": 8},
    "train": {"total_env_steps": 200, "batch_size": 8, "eval_interval": 100,
              "eval_episodes": 2, "episodes_per_collect": 2, "context_length": 1},
}


class TestCriterion10:
    def test_criterion_10_multitask_routing(self):
        rng = np.random.default_rng(101)
        trainer = build_trainer(parse_config(C10_DOC))
        trainer.collect_round()
        for _, p in trainer.model.named_parameters():
            p.data += rng.normal(scale=0.01, size=p.data.shape)  # heads off zero-init
        batches = trainer.task_batches()
        trainer.model.train()
        per_task = trainer.task_losses(batches)
        trainer.model.eval()

        # gradients from the bandit (task B) batch alone
        per_task[1][0].backward()
        head_prefixes = ("tasks.0.decision.", "tasks.0.dynamics.")
        a_zero = True
        b_nonzero = False
        for name, p in trainer.model.named_parameters():
            if name.startswith(head_prefixes):
                a_zero &= p.grad is None or not np.any(p.grad)
            if name.startswith(("tasks.1.decision.", "tasks.1.dynamics.")):
                b_nonzero |= p.grad is not None and bool(np.any(p.grad))
        trainer.model.zero_grad()

        agg = multitask_aggregate([loss for loss, _ in per_task])
        direct = float(np.mean([float(loss.data) for loss, _ in per_task]))
        agg_err = abs(float(agg.data) - direct)
        ok = a_zero and b_nonzero and agg_err <= 1e-6
        report(10, "cross-task head gradients zero; aggregate is the mean", ok,
               f"task-A grads zero: {a_zero}, aggregate err {agg_err:.1e}")
