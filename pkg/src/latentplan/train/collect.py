"""Experience collection and evaluation via search-guided play.

One rolling KV context follows each episode: the searched root's context
(which already absorbed the current latent token) becomes the live context,
and the chosen action token is appended before the next environment step.
Search therefore always plans from the exact token history the model has
seen, up to the cache's H_infer window.
"""

import numpy as np

from ..search import improved_policy, run_search
from .buffer import GameSegment


def _sample_index(policy, rng):
    return int(rng.choice(len(policy), p=policy))


def play_episode(env, planner, scfg, rng, collect, temperature, task_id=0):
    """Roll one episode; returns (GameSegment, undiscounted return)."""
    model = planner.model
    if model.training:
        raise RuntimeError("collection requires the model in eval mode")
    observations, actions, rewards, dones = [], [], [], []
    policies, root_values, sampled = [], [], []
    obs = env.reset()
    observations.append(obs)
    ctx = None
    done = False
    while not done:
        result = run_search(planner, obs, ctx, scfg, rng, collect=collect, temperature=temperature)
        ctx = result.root.payload.context
        idx = _sample_index(result.policy, rng)
        action = result.actions[idx]
        if scfg.continuous:
            visits = [e.visit_count for e in result.root.edges]
            policies.append(improved_policy(visits, 1.0))
            sampled.append(np.stack(result.actions))
        else:
            policies.append(result.policy)
        model.append_action(ctx, np.asarray(action))
        obs, reward, done, _ = env.step(action)
        observations.append(obs)
        actions.append(action)
        rewards.append(reward)
        dones.append(done)
        root_values.append(result.root_value)
    segment = GameSegment(
        np.stack(observations), np.stack(actions), rewards, dones,
        np.stack(policies), root_values, task_id=task_id,
        sampled_actions=np.stack(sampled) if sampled else None,
    )
    return segment, float(np.sum(rewards))


def collect_experience(env, planner, scfg, buffer, rng, episodes=8, temperature=None, task_id=0):
    """Play `episodes` search-guided episodes and store them; returns stats."""
    steps, returns = 0, []
    t = scfg.temperature if temperature is None else temperature
    for _ in range(episodes):
        segment, ret = play_episode(env, planner, scfg, rng, collect=True, temperature=t, task_id=task_id)
        buffer.append(segment)
        steps += len(segment)
        returns.append(ret)
    return {"env_steps": steps, "episodes": episodes, "mean_return": float(np.mean(returns))}


def evaluate(env, planner, scfg, rng, episodes=30, success_threshold=0.999):
    """Greedy (argmax, no-noise) evaluation; returns mean return and success rate."""
    returns = []
    for _ in range(episodes):
        _, ret = play_episode(env, planner, scfg, rng, collect=False, temperature=0.0)
        returns.append(ret)
    returns = np.asarray(returns)
    return {
        "episodes": episodes,
        "eval_return": float(returns.mean()),
        "return_std": float(returns.std()),
        "success_rate": float((returns >= success_threshold).mean()),
    }
