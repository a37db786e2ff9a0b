"""Planner adapters feeding the tree search.

A planner answers two questions: "evaluate the root for this observation"
and "what happens one hypothetical step after this node". Tree mechanics
stay agnostic to whether answers come from the learned world model or, for
verification, from the true environment dynamics.
"""

from dataclasses import dataclass

import numpy as np

from .. import tensor as T
from ..scalars import categorical_to_scalar
from .core import sample_continuous_actions


@dataclass
class Evaluation:
    """What the planner knows about a freshly reached state."""

    payload: object     # opaque node state handed back on expansion
    reward: float       # reward on the edge leading here (0 at the root)
    actions: list       # candidate actions for outgoing edges
    priors: np.ndarray  # prior over those candidates
    value: float        # bootstrap value of the state
    terminal: bool = False


@dataclass
class _ModelNode:
    latent: object       # (D,) Tensor
    context: object      # EpisodeContext whose cache ends at this node's latent token


class WorldModelPlanner:
    """Search through the learned latent dynamics.

    Each expansion clones the parent's KV context (so sibling subtrees cannot
    corrupt each other) and runs exactly two cached token forwards: the action
    token through the dynamics head, then the predicted latent through the
    decision head. Leaf bootstrap values come from the target model's value
    head applied to the live backbone's hidden state; priors come from the
    live policy head.
    """

    def __init__(self, model, target_model, cfg):
        self.model = model
        self.target = target_model if target_model is not None else model
        self.cfg = cfg

    def root(self, obs, context, rng):
        ctx = context.clone() if context is not None else self.model.new_episode_context()
        with T.no_grad():
            z = self.model.encode_observation(obs)
            hidden = self.model.append_latent(ctx, z)
        actions, priors, value = self._decision(hidden, rng)
        return Evaluation(_ModelNode(z, ctx), 0.0, actions, priors, value)

    def expand(self, payload, action, rng):
        ctx = payload.context.clone()
        with T.no_grad():
            ha = self.model.append_action(ctx, np.asarray(action))
            z_next, reward_logits = self.model.dynamics_predict(T.Tensor(ha[None, :]))
            reward = float(categorical_to_scalar(T.softmax(reward_logits).data[0]))
            hz = self.model.append_latent(ctx, T.Tensor(z_next.data[0]))
        actions, priors, value = self._decision(hz, rng)
        return Evaluation(_ModelNode(z_next, ctx), reward, actions, priors, value)

    def _decision(self, hidden, rng):
        with T.no_grad():
            h = T.Tensor(hidden[None, :])
            policy, _ = self.model.decision_predict(h)
            _, value_logits = self.target.decision_predict(h)
            value = float(categorical_to_scalar(T.softmax(value_logits).data[0]))
            if self.cfg.continuous:
                mu, sigma = policy
                actions, priors, _ = sample_continuous_actions(
                    mu.data[0], sigma.data[0], self.cfg.num_sampled_actions, rng)
                return list(actions), priors, value
            priors = T.softmax(policy).data[0].astype(np.float64)
        return list(range(priors.size)), priors, value


class OracleEnvPlanner:
    """Ground-truth planner for search verification.

    Uses the environment's pure transition function as the "model": uniform
    priors, true rewards, zero leaf values. With enough simulations the
    improved policy must match exhaustive search, which is what the oracle
    equivalence tests assert.
    """

    def __init__(self, env):
        self.env = env
        self.num_actions = env.num_actions

    def _uniform(self):
        return np.full(self.num_actions, 1.0 / self.num_actions)

    def root(self, state, context, rng):
        return Evaluation(state, 0.0, list(range(self.num_actions)), self._uniform(), 0.0)

    def expand(self, state, action, rng):
        nxt, reward, done = self.env.transition(state, action)
        return Evaluation(nxt, reward, list(range(self.num_actions)), self._uniform(), 0.0, terminal=done)


def exhaustive_best_action(env, state, depth, discount):
    """Brute-force optimum: enumerate all action sequences to `depth`.

    Returns (best first action, best discounted return). Ties go to the
    smaller action index, mirroring the search's tie-breaking.
    """

    def best_return(s, d):
        if d == 0:
            return 0.0
        best = -np.inf
        for a in range(env.num_actions):
            nxt, r, done = env.transition(s, a)
            g = r if done else r + discount * best_return(nxt, d - 1)
            best = max(best, g)
        return best

    returns = []
    for a in range(env.num_actions):
        nxt, r, done = env.transition(state, a)
        g = r if done else r + discount * best_return(nxt, depth - 1)
        returns.append(g)
    best = int(np.argmax(returns))
    return best, returns[best]
