"""Deterministic chain MDP: `right` advances, `left` resets to the start.

Reward 1 arrives only on entering the final state, so the discounted optimum
is always-right and the optimal start value is gamma^(n_states - 2). States
are plain ints and the transition function is pure, which lets search tests
enumerate every start state and compare against brute-force rollouts.
"""

import numpy as np

LEFT, RIGHT = 0, 1


class ChainEnv:
    """N-state chain with one-hot observations and a step-count horizon."""

    continuous = False

    def __init__(self, n_states=5, horizon=None, seed=None):
        if n_states < 2:
            raise ValueError("chain needs at least two states")
        self.n_states = n_states
        self.horizon = int(horizon) if horizon is not None else 2 * n_states
        self.num_actions = 2
        self.obs_shape = (n_states,)
        self.max_episode_steps = self.horizon
        self._state = 0
        self._steps = 0
        self._done = True

    def observe(self, state):
        obs = np.zeros(self.n_states, dtype=np.float32)
        obs[state] = 1.0
        return obs

    def transition(self, state, action):
        """Pure (state, action) -> (next_state, reward, done); horizon not applied."""
        if action not in (LEFT, RIGHT):
            raise ValueError(f"chain action must be 0 (left) or 1 (right), got {action}")
        nxt = min(state + 1, self.n_states - 1) if action == RIGHT else 0
        done = nxt == self.n_states - 1
        reward = 1.0 if done and state != nxt else 0.0
        return nxt, reward, done

    def enumerate_starts(self):
        return list(range(self.n_states - 1))

    def reset(self, seed=None, state=0):
        self._state = int(state)
        self._steps = 0
        self._done = False
        return self.observe(self._state)

    def set_state(self, state):
        self._state = int(state)
        self._done = state == self.n_states - 1

    def step(self, action):
        if self._done:
            raise RuntimeError("step() on a finished episode; call reset()")
        self._state, reward, done = self.transition(self._state, int(action))
        self._steps += 1
        if self._steps >= self.horizon:
            done = True
        self._done = done
        return self.observe(self._state), reward, done, {"state": self._state}
