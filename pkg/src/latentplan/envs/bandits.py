"""Single-step bandit environments used as search and training oracles."""

import numpy as np


class DiscreteBandit:
    """Two-or-more-armed bandit: one step, fixed per-arm rewards, done."""

    continuous = False

    def __init__(self, arm_rewards=(1.0, 0.0), seed=None):
        self.arm_rewards = tuple(float(r) for r in arm_rewards)
        if len(self.arm_rewards) < 2:
            raise ValueError("need at least two arms")
        self.num_actions = len(self.arm_rewards)
        self.obs_shape = (1,)
        self.max_episode_steps = 1
        self._done = True

    def observe(self, state):
        return np.ones(1, dtype=np.float32)

    def transition(self, state, action):
        if not 0 <= action < self.num_actions:
            raise ValueError(f"arm index {action} out of range")
        return 0, self.arm_rewards[action], True

    def enumerate_starts(self):
        return [0]

    def reset(self, seed=None, state=0):
        self._done = False
        return self.observe(0)

    def set_state(self, state):
        self._done = False

    def step(self, action):
        if self._done:
            raise RuntimeError("step() on a finished episode; call reset()")
        _, reward, done = self.transition(0, int(action))
        self._done = done
        return self.observe(0), reward, done, {}


class ContinuousBandit:
    """One real-valued action, reward -(a - a*)^2, episode ends immediately."""

    continuous = True

    def __init__(self, optimum=0.3, seed=None):
        self.optimum = float(optimum)
        self.action_dim = 1
        self.obs_shape = (1,)
        self.max_episode_steps = 1
        self._done = True

    def observe(self, state):
        return np.ones(1, dtype=np.float32)

    def reset(self, seed=None):
        self._done = False
        return self.observe(0)

    def step(self, action):
        if self._done:
            raise RuntimeError("step() on a finished episode; call reset()")
        a = float(np.asarray(action).reshape(-1)[0])
        reward = -((a - self.optimum) ** 2)
        self._done = True
        return self.observe(0), reward, True, {}
