"""Episode storage and uniform replay sampling.

A GameSegment holds one finished episode as dense arrays (observations carry
one extra trailing entry so every stored step has its successor available for
latent targets). The buffer evicts whole segments FIFO once the transition
count would exceed capacity, and samples fixed-length windows that never
cross an episode boundary.
"""

from collections import deque

import numpy as np


class GameSegment:
    """One episode: arrays over its T steps (observations over T+1)."""

    def __init__(self, observations, actions, rewards, dones, policies,
                 root_values, task_id=0, sampled_actions=None):
        self.observations = np.asarray(observations, dtype=np.float32)
        self.actions = np.asarray(actions)
        self.rewards = np.asarray(rewards, dtype=np.float64)
        self.dones = np.asarray(dones, dtype=bool)
        self.policies = np.asarray(policies, dtype=np.float64)
        self.root_values = np.asarray(root_values, dtype=np.float64)
        self.task_id = task_id
        self.sampled_actions = None if sampled_actions is None else np.asarray(sampled_actions)
        self.validate()

    def __len__(self):
        return len(self.actions)

    def validate(self):
        t = len(self.actions)
        if t == 0:
            raise ValueError("empty segment")
        if self.observations.shape[0] != t + 1:
            raise ValueError(f"need {t + 1} observations for {t} steps, got {self.observations.shape[0]}")
        if not (len(self.rewards) == len(self.dones) == len(self.policies) == len(self.root_values) == t):
            raise ValueError("per-step arrays disagree on length")
        if self.dones[:-1].any():
            raise ValueError("done may only be set at the final step")
        if not np.allclose(self.policies.sum(axis=-1), 1.0, atol=1e-6):
            raise ValueError("stored policies must be distributions")
        return self


class ReplayBuffer:
    """FIFO segment store with uniform (segment, window offset) sampling."""

    def __init__(self, capacity=1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = int(capacity)
        self.segments = deque()
        self.num_transitions = 0
        self.total_appended = 0

    def __len__(self):
        return len(self.segments)

    def append(self, segment):
        self.segments.append(segment)
        self.num_transitions += len(segment)
        self.total_appended += 1
        while self.num_transitions > self.capacity and len(self.segments) > 1:
            self.num_transitions -= len(self.segments.popleft())
        if self.num_transitions > self.capacity:
            # a single over-capacity episode cannot be stored coherently
            self.num_transitions -= len(self.segments.popleft())

    def sample(self, batch_size, window, rng):
        """batch_size uniform segment draws, each with a uniform valid offset."""
        eligible = [s for s in self.segments if len(s) >= window]
        if not eligible:
            raise LookupError(f"no stored segment is {window} steps long")
        picks = rng.integers(len(eligible), size=batch_size)
        out = []
        for i in picks:
            seg = eligible[int(i)]
            offset = int(rng.integers(len(seg) - window + 1))
            out.append((seg, offset))
        return out
