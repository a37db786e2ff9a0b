"""VisualMatch: a three-phase grid POMDP testing long-term memory.

Phase 1 (exploration, 1 step): the room floor shows the episode's target
color. Phase 2 (distraction, `memory_length` steps): the color is gone and
yellow apples litter the room; collecting them does nothing. Phase 3 (reward,
15 steps): three colored cells appear next to the start; stepping onto one
commits the agent's answer and pays 1 iff it matches the remembered target.

Episodes run a fixed memory_length + 16 steps so one training context can
cover a whole episode. Stepping onto a colored cell freezes the agent for the
remainder instead of ending the episode early. The agent only ever sees an
egocentric 5x5 crop (walls padded in), so the target color is unobservable
after phase 1 — the task is pure recall.

Room layout is a 7x7 grid with a one-cell wall ring (5x5 interior), agent
starting at the center. Colored answer cells sit at fixed positions: blue
above the start, red to the left, green to the right, identical across
episodes. Apple placement and target choice come from independent RNG
streams so phase-2 frames carry no information about the target.
"""

import os

import numpy as np

from .ppm import write_ppm

GRID = 7  # outer size including the wall ring
VIEW = 2  # egocentric half-window (5x5 crop)
PHASE3_STEPS = 15

COLORS = {
    "wall": (0.5, 0.5, 0.5),
    "floor": (0.0, 0.0, 0.0),
    "agent": (1.0, 1.0, 1.0),
    "blue": (0.0, 0.0, 1.0),
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "apple": (1.0, 1.0, 0.0),
}
TARGET_NAMES = ("blue", "red", "green")
START = (3, 3)
# fixed color -> answer-cell map, constant across episodes
ANSWER_CELLS = {"blue": (2, 3), "red": (3, 2), "green": (3, 4)}
MOVES = {0: (-1, 0), 1: (1, 0), 2: (0, -1), 3: (0, 1), 4: (0, 0)}  # up/down/left/right/stay

NUM_APPLES = 3


class VisualMatchEnv:
    """Fixed-length POMDP; observations are 3x5x5 egocentric RGB crops."""

    continuous = False

    def __init__(self, memory_length=2, seed=0, include_stay=True, frame_dump_dir=None):
        if memory_length < 0:
            raise ValueError("memory_length must be >= 0")
        self.memory_length = int(memory_length)
        self.num_actions = 5 if include_stay else 4
        self.obs_shape = (3, 5, 5)
        self.max_episode_steps = self.memory_length + 16
        self.frame_dump_dir = frame_dump_dir
        self._seed = int(seed)
        self._episode = -1
        self._done = True

    # -- episode machinery ---------------------------------------------------

    def reset(self, seed=None):
        if seed is not None:
            self._seed = int(seed)
            self._episode = -1
        self._episode += 1
        target_rng = np.random.default_rng([self._seed, self._episode, 0x7A59])
        apple_rng = np.random.default_rng([self._seed, self._episode, 0xA991E])
        self.target = TARGET_NAMES[int(target_rng.integers(len(TARGET_NAMES)))]
        interior = [(r, c) for r in range(1, 6) for c in range(1, 6) if (r, c) != START]
        picks = apple_rng.choice(len(interior), size=NUM_APPLES, replace=False)
        self._apples = {interior[i] for i in picks}
        self._pos = START
        self._t = 0
        self._done = False
        self._committed = False
        self._answer = None
        return self._observe()

    def step(self, action):
        if self._done:
            raise RuntimeError("step() on a finished episode; call reset()")
        action = int(action)
        if action not in MOVES or action >= self.num_actions:
            raise ValueError(f"action {action} out of range for {self.num_actions} actions")
        phase = self._phase(self._t)
        reward = 0.0
        if not self._committed:
            dr, dc = MOVES[action]
            nxt = (self._pos[0] + dr, self._pos[1] + dc)
            if 1 <= nxt[0] <= 5 and 1 <= nxt[1] <= 5:
                self._pos = nxt
            if phase == "distraction":
                self._apples.discard(self._pos)
            if phase == "reward":
                for color, cell in ANSWER_CELLS.items():
                    if self._pos == cell:
                        self._committed = True
                        self._answer = color
                        reward = 1.0 if color == self.target else 0.0
                        break
        self._t += 1
        self._done = self._t >= self.max_episode_steps
        info = {"phase": phase, "target": self.target, "committed": self._committed}
        return self._observe(), reward, self._done, info

    def _phase(self, t):
        if t < 1:
            return "exploration"
        if t < 1 + self.memory_length:
            return "distraction"
        return "reward"

    # -- rendering -----------------------------------------------------------

    def _render_grid(self):
        grid = np.empty((GRID, GRID, 3), dtype=np.float32)
        grid[:] = COLORS["wall"]
        grid[1:6, 1:6] = COLORS["floor"]
        phase = self._phase(min(self._t, self.max_episode_steps - 1))
        if self._t == 0:
            grid[1:6, 1:6] = COLORS[self.target]
        elif phase == "distraction":
            for cell in self._apples:
                grid[cell] = COLORS["apple"]
        else:
            for color, cell in ANSWER_CELLS.items():
                grid[cell] = COLORS[color]
        grid[self._pos] = COLORS["agent"]
        return grid

    def _observe(self):
        grid = self._render_grid()
        pad = np.empty((GRID + 2 * VIEW, GRID + 2 * VIEW, 3), dtype=np.float32)
        pad[:] = COLORS["wall"]
        pad[VIEW : VIEW + GRID, VIEW : VIEW + GRID] = grid
        r, c = self._pos
        crop = pad[r : r + 2 * VIEW + 1, c : c + 2 * VIEW + 1]
        obs = np.ascontiguousarray(crop.transpose(2, 0, 1))
        if self.frame_dump_dir:
            os.makedirs(self.frame_dump_dir, exist_ok=True)
            write_ppm(os.path.join(self.frame_dump_dir, f"ep{self._episode:04d}_t{self._t:02d}.ppm"), grid)
        return obs
