"""Environment contracts: phase bookkeeping, rewards, determinism, info hiding."""

import numpy as np
import pytest

from latentplan.envs import ChainEnv, ContinuousBandit, DiscreteBandit, VisualMatchEnv, make_env
from latentplan.envs.visualmatch import ANSWER_CELLS, COLORS, START


class TestChain:
    def test_right_right_reaches_goal(self):
        env = ChainEnv(n_states=3)
        env.reset()
        _, r1, d1, _ = env.step(1)
        _, r2, d2, _ = env.step(1)
        assert (r1, d1) == (0.0, False) and (r2, d2) == (1.0, True)

    def test_left_resets(self):
        env = ChainEnv(n_states=4)
        env.reset(state=1)
        _, r, done, info = env.step(0)
        assert info["state"] == 0 and r == 0.0 and not done

    def test_horizon_cap(self):
        env = ChainEnv(n_states=5, horizon=3)
        env.reset()
        done = False
        for _ in range(3):
            _, _, done, _ = env.step(0)
        assert done

    def test_optimal_start_value_closed_form(self):
        """always-right return equals gamma^(N-2)"""
        gamma = 0.9
        for n in (3, 4, 5):
            env = ChainEnv(n_states=n)
            env.reset()
            ret, disc, done = 0.0, 1.0, False
            while not done:
                _, r, done, _ = env.step(1)
                ret += disc * r
                disc *= gamma
            assert ret == pytest.approx(gamma ** (n - 2))

    def test_one_hot_observation(self):
        env = ChainEnv(n_states=4)
        obs = env.reset(state=2)
        np.testing.assert_array_equal(obs, [0, 0, 1, 0])


class TestBandits:
    def test_discrete_arms(self):
        env = DiscreteBandit(arm_rewards=(1.0, 0.0))
        env.reset()
        _, r, done, _ = env.step(0)
        assert r == 1.0 and done
        env.reset()
        assert env.step(1)[1] == 0.0

    def test_continuous_quadratic(self):
        env = ContinuousBandit(optimum=0.3)
        env.reset()
        assert env.step(np.array([0.3]))[1] == pytest.approx(0.0)
        env.reset()
        assert env.step(np.array([1.3]))[1] == pytest.approx(-1.0)

    def test_grid_search_recovers_optimum(self):
        env = ContinuousBandit(optimum=0.3)
        grid = np.arange(-1.0, 1.0 + 1e-9, 0.01)
        rewards = []
        for a in grid:
            env.reset()
            rewards.append(env.step(np.array([a]))[1])
        assert abs(grid[int(np.argmax(rewards))] - 0.3) < 0.01 + 1e-9

    def test_step_after_done_rejected(self):
        env = DiscreteBandit()
        env.reset()
        env.step(0)
        with pytest.raises(RuntimeError):
            env.step(0)


def run_episode(env, actions):
    obs = [env.reset()]
    rewards, phases = [], []
    for a in actions:
        o, r, done, info = env.step(a)
        obs.append(o)
        rewards.append(r)
        phases.append(info["phase"])
    return obs, rewards, phases, done


class TestVisualMatch:
    def test_episode_length_and_phases(self):
        env = VisualMatchEnv(memory_length=2, seed=0)
        assert env.max_episode_steps == 18
        _, _, phases, done = run_episode(env, [4] * 18)
        assert done
        assert phases[0] == "exploration"
        assert phases[1:3] == ["distraction"] * 2
        assert phases[3:] == ["reward"] * 15

    def test_done_only_at_final_step(self):
        env = VisualMatchEnv(memory_length=0, seed=1)
        env.reset()
        env.step(4)  # exploration step; answer cells not active yet
        target_cell = ANSWER_CELLS[env.target]
        # step straight onto the correct cell in phase 3; episode must continue
        action = {(2, 3): 0, (3, 2): 2, (3, 4): 3}[target_cell]
        _, r, done, info = env.step(action)
        assert r == 1.0 and not done and info["committed"]
        total = r
        for _ in range(14):
            _, r, done, _ = env.step(1)
            total += r
        assert done and total == 1.0  # reward paid exactly once, freeze holds

    def test_wrong_color_commits_with_zero(self):
        env = VisualMatchEnv(memory_length=0, seed=1)
        env.reset()
        env.step(4)  # exploration step
        wrong = next(c for c in ANSWER_CELLS if c != env.target)
        action = {(2, 3): 0, (3, 2): 2, (3, 4): 3}[ANSWER_CELLS[wrong]]
        _, r, done, info = env.step(action)
        assert r == 0.0 and info["committed"] and not done
        rewards = [env.step(0)[1] for _ in range(14)]
        assert sum(rewards) == 0.0  # frozen: can't reach the right cell afterwards

    def test_apples_give_no_reward(self):
        env = VisualMatchEnv(memory_length=6, seed=3)
        env.reset()
        total = 0.0
        for a in (0, 1, 2, 3, 2, 3):  # wander during distraction
            _, r, _, info = env.step(a)
            if info["phase"] == "distraction":
                total += r
        assert total == 0.0

    def test_observation_form(self):
        env = VisualMatchEnv(memory_length=2, seed=0)
        obs = env.reset()
        assert obs.shape == (3, 5, 5) and obs.dtype == np.float32
        assert obs.min() >= 0.0 and obs.max() <= 1.0
        # phase-1 frame: center pixel is the white agent, neighbors target-colored
        np.testing.assert_array_equal(obs[:, 2, 2], 1.0)
        np.testing.assert_array_equal(obs[:, 2, 1], COLORS[env.target])

    def test_egocentric_crop_pads_with_wall(self):
        env = VisualMatchEnv(memory_length=0, seed=2)
        env.reset()
        obs = None
        for a in (0, 2):  # move to the top-left interior corner
            obs, _, _, _ = env.step(a)
        for a in (0, 2):
            obs, _, _, _ = env.step(a)
        np.testing.assert_array_equal(obs[:, 0, 0], COLORS["wall"])

    def test_deterministic_given_seed_and_actions(self):
        actions = [0, 3, 1, 2, 4] * 4
        a = run_episode(VisualMatchEnv(memory_length=4, seed=9), actions[:20])
        b = run_episode(VisualMatchEnv(memory_length=4, seed=9), actions[:20])
        for oa, ob in zip(a[0], b[0]):
            np.testing.assert_array_equal(oa, ob)
        assert a[1] == b[1]

    def test_phase2_frames_hide_target(self):
        """distraction-phase pixels are a function of the apple stream alone:
        two episodes with identical seeds but different targets (found by
        scanning episode indices) must produce identical phase-2 frames"""
        actions = [4, 0, 3, 1, 2, 3, 0, 2]
        # strong form: same seed and episode index (hence same apple stream), but
        # force a different target — every distraction frame must be identical
        env_a = VisualMatchEnv(memory_length=8, seed=5)
        env_b = VisualMatchEnv(memory_length=8, seed=5)
        obs_a = [env_a.reset()]
        obs_b = [env_b.reset()]
        env_b.target = next(c for c in ("blue", "red", "green") if c != env_a.target)
        for a in actions:
            obs_a.append(env_a.step(a)[0])
            obs_b.append(env_b.step(a)[0])
        for t in range(1, 9):  # distraction steps of memlen=8 episode
            np.testing.assert_array_equal(obs_a[t], obs_b[t])

    def test_action_validation(self):
        env = VisualMatchEnv(memory_length=0, seed=0, include_stay=False)
        assert env.num_actions == 4
        env.reset()
        with pytest.raises(ValueError):
            env.step(4)

    def test_frame_dump(self, tmp_path):
        env = VisualMatchEnv(memory_length=0, seed=0, frame_dump_dir=str(tmp_path))
        env.reset()
        env.step(0)
        dumps = sorted(tmp_path.iterdir())
        assert dumps and dumps[0].suffix == ".ppm"
        header = dumps[0].read_bytes()[:15]
        assert header.startswith(b"P6\n7 7\n255\n")

    def test_make_env_registry(self):
        assert isinstance(make_env("chain", n_states=3), ChainEnv)
        with pytest.raises(ValueError):
            make_env("atari")
