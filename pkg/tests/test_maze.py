import numpy as np
import pytest

from gara.maze import (
    ACTIONS,
    Action,
    MazeConfig,
    MazeEnv,
    MazeState,
    Rect,
    is_exit,
    reset,
    state_domain,
    step,
)


def scripted_action(s: MazeState) -> Action:
    """Committed reference solution: down the left side, right under the wall, up."""
    if s.x < 0.875 and s.y > 0.15:
        return Action.ACCEL_DOWN
    if s.x < 0.875:
        return Action.ACCEL_RIGHT
    return Action.ACCEL_UP


def in_any_wall_interior(cfg, s):
    return any(w.contains_interior(s.x, s.y) for w in cfg.walls)


class TestConfig:
    def test_defaults(self):
        cfg = MazeConfig()
        assert cfg.v_max == 0.05 and cfg.accel == 0.025 and cfg.max_steps == 400
        assert cfg.walls == [Rect(0.45, 0.55, 0.25, 1.0)]

    def test_rejects_wall_over_start(self):
        with pytest.raises(ValueError):
            MazeConfig(walls=[Rect(0.0, 0.2, 0.8, 1.0)])

    def test_rejects_out_of_domain(self):
        with pytest.raises(ValueError):
            MazeConfig(exit=Rect(0.9, 1.1, 0.9, 1.0))

    def test_dict_round_trip(self):
        cfg = MazeConfig()
        assert MazeConfig.from_dict(cfg.to_dict()) == cfg


class TestReset:
    def test_within_start_region_zero_velocity(self):
        cfg = MazeConfig()
        s = reset(cfg, np.random.default_rng(0))
        assert cfg.start.contains(s.x, s.y)
        assert s.vx == 0.0 and s.vy == 0.0

    def test_deterministic_per_seed(self):
        cfg = MazeConfig()
        assert reset(cfg, np.random.default_rng(7)) == reset(cfg, np.random.default_rng(7))

    def test_many_resets_satisfy_invariants(self):
        cfg = MazeConfig()
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            s = reset(cfg, rng)
            assert 0.0 <= s.x <= 1.0 and 0.0 <= s.y <= 1.0
            assert not in_any_wall_interior(cfg, s)


class TestStep:
    def test_free_motion(self):
        cfg = MazeConfig()
        s2, r, done = step(cfg, MazeState(0.2, 0.2, 0.0, 0.0), Action.ACCEL_RIGHT)
        assert s2 == MazeState(0.225, 0.2, 0.025, 0.0)
        assert r == 0.0 and not done

    def test_wall_blocks_x_motion(self):
        cfg = MazeConfig()
        s2, r, done = step(cfg, MazeState(0.44, 0.5, 0.05, 0.0), Action.ACCEL_RIGHT)
        assert s2.x == 0.44 and s2.vx == 0.0
        assert s2.y == 0.5 and not done

    def test_exit_gives_reward_and_done(self):
        cfg = MazeConfig()
        s2, r, done = step(cfg, MazeState(0.9, 0.82, 0.0, 0.05), Action.ACCEL_UP)
        assert r == 1.0 and done
        assert cfg.exit.contains(s2.x, s2.y)

    def test_domain_edge_cancels_motion(self):
        cfg = MazeConfig()
        s2, _, _ = step(cfg, MazeState(0.02, 0.5, -0.05, 0.0), Action.ACCEL_LEFT)
        assert s2.x == 0.02 and s2.vx == 0.0

    def test_velocity_clamped(self):
        cfg = MazeConfig()
        s = MazeState(0.2, 0.2, 0.05, 0.0)
        s2, _, _ = step(cfg, s, Action.ACCEL_RIGHT)
        assert s2.vx == 0.05

    def test_passes_under_wall(self):
        cfg = MazeConfig()
        s2, _, _ = step(cfg, MazeState(0.44, 0.1, 0.05, 0.0), Action.ACCEL_RIGHT)
        assert s2.x == pytest.approx(0.49)


class TestIsExit:
    def test_inside(self):
        assert is_exit(MazeConfig(), MazeState(0.9, 0.9, 0.0, 0.0))

    def test_outside(self):
        assert not is_exit(MazeConfig(), MazeState(0.5, 0.5, 0.0, 0.0))

    def test_boundary_closed(self):
        assert is_exit(MazeConfig(), MazeState(0.85, 0.85, 0.0, 0.0))


class TestStateDomain:
    def test_default_box(self):
        dom = state_domain(MazeConfig())
        np.testing.assert_array_equal(dom.lo, [0, 0, -0.05, -0.05])
        np.testing.assert_array_equal(dom.hi, [1, 1, 0.05, 0.05])

    def test_contains_random_rollouts(self):
        cfg = MazeConfig()
        dom = state_domain(cfg)
        rng = np.random.default_rng(3)
        env = MazeEnv(cfg, rng)
        s = env.reset()
        for _ in range(20_000):
            s, _, done, _ = env.step(ACTIONS[rng.integers(4)])
            assert dom.contains_point(s.as_array())
            if done:
                s = env.reset()


class TestSafetyProperties:
    def test_never_inside_wall_under_random_actions(self):
        cfg = MazeConfig()
        rng = np.random.default_rng(17)
        env = MazeEnv(cfg, rng)
        s = env.reset()
        for _ in range(100_000):
            s, _, done, _ = env.step(ACTIONS[rng.integers(4)])
            assert not in_any_wall_interior(cfg, s)
            assert abs(s.vx) <= cfg.v_max and abs(s.vy) <= cfg.v_max
            if done:
                s = env.reset()

    def test_trajectory_determinism(self):
        cfg = MazeConfig()

        def rollout():
            rng = np.random.default_rng(5)
            env = MazeEnv(cfg, rng)
            s = env.reset()
            out = [s]
            action_rng = np.random.default_rng(6)
            for _ in range(500):
                s, _, done, _ = env.step(ACTIONS[action_rng.integers(4)])
                out.append(s)
                if done:
                    s = env.reset()
                    out.append(s)
            return out

        assert rollout() == rollout()


class TestSolvability:
    def test_scripted_solution_reaches_exit(self):
        cfg = MazeConfig()
        rng = np.random.default_rng(2)
        for _ in range(20):
            env = MazeEnv(cfg, rng)
            s = env.reset()
            done = reached = False
            while not done:
                s, _, done, reached = env.step(scripted_action(s))
            assert reached
            assert env.t <= cfg.max_steps


class TestMazeEnv:
    def test_step_cap_terminates(self):
        cfg = MazeConfig(max_steps=10)
        env = MazeEnv(cfg, np.random.default_rng(0))
        env.reset()
        done = False
        steps = 0
        while not done:
            _, _, done, reached = env.step(Action.ACCEL_LEFT)
            steps += 1
        assert steps == 10 and not reached
