import math

import numpy as np
import pytest

from gara import mlp
from gara.forward_model import ForwardModel, TransitionRecord, encode_goal
from gara.intervals import IntervalBox
from gara.partition import GoalRegion


def domain_1d():
    return IntervalBox([0.0], [1.0])


def fm_1d(**kwargs):
    return ForwardModel(1, domain_1d(), k=5, **kwargs)


def region(lo, hi, rid=0):
    return GoalRegion(rid, IntervalBox(lo, hi))


class TestEncodeGoal:
    def test_center_and_half_widths(self):
        r = region([0.0, 0.0, -0.1, -0.1], [1.0, 1.0, 0.1, 0.1])
        enc = encode_goal(r)
        np.testing.assert_allclose(enc, [0.5, 0.5, 0, 0, 0.5, 0.5, 0.1, 0.1])

    def test_point_box_zero_half_widths(self):
        r = region([0.3, 0.4], [0.3, 0.4])
        np.testing.assert_allclose(encode_goal(r), [0.3, 0.4, 0.0, 0.0])

    def test_independent_of_region_id(self):
        a = region([0.0], [0.5], rid=3)
        b = region([0.0], [0.5], rid=9)
        np.testing.assert_array_equal(encode_goal(a), encode_goal(b))

    def test_injective_on_distinct_boxes(self):
        rng = np.random.default_rng(0)
        seen = set()
        for _ in range(200):
            lo = rng.uniform(0, 0.5, 2)
            hi = lo + rng.uniform(0.01, 0.5, 2)
            seen.add(tuple(encode_goal(region(lo, hi))))
        assert len(seen) == 200


class TestBuffer:
    def rec(self, v=0.1):
        return TransitionRecord([v], [0.5, 0.25], [v + 0.1])

    def test_append_grows(self):
        fm = fm_1d()
        fm.record(self.rec(), 0, 1)
        assert len(fm) == 1 and fm.pair_count(0, 1) == 1

    def test_eviction_at_capacity(self):
        fm = fm_1d(capacity=3)
        for i in range(3):
            fm.record(self.rec(0.1 * i), 0, 1)
        fm.record(self.rec(0.9), 2, 3)
        assert len(fm) == 3
        # globally oldest record (from pair (0,1)) was evicted
        assert fm.pair_count(0, 1) == 2 and fm.pair_count(2, 3) == 1
        remaining = [r.start_state[0] for r in fm.records_for(0, 1)]
        assert remaining == [pytest.approx(0.1), pytest.approx(0.2)]

    def test_grouped_retrieval(self):
        fm = fm_1d()
        fm.record(self.rec(0.1), 0, 1)
        fm.record(self.rec(0.2), 1, 0)
        fm.record(self.rec(0.3), 0, 1)
        assert fm.pairs() == [(0, 1), (1, 0)]
        assert len(fm.records_for(0, 1)) == 2

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            TransitionRecord([np.nan], [0.0, 0.0], [0.1])


class TestTrain:
    def test_empty_buffer_sentinel(self):
        fm = fm_1d()
        loss = fm.train(1, 8, np.random.default_rng(0))
        assert math.isnan(loss)

    def test_fits_constant_map(self):
        fm = fm_1d(seed=3)
        for _ in range(64):
            fm.record(TransitionRecord([0.4], [0.5, 0.25], [0.7]), 0, 1)
        loss = math.inf
        rng = np.random.default_rng(1)
        for _ in range(500):
            loss = fm.train(1, 16, rng)
            if loss < 1e-4:
                break
        assert loss < 1e-4

    def test_fits_affine_dynamics_held_out(self):
        # s' = s + 0.1 is exactly representable
        fm = fm_1d(seed=4)
        rng = np.random.default_rng(2)
        tgt = region([0.5], [1.0], rid=1)
        enc = encode_goal(tgt)
        for _ in range(400):
            s = rng.uniform(0, 0.9)
            fm.record(TransitionRecord([s], enc, [s + 0.1]), 0, 1)
        for _ in range(150):
            fm.train(1, 32, rng)
        assert fm.validation_mse(0, 1) < 1e-3

    def test_deterministic_per_seed(self):
        def run():
            fm = fm_1d(seed=5)
            r = np.random.default_rng(9)
            for i in range(100):
                s = (i % 10) / 10.0
                fm.record(TransitionRecord([s], [0.5, 0.25], [s * 0.5 + 0.2]), 0, 1)
            return [fm.train(1, 16, r) for _ in range(5)]

        assert run() == run()

    def test_parameters_stay_finite(self):
        fm = fm_1d(seed=6, tightness_weight=0.5)
        rng = np.random.default_rng(3)
        for i in range(200):
            s = rng.uniform(0, 1)
            fm.record(TransitionRecord([s], [0.5, 0.25], [rng.uniform(0, 1)]), 0, 1)
        for _ in range(50):
            fm.train(1, 32, rng)
        for arr in fm.net.weights + fm.net.biases:
            assert np.all(np.isfinite(arr))


class TestReachRegion:
    def test_identity_net_ignoring_goal_dims(self):
        fm = fm_1d()
        w = np.zeros((1, 3))
        w[0, 0] = 1.0
        fm.net = mlp.Mlp([3, 1], [w], [np.zeros(1)])
        src = region([0.0], [0.5], rid=0)
        tgt = region([0.5], [1.0], rid=1)
        out = fm.reach_region(src, tgt, split_depth=0)
        assert out == src.box

    def test_affine_shift(self):
        fm = fm_1d()
        w = np.zeros((1, 3))
        w[0, 0] = 1.0
        fm.net = mlp.Mlp([3, 1], [w], [np.array([0.3])])
        src = region([0.0], [0.5], rid=0)
        tgt = region([0.5], [1.0], rid=1)
        out = fm.reach_region(src, tgt, split_depth=0)
        assert out == IntervalBox([0.3], [0.8])

    def test_output_clamped_to_domain(self):
        fm = fm_1d()
        w = np.zeros((1, 3))
        w[0, 0] = 1.0
        fm.net = mlp.Mlp([3, 1], [w], [np.array([0.9])])
        src = region([0.3], [0.5], rid=0)
        tgt = region([0.5], [1.0], rid=1)
        out = fm.reach_region(src, tgt, split_depth=0)
        assert out == IntervalBox([1.0], [1.0])

    def test_random_nets_always_inside_domain(self):
        rng = np.random.default_rng(4)
        fm = fm_1d(seed=11)
        src = region([0.1], [0.6], rid=0)
        tgt = region([0.6], [1.0], rid=1)
        for depth in range(3):
            out = fm.reach_region(src, tgt, split_depth=depth)
            assert fm.state_domain.contains(out)


class TestEmpiricalSoundnessCoupling:
    def test_buffered_end_states_inside_inflated_reach(self):
        # trained pair with >= 50 records: at least 90% of end states must lie
        # in the reach box inflated by the validation RMSE per dimension
        fm = fm_1d(seed=8)
        rng = np.random.default_rng(7)
        tgt = region([0.5], [1.0], rid=1)
        enc = encode_goal(tgt)
        for _ in range(300):
            s = rng.uniform(0.0, 0.5)
            end = min(1.0, s + 0.3 + rng.normal(0, 0.01))
            fm.record(TransitionRecord([s], enc, [max(0.0, end)]), 0, 1)
        for _ in range(200):
            fm.train(1, 32, rng)
        src = region([0.0], [0.5], rid=0)
        reach = fm.reach_region(src, tgt, split_depth=2)
        inflation = math.sqrt(fm.validation_mse(0, 1))
        lo, hi = reach.lo - inflation, reach.hi + inflation
        ends = np.array([r.end_state for r in fm.records_for(0, 1)])
        inside = np.all((ends >= lo) & (ends <= hi), axis=1)
        assert inside.mean() >= 0.9


class TestPersistence:
    def test_save_and_reload(self, tmp_path):
        fm = fm_1d(seed=12)
        fm.save(tmp_path / "net.json", tmp_path / "meta.json")
        import json
        meta = json.loads((tmp_path / "meta.json").read_text())
        assert meta == {"k": 5, "goal_encoding_dim": 2, "capacity": 20000}
        fm2 = fm_1d(seed=99)
        fm2.load_net(tmp_path / "net.json")
        for a, b in zip(fm2.net.weights, fm.net.weights):
            np.testing.assert_array_equal(a, b)

    def test_load_rejects_wrong_shape(self, tmp_path):
        fm = fm_1d(seed=12)
        fm.save(tmp_path / "net.json", tmp_path / "meta.json")
        other = ForwardModel(2, IntervalBox([0, 0], [1, 1]), k=5)
        with pytest.raises(ValueError):
            other.load_net(tmp_path / "net.json")
