import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fingernarx.plant import (
    PlantConfig,
    PlantState,
    PressureTrajectory,
    quasistatic_pose,
    random_actuation,
    sensor_response,
    simulate,
    step_dynamics,
    workspace_grid,
)

unit = st.floats(0.0, 1.0)
QUIET = PlantConfig().noise_free()


class TestRandomActuation:
    def test_twenty_minutes_of_samples(self):
        assert len(random_actuation(1200.0, seed=1)) == 30000

    def test_bounds(self):
        traj = random_actuation(300.0, seed=2)
        assert np.all(np.abs(traj.speeds) <= 0.4)
        assert traj.p.min() >= 0.0 and traj.p.max() <= 1.0
        # speed is constant within each 0.2 s segment unless clamped
        inc = np.diff(traj.p, axis=0)
        seg = np.arange(len(inc)) // 5
        free = (traj.p[1:] > 0) & (traj.p[1:] < 1) & (traj.p[:-1] > 0) & (traj.p[:-1] < 1)
        np.testing.assert_allclose(inc[free], (traj.speeds[seg] / 25.0)[free], atol=1e-12)

    def test_deterministic(self):
        a, b = random_actuation(60.0, seed=5), random_actuation(60.0, seed=5)
        np.testing.assert_array_equal(a.p, b.p)
        assert not np.array_equal(a.p, random_actuation(60.0, seed=6).p)

    def test_covers_workspace(self):
        traj = random_actuation(1200.0, seed=0)
        assert traj.p.min() < 0.05 and traj.p.max() > 0.95

    @pytest.mark.parametrize("f1,f2", [(25.0, 4.0), (25.0, 0.0), (5.0, 25.0)])
    def test_invalid_rates(self, f1, f2):
        with pytest.raises(ValueError):
            random_actuation(10.0, f1=f1, f2=f2)


class TestPose:
    def test_rest(self):
        np.testing.assert_array_equal(quasistatic_pose(0.0, 0.0), [0.0, 0.0, 0.0])

    @given(unit)
    def test_pure_flexion(self, q):
        assert quasistatic_pose(q, q)[0] == 0.0

    @given(unit, unit)
    @settings(max_examples=300)
    def test_swap_symmetry_exact(self, a, b):
        pa, pb = quasistatic_pose(a, b), quasistatic_pose(b, a)
        assert pa[0] == -pb[0]
        assert pa[1] == pb[1] and pa[2] == pb[2]

    def test_spans(self):
        grid = workspace_grid(QUIET, 9)
        spans = np.ptp(grid[:, 2:5], axis=0)
        np.testing.assert_allclose(spans, [145.0, 80.0, 50.0], rtol=1e-12)
        x = grid[:, 2].reshape(9, 9)
        np.testing.assert_array_equal(x, -x.T)

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            quasistatic_pose(1.2, 0.0)


class TestSensor:
    def test_equal_chambers_ratio_one(self):
        s1, s2 = sensor_response(PlantState(0.6, 0.6, 0, 0, 0.6, 0.6), QUIET)
        assert s1 == s2

    @given(unit, unit)
    def test_direction(self, a, b):
        s1, s2 = sensor_response(PlantState(a, b, 0, 0, a, b), QUIET)
        if a > b + 1e-9:
            assert s1 > s2
        elif a < b - 1e-9:
            assert s1 < s2

    @given(unit, unit, unit, unit)
    @settings(max_examples=300)
    def test_swap(self, a, b, ma, mb):
        s = sensor_response(PlantState(a, b, 0, 0, ma, mb), QUIET)
        t = sensor_response(PlantState(b, a, 0, 0, mb, ma), QUIET)
        assert s == (t[1], t[0])
        assert 0 < s[0] <= 1 and 0 < s[1] <= 1

    def test_amplitude_monotone_grid(self):
        for diff in np.linspace(-0.8, 0.8, 9):
            totals = np.linspace(abs(diff), 2 - abs(diff), 41)
            means = []
            for total in totals:
                q1, q2 = (total + diff) / 2, (total - diff) / 2
                s1, s2 = sensor_response(PlantState(q1, q2, 0, 0, q1, q2), QUIET)
                means.append((s1 + s2) / 2)
            assert np.all(np.diff(means) > 0)

    def test_noise_only_with_rng(self):
        cfg = PlantConfig()
        state = PlantState(0.3, 0.5, 0, 0, 0.3, 0.5)
        clean = sensor_response(state, cfg)
        noisy = sensor_response(state, cfg, np.random.default_rng(0))
        assert clean != noisy
        assert clean == sensor_response(state, cfg.noise_free(), np.random.default_rng(0))


class TestDynamics:
    def test_fixed_point(self):
        s = PlantState()
        for _ in range(200):  # 8 s, >50 tau
            s = step_dynamics(s, 0.7, 0.2, 0.04)
        assert abs(s.q1 - 0.7) < 1e-6 and abs(s.q2 - 0.2) < 1e-6

    def test_step_no_overshoot(self):
        s = PlantState()
        q = [0.0]
        for _ in range(100):
            s = step_dynamics(s, 1.0, 0.5, 0.04)
            q.append(s.q1)
        q = np.array(q)
        assert np.all(np.diff(q) >= 0) and q.max() <= 1.0

    def test_small_tau_tracks(self):
        cfg = PlantConfig(tau=1e-6)
        s = step_dynamics(PlantState(), 0.4, 0.9, 0.04, cfg)
        assert s.q1 == pytest.approx(0.4, abs=1e-12) and s.q2 == pytest.approx(0.9, abs=1e-12)

    def test_matches_simulate(self):
        traj = random_actuation(20.0, seed=3)
        ds = simulate(traj, QUIET)
        s = PlantState()
        for k in range(len(traj)):
            d1 = s.q1 + QUIET.memory_weight * (s.m1 - s.q1)
            d2 = s.q2 + QUIET.memory_weight * (s.m2 - s.q2)
            np.testing.assert_allclose(ds.positions[k], quasistatic_pose(d1, d2, QUIET), atol=1e-12)
            np.testing.assert_allclose(ds.values[k, 3:5], sensor_response(s, QUIET), atol=1e-12)
            s = step_dynamics(s, *traj.p[k], 0.04, QUIET)

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            step_dynamics(PlantState(), 0.1, 0.1, 0.0)


class TestSimulate:
    def test_rest(self):
        ds = simulate(PressureTrajectory.held(0.0, 0.0, 4.0), QUIET)
        assert not np.any(ds.positions)

    def test_deterministic(self):
        traj = random_actuation(30.0, seed=4)
        a, b = simulate(traj, PlantConfig(seed=9)), simulate(traj, PlantConfig(seed=9))
        np.testing.assert_array_equal(a.values, b.values)
        assert len(a) == len(traj)

    def test_swap_equivariance_exact(self):
        traj = random_actuation(60.0, seed=8)
        a, b = simulate(traj, QUIET), simulate(traj.swapped(), QUIET)
        np.testing.assert_array_equal(a.channel("x"), -b.channel("x"))
        np.testing.assert_array_equal(a.channel("y"), b.channel("y"))
        np.testing.assert_array_equal(a.channel("z"), b.channel("z"))
        np.testing.assert_array_equal(a.channel("s1"), b.channel("s2"))
        np.testing.assert_array_equal(a.channel("s2"), b.channel("s1"))
        np.testing.assert_array_equal(a.channel("s_avg"), b.channel("s_avg"))
        log_ratio = lambda ds: np.log2(ds.channel("s1")) - np.log2(ds.channel("s2"))  # noqa: E731
        np.testing.assert_array_equal(log_ratio(a), -log_ratio(b))

    def test_held_grid_workspace(self):
        # stepping from rest leaves the hysteresis memory behind, so spans land a little inside the settled surface
        levels = np.linspace(0, 1, 9)
        end = np.array([
            [simulate(PressureTrajectory.held(p1, p2, 10.0), QUIET).positions[-1] for p2 in levels] for p1 in levels
        ])
        np.testing.assert_array_equal(end[:, :, 0], -end[:, :, 0].T)
        np.testing.assert_array_equal(end[:, :, 1], end[:, :, 1].T)
        assert np.all(end[4, 4, :1] == 0.0)
        spans = np.ptp(end.reshape(-1, 3), axis=0)
        np.testing.assert_allclose(spans, [145.0, 80.0, 50.0], rtol=0.2)

    def test_sensors_follow_lagged_state(self):
        # a pressure step reaches the sensors only gradually
        traj = PressureTrajectory.held(1.0, 0.0, 2.0)
        ds = simulate(traj, QUIET)
        ratio = np.log2(ds.channel("s1") / ds.channel("s2"))
        assert ratio[0] == 0.0
        assert np.all(np.diff(ratio[:10]) > 0)

    def test_memory_hysteresis(self):
        # same held pressure approached from opposite sides leaves different poses
        up = np.concatenate([np.linspace(0, 0.5, 50), np.full(100, 0.5)])
        down = np.concatenate([np.linspace(1.0, 0.5, 50), np.full(100, 0.5)])
        down[0] = 1.0
        t = np.arange(150) / 25.0
        a = simulate(PressureTrajectory(t, np.column_stack([up, up]), np.zeros((0, 2)), 25.0), QUIET)
        b = simulate(PressureTrajectory(t, np.column_stack([down, down]), np.zeros((0, 2)), 25.0), QUIET)
        assert a.positions[-1, 1] - b.positions[-1, 1] > 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        PlantConfig(tau=0.0)
    with pytest.raises(ValueError):
        PlantConfig(sensor_noise=-1.0)
    with pytest.raises(ValueError):
        PlantConfig(memory_weight=1.5)
