import numpy as np
import pytest

from fingernarx.data import SensorMode, split_sequential
from fingernarx.errors import DatasetError, ShapeError
from fingernarx.evaluation import (
    HorizonCurve,
    horizon_curve,
    mean_error,
    measure_speedup,
    model_seed,
    mse_curve,
    plateau_deviation,
    run_ablation,
    stability_ratio,
)
from fingernarx.narx import NarxConfig, predict_dataset, train_open_loop
from fingernarx.plant import PlantConfig, random_actuation, simulate


class TestMetrics:
    def test_three_four_five(self):
        truth = np.random.default_rng(0).normal(size=(10, 3))
        me = mean_error(truth + [3.0, 4.0, 0.0], truth)
        assert me.x == pytest.approx(3.0) and me.y == pytest.approx(4.0) and me.z == pytest.approx(0.0)
        assert me.r == pytest.approx(5.0)

    def test_constant_offset(self):
        truth = np.zeros((7, 3))
        me = mean_error(truth - [0.0, 0.0, 2.5], truth)
        assert me == (0.0, 0.0, 2.5, 2.5)

    def test_zero_error(self):
        truth = np.arange(12.0).reshape(4, 3)
        assert mean_error(truth, truth) == (0.0, 0.0, 0.0, 0.0)
        assert not mse_curve(truth, truth).any()

    def test_mse_curve(self):
        truth = np.zeros((3, 3))
        pred = np.array([[1.0, 2, 2], [0, 0, 1], [3, 4, 0]])
        np.testing.assert_array_equal(mse_curve(pred, truth), [9.0, 1.0, 25.0])

    def test_shape_errors(self):
        with pytest.raises(ShapeError):
            mean_error(np.zeros((4, 3)), np.zeros((5, 3)))
        with pytest.raises(ShapeError):
            mse_curve(np.zeros((4, 2)), np.zeros((4, 2)))
        with pytest.raises(ShapeError):
            mean_error(np.zeros((0, 3)), np.zeros((0, 3)))

    def test_stability_ratio(self):
        assert stability_ratio(np.full(100, 4.0)) == 1.0
        series = np.ones(100)
        series[90:] = 3.0
        assert stability_ratio(series) == pytest.approx(3.0)
        with pytest.raises(ValueError):
            stability_ratio(np.ones(9))

    def test_plateau_deviation(self):
        curve = HorizonCurve(
            np.array([0.04, 0.4, 1.0, 119.88]),
            np.zeros(4),
            np.array([0.1, 1.1, 0.9, 1.0]),
            np.ones(4, dtype=int),
        )
        assert plateau_deviation(curve) == pytest.approx(0.1)
        assert plateau_deviation(curve, start_s=0.0) == pytest.approx(0.9)


@pytest.fixture(scope="module")
def small_setup():
    ds = simulate(random_actuation(100.0, seed=2), PlantConfig(seed=2))
    train, test = split_sequential(ds, 0.7)
    cfg = NarxConfig(exo_dim=2, hidden=(8, 8), epochs=3, seed=1)
    model, _ = train_open_loop(train, cfg, "MA")
    return model, test


class TestHorizon:
    def test_one_step_matches_open_loop(self, small_setup):
        model, test = small_setup
        curve = horizon_curve(model, test, (0.04,), include_full=False)
        open_loop = predict_dataset(model, test, self_loop=False)
        r = test.positions
        starts = range(2, len(test) - 1, 25)
        errs = [np.linalg.norm(open_loop[s - 2] - r[s + 1]) for s in starts]
        assert curve.n_windows[0] == len(errs)
        assert curve.me_end_mm[0] == pytest.approx(np.mean(errs), rel=1e-10)
        assert curve.me_avg_mm[0] == pytest.approx(curve.me_end_mm[0], rel=1e-12)

    def test_full_horizon_is_self_loop(self, small_setup):
        model, test = small_setup
        curve = horizon_curve(model, test, (0.04, 1.0))
        assert curve.horizon_s[-1] == pytest.approx((len(test) - 3) / 25.0)
        assert curve.n_windows[-1] == 1
        self_loop = predict_dataset(model, test)
        assert curve.me_avg_mm[-1] == pytest.approx(mean_error(self_loop, test.positions[3:]).r, rel=1e-10)
        assert np.all(np.diff(curve.n_windows) <= 0)

    def test_horizon_validation(self, small_setup):
        model, test = small_setup
        with pytest.raises(ValueError):
            horizon_curve(model, test, (0.01,))
        with pytest.raises(ValueError):
            horizon_curve(model, test, (1000.0,))
        with pytest.raises(DatasetError):
            horizon_curve(model, test.slice(0, 3), (0.04,))

    def test_csv(self, small_setup):
        model, test = small_setup
        text = horizon_curve(model, test, (0.04, 0.4)).to_csv()
        lines = text.strip().split("\n")
        assert lines[0] == "horizon_s,me_end_mm,me_avg_mm"
        assert len(lines) == 4


def test_speedup_positive(small_setup):
    model, test = small_setup
    res = measure_speedup(model, test, runs=2)
    assert res.runs == 5
    assert res.speedup > 0 and res.simulated_s == pytest.approx((len(test) - 3) / 25.0)


def test_model_seeds_distinct():
    seeds = {model_seed(0, m) for m in SensorMode}
    assert len(seeds) == 3
    assert model_seed(0, SensorMode.MA) == model_seed(0, SensorMode.MA)
    assert model_seed(1, SensorMode.MA) != model_seed(0, SensorMode.MA)


@pytest.fixture(scope="module")
def report():
    ds = simulate(random_actuation(60.0, seed=3), PlantConfig(seed=3))
    train, test = split_sequential(ds, 0.75)
    configs = {m: NarxConfig.for_mode(m, hidden=(6, 6), epochs=2) for m in SensorMode}
    return run_ablation(train, test, configs, seed=4, horizons_s=(0.04, 0.4)), (train, test, configs)


class TestAblation:
    def test_reference_decrease_zero(self, report):
        rep, _ = report
        assert rep.relative_decrease(SensorMode.MA, "self") == {"x": 0.0, "y": 0.0, "z": 0.0, "r": 0.0}

    def test_decrease_formula(self, report):
        rep, _ = report
        ma, mc = rep.results[SensorMode.MA].me_self.r, rep.results[SensorMode.MC].me_self.r
        assert rep.relative_decrease(SensorMode.MC, "self")["r"] == pytest.approx(100 * (1 - mc / ma))

    def test_contents(self, report):
        rep, _ = report
        doc = rep.to_dict()
        assert set(doc["models"]) == {"MA", "MB", "MC"}
        assert [doc["models"][m]["net_inputs"] for m in ("MA", "MB", "MC")] == [15, 18, 21]
        assert doc["models"]["MB"]["sensor_channels"] == ["s_avg", "p1", "p2"]
        assert rep.truth.shape == (len(rep.t), 3)
        text = rep.to_text()
        assert "self-loop ME_r MA -> MC" in text

    def test_deterministic(self, report):
        rep, (train, test, configs) = report
        again = run_ablation(train, test, configs, seed=4, horizons_s=(0.04, 0.4))
        assert again.to_json() == rep.to_json()
        assert again.paths_csv() == rep.paths_csv()

    def test_csv_exports(self, report):
        rep, _ = report
        bars = rep.bars_csv().strip().split("\n")
        assert len(bars) == 7
        paths = rep.paths_csv().strip().split("\n")
        assert paths[0].split(",")[:4] == ["t_s", "x", "y", "z"] and len(paths) == len(rep.t) + 1
        assert rep.mse_csv(SensorMode.MB).startswith("t_s,mse_mm2\n")

    def test_requires_reference(self, report):
        _, (train, test, configs) = report
        with pytest.raises(ValueError):
            run_ablation(train, test, {SensorMode.MC: configs[SensorMode.MC]})
