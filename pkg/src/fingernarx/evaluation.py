"""Error metrics, the three-model sensor ablation, horizon curves and timing."""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .data import SensorMode, TimeSeriesDataset, exo_select
from .errors import DatasetError, ShapeError
from .narx import NarxConfig, NarxModel, predict_dataset, rollout_self_loop, train_open_loop

__all__ = [
    "exo_select",
    "MeanError",
    "mean_error",
    "mse_curve",
    "stability_ratio",
    "HorizonCurve",
    "horizon_curve",
    "plateau_deviation",
    "measure_speedup",
    "AblationReport",
    "run_ablation",
]

DEFAULT_HORIZONS_S = (
    0.04, 0.08, 0.12, 0.16, 0.2, 0.24, 0.28, 0.32, 0.36, 0.4,
    0.6, 0.8, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0, 60.0, 90.0,
)
PLATEAU_START_S = 0.4
PLATEAU_TOLERANCE = 0.25


class MeanError(NamedTuple):
    """Mean absolute error per coordinate and mean Euclidean error, mm."""

    x: float
    y: float
    z: float
    r: float

    def as_dict(self) -> dict:
        return {"me_x_mm": self.x, "me_y_mm": self.y, "me_z_mm": self.z, "me_r_mm": self.r}


def _pair(pred, truth) -> tuple[np.ndarray, np.ndarray]:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != 3:
        raise ShapeError(f"trajectories must have equal shapes (n, 3); got {pred.shape} and {truth.shape}")
    if len(pred) == 0:
        raise ShapeError("trajectories are empty")
    return pred, truth


def mean_error(pred, truth) -> MeanError:
    pred, truth = _pair(pred, truth)
    delta = pred - truth
    mx, my, mz = np.mean(np.abs(delta), axis=0)
    return MeanError(float(mx), float(my), float(mz), float(np.mean(np.linalg.norm(delta, axis=1))))


def mse_curve(pred, truth) -> np.ndarray:
    """Per-step squared Euclidean error, mm^2."""
    pred, truth = _pair(pred, truth)
    delta = pred - truth
    return np.sum(delta * delta, axis=1)


def stability_ratio(mse: np.ndarray) -> float:
    """Mean of the last 10 % of an error series over the mean of the middle 80 %."""
    mse = np.asarray(mse, dtype=float)
    n = len(mse)
    tenth = n // 10
    if tenth == 0:
        raise ValueError("series too short to split into 10 % blocks")
    middle = mse[tenth : n - tenth]
    return float(np.mean(mse[n - tenth :]) / np.mean(middle))


@dataclass(frozen=True)
class HorizonCurve:
    horizon_s: np.ndarray
    me_end_mm: np.ndarray  # error at the last step of each window, averaged over windows
    me_avg_mm: np.ndarray  # error averaged within each window, then over windows
    n_windows: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("horizon_s,me_end_mm,me_avg_mm\n")
        for h, e, a in zip(self.horizon_s, self.me_end_mm, self.me_avg_mm):
            buf.write(f"{float(h)!r},{float(e)!r},{float(a)!r}\n")
        return buf.getvalue()


def horizon_curve(
    model: NarxModel,
    test: TimeSeriesDataset,
    horizons_s: Sequence[float] = DEFAULT_HORIZONS_S,
    *,
    stride_s: float = 1.0,
    include_full: bool = True,
) -> HorizonCurve:
    """Self-loop error against prediction horizon.

    Windows start every ``stride_s`` seconds from true initial states; for a
    horizon of ``H`` steps every window with ``H`` predictable frames counts.
    With ``include_full`` the longest possible horizon (whole test set after
    the warm-up taps) is appended.
    """
    fs = test.sample_rate_hz
    d = model.config.delays
    max_steps = len(test) - d
    if max_steps < 1:
        raise DatasetError("test set too short for a single prediction")
    steps = [int(round(h * fs)) for h in horizons_s]
    for h, H in zip(horizons_s, steps):
        if H < 1:
            raise ValueError(f"horizon {h} s is shorter than one sample")
        if H > max_steps:
            raise ValueError(f"horizon {h} s ({H} steps) exceeds the {max_steps} predictable steps")
    if include_full and max_steps not in steps:
        steps.append(max_steps)
    steps = sorted(set(steps))
    stride = max(1, int(round(stride_s * fs)))
    r = test.positions
    u = test.exo(model.mode)
    # newest state index of each window; a window predicts frames start+1 .. start+H
    starts = range(d - 1, len(test) - 1, stride)
    end_sum = np.zeros(len(steps))
    avg_sum = np.zeros(len(steps))
    count = np.zeros(len(steps), dtype=int)
    longest = steps[-1]
    for s in starts:
        length = min(longest, len(test) - 1 - s)
        if length < steps[0]:
            break
        pred = rollout_self_loop(model, r[s - d + 1 : s + 1], u[s - d + 1 : s], u[s : s + length])
        err = np.linalg.norm(pred - r[s + 1 : s + 1 + length], axis=1)
        cum = np.cumsum(err)
        for k, H in enumerate(steps):
            if H <= length:
                end_sum[k] += err[H - 1]
                avg_sum[k] += cum[H - 1] / H
                count[k] += 1
    return HorizonCurve(
        np.array(steps) / fs, end_sum / count, avg_sum / count, count
    )


def plateau_deviation(curve: HorizonCurve, start_s: float = PLATEAU_START_S) -> float:
    """Largest relative deviation of the window-averaged error beyond ``start_s`` from the longest horizon."""
    ref = curve.me_avg_mm[-1]
    sel = curve.horizon_s >= start_s - 1e-9
    return float(np.max(np.abs(curve.me_avg_mm[sel] - ref) / ref))


@dataclass(frozen=True)
class SpeedupResult:
    speedup: float
    simulated_s: float
    wall_s: float
    runs: int


def measure_speedup(model: NarxModel, test: TimeSeriesDataset, runs: int = 5) -> SpeedupResult:
    """Simulated duration of a full self-loop rollout over its median wall time."""
    if test.duration_s < 10.0:
        raise DatasetError("speedup needs at least 10 s of test data")
    runs = max(5, runs)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        predict_dataset(model, test, self_loop=True)
        times.append(time.perf_counter() - t0)
    wall = float(np.median(times))
    simulated = (len(test) - model.config.delays) / test.sample_rate_hz
    return SpeedupResult(simulated / wall, simulated, wall, runs)


@dataclass
class ModeResult:
    mode: SensorMode
    model: NarxModel
    history: list[float]
    open_loop: np.ndarray
    self_loop: np.ndarray
    me_open: MeanError
    me_self: MeanError
    horizon: HorizonCurve | None = None


@dataclass
class AblationReport:
    results: dict[SensorMode, ModeResult]
    truth: np.ndarray
    t: np.ndarray
    train_seconds: float
    test_seconds: float
    seed: int
    speedups: dict[SensorMode, SpeedupResult] = field(default_factory=dict)

    def relative_decrease(self, mode: SensorMode, loop: str) -> dict[str, float]:
        """Percent decrease of each ME component relative to M_A."""
        ref = getattr(self.results[SensorMode.MA], f"me_{loop}")
        cur = getattr(self.results[mode], f"me_{loop}")
        return {k: 100.0 * (1.0 - c / b) for k, c, b in zip(("x", "y", "z", "r"), cur, ref)}

    def to_dict(self) -> dict:
        modes = {}
        for mode, res in self.results.items():
            entry = {
                "sensor_channels": list(mode.exo_channels),
                "net_inputs": res.model.config.input_size,
                "hidden": list(res.model.config.hidden),
                "final_train_mse": res.history[-1] if res.history else None,
                "open_loop": res.me_open.as_dict(),
                "self_loop": res.me_self.as_dict(),
                "relative_decrease_pct": {
                    "open_loop": self.relative_decrease(mode, "open"),
                    "self_loop": self.relative_decrease(mode, "self"),
                },
                "self_loop_stability_ratio": stability_ratio(mse_curve(res.self_loop, self.truth)),
            }
            if res.horizon is not None:
                entry["horizon"] = {
                    "horizon_s": res.horizon.horizon_s.tolist(),
                    "me_end_mm": res.horizon.me_end_mm.tolist(),
                    "me_avg_mm": res.horizon.me_avg_mm.tolist(),
                    "plateau_deviation": plateau_deviation(res.horizon),
                }
            modes[mode.value] = entry
        return {
            "seed": self.seed,
            "train_seconds": self.train_seconds,
            "test_seconds": self.test_seconds,
            "scored_steps": int(len(self.truth)),
            "models": modes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"Sensor ablation (seed {self.seed}; {self.train_seconds:g} s train, {self.test_seconds:g} s test)",
            "",
            f"{'model':<6}{'inputs':>7}{'hidden':>9}  {'loop':<5}{'ME_x':>8}{'ME_y':>8}{'ME_z':>8}{'ME_r':>8}{'dME_r %':>9}",
        ]
        for mode, res in self.results.items():
            hidden = "x".join(str(h) for h in res.model.config.hidden)
            for loop in ("open", "self"):
                me = getattr(res, f"me_{loop}")
                dec = self.relative_decrease(mode, loop)["r"]
                lines.append(
                    f"{mode.value:<6}{res.model.config.input_size:>7}{hidden:>9}  {loop:<5}"
                    f"{me.x:8.2f}{me.y:8.2f}{me.z:8.2f}{me.r:8.2f}{-dec:+9.1f}"
                )
        ma = self.results[SensorMode.MA].me_self.r
        for mode in (SensorMode.MB, SensorMode.MC):
            if mode in self.results:
                mc = self.results[mode].me_self.r
                lines.append(
                    f"self-loop ME_r {SensorMode.MA.value} -> {mode.value}: {ma:.2f} mm -> {mc:.2f} mm "
                    f"({-self.relative_decrease(mode, 'self')['r']:+.0f} %)"
                )
        return "\n".join(lines) + "\n"

    def bars_csv(self) -> str:
        rows = ["model,loop,me_x_mm,me_y_mm,me_z_mm,me_r_mm,decrease_r_pct"]
        for mode, res in self.results.items():
            for loop in ("open", "self"):
                me = getattr(res, f"me_{loop}")
                dec = self.relative_decrease(mode, loop)["r"]
                rows.append(",".join([mode.value, loop, *(repr(float(v)) for v in me), repr(float(dec))]))
        return "\n".join(rows) + "\n"

    def paths_csv(self) -> str:
        header = ["t_s", "x", "y", "z"]
        cols = [self.t, *self.truth.T]
        for mode, res in self.results.items():
            header += [f"{mode.value}_{c}" for c in "xyz"]
            cols += list(res.self_loop.T)
        rows = [",".join(header)]
        rows += [",".join(repr(float(v)) for v in row) for row in np.column_stack(cols)]
        return "\n".join(rows) + "\n"

    def mse_csv(self, mode: SensorMode) -> str:
        mse = mse_curve(self.results[mode].self_loop, self.truth)
        rows = ["t_s,mse_mm2"] + [f"{float(t)!r},{float(v)!r}" for t, v in zip(self.t, mse)]
        return "\n".join(rows) + "\n"

    def timing_dict(self) -> dict:
        return {
            m.value: {"speedup": s.speedup, "simulated_s": s.simulated_s, "median_wall_s": s.wall_s, "runs": s.runs}
            for m, s in self.speedups.items()
        }


def model_seed(seed: int, mode: SensorMode) -> int:
    """Distinct, reproducible initialization seed per sensor mode."""
    index = list(SensorMode).index(mode)
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def evaluate_model(model: NarxModel, test: TimeSeriesDataset) -> tuple[np.ndarray, np.ndarray]:
    """Open-loop and self-loop predictions for frames ``delays ..`` of ``test``."""
    return predict_dataset(model, test, self_loop=False), predict_dataset(model, test, self_loop=True)


def run_ablation(
    train: TimeSeriesDataset,
    test: TimeSeriesDataset,
    configs: Mapping[SensorMode, NarxConfig] | None = None,
    seed: int = 0,
    *,
    horizons_s: Sequence[float] | None = DEFAULT_HORIZONS_S,
    horizon_stride_s: float = 1.0,
    speedup_runs: int = 0,
) -> AblationReport:
    """Train one estimator per sensor mode and score them on ``test``.

    ``configs`` defaults to the per-mode hidden sizes with default training
    settings. Initialization seeds are derived per mode from ``seed``.
    """
    if configs is None:
        configs = {mode: NarxConfig.for_mode(mode) for mode in SensorMode}
    configs = {SensorMode(m): c for m, c in configs.items()}
    if SensorMode.MA not in configs:
        raise ValueError("the ablation needs the pressure-only model MA as its reference")
    delays = {c.delays for c in configs.values()}
    if len(delays) != 1:
        raise ValueError("all models must use the same number of taps")
    d = delays.pop()
    truth = test.positions[d:]
    results = {}
    speedups = {}
    for mode in SensorMode:
        if mode not in configs:
            continue
        cfg = replace(configs[mode], seed=model_seed(seed, mode))
        model, history = train_open_loop(train, cfg, mode)
        open_pred, self_pred = evaluate_model(model, test)
        res = ModeResult(
            mode, model, history, open_pred, self_pred, mean_error(open_pred, truth), mean_error(self_pred, truth)
        )
        if horizons_s is not None:
            res.horizon = horizon_curve(model, test, horizons_s, stride_s=horizon_stride_s)
        results[mode] = res
        if speedup_runs:
            speedups[mode] = measure_speedup(model, test, speedup_runs)
    return AblationReport(
        results,
        truth,
        test.values[d:, 0],
        train.duration_s,
        test.duration_s,
        seed,
        speedups,
    )
