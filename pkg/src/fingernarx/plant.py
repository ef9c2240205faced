"""Synthetic two-chamber finger used in place of the hardware.

The surrogate is built from symmetry rules rather than physics:

* chamber states ``q`` follow the commanded pressures ``p`` through a
  critically damped second-order lag, and each chamber carries a Duhem-type
  hysteresis memory that only moves while ``q`` moves;
* the tip pose is a smooth function of ``q`` that is odd in ``q1 - q2`` for
  ``x`` and even for ``y``/``z``;
* the two waveguide channels share a mean that grows with bending amplitude
  and have a log2 ratio that is odd in the chamber difference.

Swapping the chamber inputs therefore negates ``x``, keeps ``y``/``z`` and
swaps ``s1``/``s2``, bit for bit when noise is off.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import NamedTuple

import numpy as np

from . import _backend
from .data import TimeSeriesDataset

_HALF_LN2 = 0.5 * math.log(2.0)


@dataclass(frozen=True)
class PlantConfig:
    x_max: float = 72.5
    y_max: float = 80.0
    z_max: float = 50.0
    tau: float = 0.15
    hysteresis_gain: float = 0.1
    hysteresis_width: float = 0.2
    sensor_noise: float = 0.005
    position_noise: float = 0.3
    seed: int = 0
    kappa: float = 0.5
    beta: float = 0.3
    saturation: float = 1.5
    sensor_base: float = 0.2
    amplitude_gain: float = 0.25
    direction_gain: float = 2.0
    memory_weight: float = 0.3

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not self.hysteresis_width > 0:
            raise ValueError("hysteresis_width must be positive")
        if self.sensor_noise < 0 or self.position_noise < 0:
            raise ValueError("noise levels must be non-negative")
        if min(self.x_max, self.y_max, self.z_max) <= 0:
            raise ValueError("workspace ranges must be positive")
        if not 0.0 <= self.memory_weight <= 1.0:
            raise ValueError("memory_weight must lie in [0, 1]")
        if self.sensor_base <= 0 or self.sensor_base + self.amplitude_gain > 0.5:
            raise ValueError("sensor_base + amplitude_gain must lie in (0, 0.5] to keep channels in (0, 1]")

    def noise_free(self) -> "PlantConfig":
        return replace(self, sensor_noise=0.0, position_noise=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


class PlantState(NamedTuple):
    q1: float = 0.0
    q2: float = 0.0
    v1: float = 0.0
    v2: float = 0.0
    m1: float = 0.0
    m2: float = 0.0


@dataclass(frozen=True)
class PressureTrajectory:
    t: np.ndarray
    p: np.ndarray  # (n, 2)
    speeds: np.ndarray  # (n_segments, 2), per-segment chamber speeds in 1/s
    sample_rate_hz: float

    def __len__(self) -> int:
        return len(self.p)

    def swapped(self) -> "PressureTrajectory":
        return PressureTrajectory(self.t, self.p[:, ::-1].copy(), self.speeds[:, ::-1].copy(), self.sample_rate_hz)

    @classmethod
    def held(cls, p1: float, p2: float, duration: float, sample_rate_hz: float = 25.0) -> "PressureTrajectory":
        n = int(round(duration * sample_rate_hz))
        p = np.tile([p1, p2], (n, 1)).astype(float)
        return cls(np.arange(n) / sample_rate_hz, p, np.zeros((0, 2)), sample_rate_hz)


def random_actuation(
    duration: float,
    f1: float = 25.0,
    f2: float = 5.0,
    speed_bound: float = 0.4,
    seed: int = 0,
) -> PressureTrajectory:
    """Piecewise-constant random chamber speeds, integrated and clamped to [0, 1]."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    if not (f1 > 0 and f2 > 0) or abs(f1 / f2 - round(f1 / f2)) > 1e-9 or f2 > f1:
        raise ValueError(f"sample rate {f1} Hz must be a positive multiple of step rate {f2} Hz")
    n = int(round(duration * f1))
    per_segment = int(round(f1 / f2))
    n_segments = -(-n // per_segment)
    rng = np.random.default_rng(seed)
    speeds = rng.uniform(-speed_bound, speed_bound, size=(n_segments, 2))
    dt = 1.0 / f1
    p = np.zeros((n, 2))
    cur = np.zeros(2)
    for k in range(n):
        p[k] = cur
        cur = np.clip(cur + speeds[k // per_segment] * dt, 0.0, 1.0)
    return PressureTrajectory(np.arange(n) / f1, p, speeds, f1)


def saturate(u, gain: float = 1.5):
    """Smooth monotone map with ``saturate(0) = 0`` and ``saturate(1) = 1``."""
    return np.tanh(gain * np.asarray(u, dtype=float)) / math.tanh(gain)


def quasistatic_pose(q1, q2, cfg: PlantConfig = PlantConfig()) -> np.ndarray:
    """Tip position in mm; broadcasts over array inputs, last axis is (x, y, z)."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    if np.any((q1 < 0) | (q1 > 1) | (q2 < 0) | (q2 > 1)):
        raise ValueError("chamber states must lie in [0, 1]")
    diff = q1 - q2
    total = q1 + q2
    flex = saturate(total / 2.0, cfg.saturation)
    x = (cfg.x_max * diff) * ((1.0 + cfg.kappa * total) / (1.0 + cfg.kappa))
    y = -cfg.y_max * flex
    z = -cfg.z_max * flex * (1.0 - cfg.beta * diff * diff)
    return np.stack([x, y, z], axis=-1)


def deformation(q, m, cfg: PlantConfig = PlantConfig()):
    """Effective chamber deformation: the lagged state pulled toward its memory."""
    q = np.asarray(q, dtype=float)
    return q + cfg.memory_weight * (np.asarray(m, dtype=float) - q)


def _sensor_pair(q1, q2, m1, m2, cfg: PlantConfig) -> tuple[np.ndarray, np.ndarray]:
    d1, d2 = deformation(q1, m1, cfg), deformation(q2, m2, cfg)
    diff = d1 - d2
    amplitude = (saturate((d1 + d2) / 2.0, cfg.saturation) + np.abs(diff)) / 2.0
    mean = cfg.sensor_base + cfg.amplitude_gain * amplitude
    log2_ratio = cfg.direction_gain * diff + cfg.hysteresis_gain * ((q1 - m1) - (q2 - m2))
    t = np.tanh(_HALF_LN2 * log2_ratio)
    return mean * (1.0 + t), mean * (1.0 - t)


def sensor_response(
    state: PlantState, cfg: PlantConfig = PlantConfig(), rng: np.random.Generator | None = None
) -> tuple[float, float]:
    """Waveguide channels ``(s1, s2)``; noise is added only when ``rng`` is given."""
    s1, s2 = _sensor_pair(state.q1, state.q2, state.m1, state.m2, cfg)
    s1, s2 = float(s1), float(s2)
    if rng is not None and cfg.sensor_noise > 0:
        n1, n2 = rng.normal(0.0, cfg.sensor_noise, 2)
        s1, s2 = _clip_signal(s1 + n1), _clip_signal(s2 + n2)
    return s1, s2


def _clip_signal(s):
    return np.clip(s, 1e-6, 1.0)


def step_dynamics(state: PlantState, p1: float, p2: float, dt: float, cfg: PlantConfig = PlantConfig()) -> PlantState:
    """Advance the chamber lag and hysteresis memory by ``dt`` with pressures held."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    omega = 1.0 / cfg.tau
    a = math.exp(-omega * dt) if omega * dt < 700.0 else 0.0
    new = []
    for q, v, m, p in ((state.q1, state.v1, state.m1, p1), (state.q2, state.v2, state.m2, p2)):
        e = q - p
        if a == 0.0:
            qn, vn = p, 0.0
        else:
            s = (v + omega * e) * dt
            qn = p + (e + s) * a
            vn = (v - omega * s) * a
        if qn < 0.0:
            qn, vn = 0.0, 0.0
        elif qn > 1.0:
            qn, vn = 1.0, 0.0
        mn = qn + (m - qn) * math.exp(-abs(qn - q) / cfg.hysteresis_width)
        new.append((qn, vn, mn))
    (q1, v1, m1), (q2, v2, m2) = new
    return PlantState(q1, q2, v1, v2, m1, m2)


def simulate(traj: PressureTrajectory, cfg: PlantConfig = PlantConfig()) -> TimeSeriesDataset:
    """Run the plant along ``traj``; one output frame per input sample."""
    p = np.ascontiguousarray(traj.p, dtype=float)
    dt = 1.0 / traj.sample_rate_hz
    q, _, m = _backend.integrate_plant(p, dt, cfg.tau, cfg.hysteresis_width)
    r = quasistatic_pose(deformation(q[:, 0], m[:, 0], cfg), deformation(q[:, 1], m[:, 1], cfg), cfg)
    s1, s2 = _sensor_pair(q[:, 0], q[:, 1], m[:, 0], m[:, 1], cfg)
    rng = np.random.default_rng(cfg.seed)
    if cfg.position_noise > 0:
        r = r + rng.normal(0.0, cfg.position_noise, r.shape)
    if cfg.sensor_noise > 0:
        s1 = _clip_signal(s1 + rng.normal(0.0, cfg.sensor_noise, len(s1)))
        s2 = _clip_signal(s2 + rng.normal(0.0, cfg.sensor_noise, len(s2)))
    values = np.column_stack([traj.t, p[:, 0], p[:, 1], s1, s2, r])
    return TimeSeriesDataset(values, traj.sample_rate_hz)


def workspace_grid(cfg: PlantConfig = PlantConfig(), n: int = 9) -> np.ndarray:
    """Settled pose and noise-free sensor values on an ``n x n`` pressure grid.

    Columns: p1, p2, x, y, z, s1, s2, s_avg, log2_ratio. Settled means the lag
    has converged and the hysteresis memory equals the state.
    """
    levels = np.linspace(0.0, 1.0, n)
    p1, p2 = (g.ravel() for g in np.meshgrid(levels, levels, indexing="ij"))
    r = quasistatic_pose(p1, p2, cfg)
    s1, s2 = _sensor_pair(p1, p2, p1, p2, cfg)
    return np.column_stack([p1, p2, r, s1, s2, (s1 + s2) / 2.0, np.log2(s1 / s2)])
