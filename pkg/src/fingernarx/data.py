"""Time-series containers, normalization, splitting and delay embedding.

A dataset is stored column-wise as one float64 array with the fixed column
order ``t, p1, p2, s1, s2, x, y, z``. Positions are in millimetres, pressures
and sensor signals are dimensionless.

Delay-embedded inputs use the tap order

    r_i, r_{i-1}, r_{i-2}, u_i, u_{i-1}, u_{i-2}

(state block first, then exogenous block, newest first inside each block).
Saved models depend on this order.
"""

from __future__ import annotations

import enum
import io
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import DatasetError, DegenerateChannelError, DegenerateSignalError

COLUMNS = ("t", "p1", "p2", "s1", "s2", "x", "y", "z")
STATE_CHANNELS = ("x", "y", "z")
STATE_DIM = 3
DEFAULT_DELAYS = 3
_TIME_TOL = 1e-9


class SampleFrame(NamedTuple):
    t: float
    p1: float
    p2: float
    s1: float
    s2: float
    x: float
    y: float
    z: float


class SensorMode(str, enum.Enum):
    """Which sensor channels a model receives besides the pressures."""

    MA = "MA"  # no signal
    MB = "MB"  # averaged signal (s1 + s2) / 2
    MC = "MC"  # full signal

    @property
    def exo_channels(self) -> tuple[str, ...]:
        return _EXO_CHANNELS[self]

    @property
    def exo_dim(self) -> int:
        return len(_EXO_CHANNELS[self])


_EXO_CHANNELS = {
    SensorMode.MA: ("p1", "p2"),
    SensorMode.MB: ("s_avg", "p1", "p2"),
    SensorMode.MC: ("s1", "s2", "p1", "p2"),
}


def exo_select(frame: SampleFrame, mode: SensorMode | str) -> tuple[float, ...]:
    """Exogenous input vector of one frame for the given sensor mode."""
    mode = SensorMode(mode)
    if mode is SensorMode.MA:
        return (frame.p1, frame.p2)
    if mode is SensorMode.MB:
        return ((frame.s1 + frame.s2) / 2.0, frame.p1, frame.p2)
    return (frame.s1, frame.s2, frame.p1, frame.p2)


@dataclass(frozen=True)
class TimeSeriesDataset:
    """Uniformly sampled recording, shape ``(n_frames, 8)``."""

    values: np.ndarray
    sample_rate_hz: float = 25.0

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != len(COLUMNS):
            raise DatasetError(f"dataset must have shape (n, {len(COLUMNS)}), got {values.shape}")
        if len(values) == 0:
            raise DatasetError("dataset is empty")
        if not self.sample_rate_hz > 0:
            raise DatasetError("sample_rate_hz must be positive")
        if len(values) > 1:
            dt = np.diff(values[:, 0])
            if np.max(np.abs(dt - 1.0 / self.sample_rate_hz)) > _TIME_TOL:
                raise DatasetError(
                    f"time column is not uniform at {self.sample_rate_hz} Hz (tolerance {_TIME_TOL} s)"
                )
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @classmethod
    def from_columns(cls, sample_rate_hz: float = 25.0, **columns) -> "TimeSeriesDataset":
        missing = [c for c in COLUMNS if c not in columns]
        if missing:
            raise DatasetError(f"missing columns: {', '.join(missing)}")
        return cls(np.column_stack([np.asarray(columns[c], dtype=float) for c in COLUMNS]), sample_rate_hz)

    @classmethod
    def from_frames(cls, frames: Sequence[SampleFrame], sample_rate_hz: float = 25.0) -> "TimeSeriesDataset":
        return cls(np.array([tuple(f) for f in frames], dtype=float).reshape(-1, len(COLUMNS)), sample_rate_hz)

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self) -> Iterator[SampleFrame]:
        for row in self.values:
            yield SampleFrame(*map(float, row))

    def frame(self, i: int) -> SampleFrame:
        return SampleFrame(*map(float, self.values[i]))

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def channel(self, name: str) -> np.ndarray:
        """One column by name; ``s_avg`` is the derived mean sensor signal."""
        if name == "s_avg":
            return (self.channel("s1") + self.channel("s2")) / 2.0
        try:
            return self.values[:, COLUMNS.index(name)]
        except ValueError:
            raise KeyError(f"unknown channel {name!r}") from None

    def channels(self, names: Sequence[str]) -> np.ndarray:
        return np.column_stack([self.channel(n) for n in names])

    @property
    def positions(self) -> np.ndarray:
        return self.values[:, 5:8]

    def exo(self, mode: SensorMode | str) -> np.ndarray:
        return self.channels(SensorMode(mode).exo_channels)

    def slice(self, start: int, stop: int | None = None) -> "TimeSeriesDataset":
        return TimeSeriesDataset(self.values[start:stop], self.sample_rate_hz)

    def with_channel(self, name: str, data: np.ndarray) -> "TimeSeriesDataset":
        values = self.values.copy()
        values[:, COLUMNS.index(name)] = data
        return TimeSeriesDataset(values, self.sample_rate_hz)


@dataclass(frozen=True)
class Normalizer:
    """Per-channel affine map of ``[min, max]`` onto ``[0, 1]``."""

    channels: tuple[str, ...]
    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.minimum, dtype=float).reshape(-1)
        hi = np.asarray(self.maximum, dtype=float).reshape(-1)
        if not (len(lo) == len(hi) == len(self.channels)):
            raise ValueError("channels, minimum and maximum must have equal lengths")
        for name, a, b in zip(self.channels, lo, hi):
            if not b > a:
                raise DegenerateChannelError(name)
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "minimum", lo)
        object.__setattr__(self, "maximum", hi)

    @classmethod
    def fit(cls, data: np.ndarray, channels: Sequence[str]) -> "Normalizer":
        data = np.asarray(data, dtype=float).reshape(len(data), -1)
        if len(data) == 0:
            raise DatasetError("cannot fit a normalizer on empty data")
        return cls(tuple(channels), data.min(axis=0), data.max(axis=0))

    @property
    def span(self) -> np.ndarray:
        return self.maximum - self.minimum

    def forward(self, v: np.ndarray) -> np.ndarray:
        return (np.asarray(v, dtype=float) - self.minimum) / self.span

    def inverse(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) * self.span + self.minimum

    def to_dict(self) -> dict:
        return {
            "channels": list(self.channels),
            "min": [float(v) for v in self.minimum],
            "max": [float(v) for v in self.maximum],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(tuple(d["channels"]), np.array(d["min"], dtype=float), np.array(d["max"], dtype=float))


def fit_normalizer(ds: TimeSeriesDataset, channels: Sequence[str]) -> Normalizer:
    return Normalizer.fit(ds.channels(channels), channels)


def rescale_paired_signal(s1: Sequence[float], s2: Sequence[float]) -> np.ndarray:
    """Affinely map ``s1`` so that its min and max coincide with those of ``s2``."""
    a = np.asarray(s1, dtype=float)
    b = np.asarray(s2, dtype=float)
    if a.size == 0 or b.size == 0:
        raise DegenerateSignalError("signals must be non-empty")
    lo, hi = a.min(), a.max()
    if not hi > lo:
        raise DegenerateSignalError("s1 is constant; the paired rescaling is undefined")
    out = b.min() + (a - lo) * ((b.max() - b.min()) / (hi - lo))
    # pin the extremes exactly; the affine expression can be off by an ulp
    out[a == lo] = b.min()
    out[a == hi] = b.max()
    return out


def split_sequential(
    ds: TimeSeriesDataset, train_fraction: float = 0.9
) -> tuple[TimeSeriesDataset, TimeSeriesDataset]:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(np.floor(len(ds) * train_fraction + 1e-9))
    if n_train == 0 or n_train == len(ds):
        raise DatasetError(f"split of {len(ds)} frames at {train_fraction} leaves an empty part")
    return ds.slice(0, n_train), ds.slice(n_train)


@dataclass(frozen=True)
class DelayPairs:
    """Stacked supervised pairs: ``inputs[k] -> targets[k]``."""

    inputs: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.inputs)

    def __getitem__(self, k):
        return self.inputs[k], self.targets[k]


def delay_embed(states: np.ndarray, exo: np.ndarray, delays: int = DEFAULT_DELAYS) -> np.ndarray:
    """Tap vectors for every index ``i`` in ``[delays-1, n-1]``, shape ``(n-delays+1, d)``."""
    n = len(states)
    blocks = [states[delays - 1 - k : n - k] for k in range(delays)]
    blocks += [exo[delays - 1 - k : n - k] for k in range(delays)]
    return np.hstack(blocks)


def assemble_delay_pairs(
    ds: TimeSeriesDataset,
    exo_mode: SensorMode | str,
    delays: int = DEFAULT_DELAYS,
    state_norm: Normalizer | None = None,
    exo_norm: Normalizer | None = None,
) -> DelayPairs:
    """Delay-embedded ``(input, next state)`` pairs; ``len(ds) - delays`` of them.

    When normalizers are given, inputs and targets are in normalized units.
    """
    if delays < 1:
        raise ValueError("delays must be >= 1")
    if len(ds) < delays + 1:
        raise DatasetError(f"dataset of {len(ds)} frames is too short for {delays} taps")
    states = ds.positions
    exo = ds.exo(exo_mode)
    if state_norm is not None:
        states = state_norm.forward(states)
    if exo_norm is not None:
        exo = exo_norm.forward(exo)
    taps = delay_embed(states[:-1], exo[:-1], delays)
    return DelayPairs(taps, np.array(states[delays:]))


def _format_float(v: float) -> str:
    return repr(float(v))


def write_dataset_csv(ds: TimeSeriesDataset, path: str | os.PathLike) -> None:
    buf = io.StringIO()
    buf.write(",".join(COLUMNS) + "\n")
    for row in ds.values:
        buf.write(",".join(_format_float(v) for v in row) + "\n")
    atomic_write_text(path, buf.getvalue())


def read_dataset_csv(path: str | os.PathLike, sample_rate_hz: float | None = None) -> TimeSeriesDataset:
    """Read a dataset CSV; the sample rate is inferred from ``t`` unless given."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty file")
    header = tuple(h.strip() for h in lines[0].split(","))
    if header != COLUMNS:
        raise DatasetError(f"{path}: header must be {','.join(COLUMNS)}, got {lines[0]!r}")
    try:
        values = np.loadtxt(io.StringIO(text), delimiter=",", skiprows=1, ndmin=2, dtype=float)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None
    if sample_rate_hz is None:
        if len(values) < 2:
            raise DatasetError(f"{path}: cannot infer sample rate from fewer than 2 rows")
        sample_rate_hz = float(np.round(1.0 / np.mean(np.diff(values[:, 0])), 9))
    return TimeSeriesDataset(values, sample_rate_hz)


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temporary sibling and rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp-{os.getpid()}")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    finally:
        if tmp.exists():
            tmp.unlink()
