"""Pixel-to-world projection for the tracked pin markers.

The camera model is two decoupled linear equations in the pixel radius
``r_px = hypot(x_px, y_px)`` and the apparent marker size
``h_px = sqrt(area_px)``::

    r_mm = c0*r_px + c1*r_px*h_px
    z_mm = c2*r_px + c3*h_px + c4*h_px**2 + c5

``x_mm`` and ``y_mm`` are recovered by scaling the pixel bearing by
``r_mm / r_px``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import astuple, dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .data import atomic_write_text
from .errors import SingularCalibrationError

MESH_DEPTHS_MM = (55.0, 105.0, 155.0)
MESH_WIDTHS_MM = (100.0, 150.0, 250.0)
MESH_HEIGHTS_MM = (40.0, 80.0, 120.0)

CALIBRATION_COLUMNS = ("x_px", "y_px", "area_px", "x_mm", "y_mm", "z_mm")


@dataclass(frozen=True)
class ProjectionCoefficients:
    c0: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in astuple(self)):
            raise ValueError("projection coefficients must be finite")

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    def to_json(self) -> str:
        return json.dumps({f"c{i}": v for i, v in enumerate(astuple(self))}, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ProjectionCoefficients":
        d = json.loads(text)
        keys = {f"c{i}" for i in range(6)}
        if set(d) != keys:
            raise ValueError(f"coefficient file must have exactly the keys {sorted(keys)}")
        return cls(*(float(d[f"c{i}"]) for i in range(6)))


# values published for the original camera setup
REFERENCE_COEFFICIENTS = ProjectionCoefficients(
    c0=1.9e-1, c1=-1.99e-3, c2=-6.77e-3, c3=-5.31e-2, c4=7.13, c5=-2.87e2
)


class PixelObservation(NamedTuple):
    x_px: float
    y_px: float
    area_px: float

    @property
    def r_px(self) -> float:
        return math.hypot(self.x_px, self.y_px)

    @property
    def h_px(self) -> float:
        return math.sqrt(self.area_px)


class CalibrationPoint(NamedTuple):
    observation: PixelObservation
    world: tuple[float, float, float]


def pixel_to_world(obs: PixelObservation, c: ProjectionCoefficients) -> tuple[float, float, float]:
    if not obs.area_px > 0:
        raise ValueError(f"pixel area must be positive, got {obs.area_px}")
    r_px, h_px = obs.r_px, obs.h_px
    r_mm = c.c0 * r_px + c.c1 * r_px * h_px
    z_mm = c.c2 * r_px + c.c3 * h_px + c.c4 * h_px * h_px + c.c5
    if r_px > 0:
        scale = r_mm / r_px
        return (scale * obs.x_px, scale * obs.y_px, z_mm)
    return (0.0, 0.0, z_mm)


def pixels_to_world(x_px, y_px, area_px, c: ProjectionCoefficients) -> np.ndarray:
    """Vectorized :func:`pixel_to_world`; returns ``(n, 3)``."""
    x_px, y_px, area_px = (np.asarray(a, dtype=float) for a in (x_px, y_px, area_px))
    if np.any(area_px <= 0):
        raise ValueError("pixel areas must be positive")
    r_px = np.hypot(x_px, y_px)
    h_px = np.sqrt(area_px)
    r_mm = c.c0 * r_px + c.c1 * r_px * h_px
    z_mm = c.c2 * r_px + c.c3 * h_px + c.c4 * h_px * h_px + c.c5
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r_px > 0, r_mm / np.where(r_px > 0, r_px, 1.0), 0.0)
    return np.column_stack([scale * x_px, scale * y_px, z_mm])


def generate_calibration_mesh() -> np.ndarray:
    """The 27 calibration targets, ``(27, 3)`` mm, ordered by plane then row then column."""
    points = []
    for dz, dx, dy in zip(MESH_DEPTHS_MM, MESH_WIDTHS_MM, MESH_HEIGHTS_MM):
        for y in (-dy / 2, 0.0, dy / 2):
            for x in (-dx / 2, 0.0, dx / 2):
                points.append((x, y, dz))
    return np.array(points)


def _lstsq(design: np.ndarray, target: np.ndarray, what: str) -> np.ndarray:
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        raise SingularCalibrationError(
            f"{what} design matrix is rank {rank} < {design.shape[1]}; observations do not constrain the fit"
        )
    sol, *_ = np.linalg.lstsq(design, target, rcond=None)
    return sol


def fit_coefficients(points: Sequence[CalibrationPoint]) -> ProjectionCoefficients:
    """Least-squares fit of the radial and depth equations, solved independently."""
    if len(points) < 4:
        raise SingularCalibrationError(f"need at least 4 calibration points, got {len(points)}")
    obs = np.array([tuple(p.observation) for p in points], dtype=float)
    world = np.array([tuple(p.world) for p in points], dtype=float)
    if np.any(obs[:, 2] <= 0):
        raise ValueError("calibration pixel areas must be positive")
    r_px = np.hypot(obs[:, 0], obs[:, 1])
    h_px = np.sqrt(obs[:, 2])
    r_mm = np.hypot(world[:, 0], world[:, 1])
    c0, c1 = _lstsq(np.column_stack([r_px, r_px * h_px]), r_mm, "radial")
    ones = np.ones_like(r_px)
    c2, c3, c4, c5 = _lstsq(np.column_stack([r_px, h_px, h_px**2, ones]), world[:, 2], "depth")
    return ProjectionCoefficients(*(float(v) for v in (c0, c1, c2, c3, c4, c5)))


def synthesize_observations(
    world: np.ndarray, c: ProjectionCoefficients, bearing_px: np.ndarray | None = None
) -> list[CalibrationPoint]:
    """Pixel observations that map exactly onto ``world`` under ``c``.

    Inverts both equations: ``h_px`` from a quadratic in ``h`` after
    eliminating ``r_px``. Used to build noiseless calibration sets.
    """
    out = []
    for x_mm, y_mm, z_mm in np.asarray(world, dtype=float):
        r_mm = math.hypot(x_mm, y_mm)
        h = _solve_size(r_mm, z_mm, c)
        r_px = r_mm / (c.c0 + c.c1 * h) if r_mm > 0 else 0.0
        if r_mm > 0:
            x_px, y_px = r_px * x_mm / r_mm, r_px * y_mm / r_mm
        else:
            x_px = y_px = 0.0
        out.append(CalibrationPoint(PixelObservation(x_px, y_px, h * h), (x_mm, y_mm, z_mm)))
    return out


def _solve_size(r_mm: float, z_mm: float, c: ProjectionCoefficients) -> float:
    # z = c2*r_mm/(c0+c1 h) + c3 h + c4 h^2 + c5  ->  cubic in h after clearing the denominator
    poly = np.array([
        c.c4 * c.c1,
        c.c4 * c.c0 + c.c3 * c.c1,
        c.c3 * c.c0 + (c.c5 - z_mm) * c.c1,
        (c.c5 - z_mm) * c.c0 + c.c2 * r_mm,
    ])
    roots = np.roots(poly)
    real = sorted(
        float(rt.real) for rt in roots
        if abs(rt.imag) < 1e-9 and rt.real > 0 and abs(c.c0 + c.c1 * rt.real) > 1e-12
        and (r_mm == 0 or r_mm / (c.c0 + c.c1 * rt.real) > 0)
    )
    if not real:
        raise ValueError(f"no positive marker size reproduces r={r_mm} mm, z={z_mm} mm")
    h = real[0]
    # polish the root with Newton steps on the original equation
    for _ in range(3):
        d = c.c0 + c.c1 * h
        f = c.c2 * r_mm / d + c.c3 * h + c.c4 * h * h + c.c5 - z_mm
        df = -c.c2 * r_mm * c.c1 / d**2 + c.c3 + 2 * c.c4 * h
        h -= f / df
    return h


def read_calibration_csv(path: str | os.PathLike) -> list[CalibrationPoint]:
    lines = Path(path).read_text().splitlines()
    header = tuple(h.strip() for h in lines[0].split(",")) if lines else ()
    if header != CALIBRATION_COLUMNS:
        raise ValueError(f"{path}: header must be {','.join(CALIBRATION_COLUMNS)}")
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            v = [float(f) for f in line.split(",")]
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field") from None
        if len(v) != 6:
            raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(v)}")
        points.append(CalibrationPoint(PixelObservation(*v[:3]), tuple(v[3:])))
    return points


def write_calibration_csv(points: Sequence[CalibrationPoint], path: str | os.PathLike) -> None:
    rows = [",".join(CALIBRATION_COLUMNS)]
    for p in points:
        rows.append(",".join(repr(float(v)) for v in (*p.observation, *p.world)))
    atomic_write_text(path, "\n".join(rows) + "\n")


def read_coefficients(path: str | os.PathLike) -> ProjectionCoefficients:
    return ProjectionCoefficients.from_json(Path(path).read_text())


def write_coefficients(c: ProjectionCoefficients, path: str | os.PathLike) -> None:
    atomic_write_text(path, c.to_json())
