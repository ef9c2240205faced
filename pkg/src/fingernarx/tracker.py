"""Blue pin marker tracking.

Frames are ``(height, width, 3)`` uint8 RGB arrays. Pixel ``(row i, col j)``
has its centre at ``(x, y) = (j, i)``; the world projection works on
coordinates relative to the principal point, by default the image centre.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image as PILImage

from . import _backend
from .data import atomic_write_text
from .errors import DatasetError, TrackingLossError
from .projection import PixelObservation, ProjectionCoefficients, pixel_to_world

DEFAULT_THRESHOLD = 0.15
DEFAULT_MEDIAN_WINDOW = 3
MIN_BLOB_AREA = 4
FRAME_SUFFIXES = (".png", ".ppm")


@dataclass(frozen=True)
class Blob:
    centroid: tuple[float, float]
    area_px: int


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3 or img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError(f"image must have shape (height, width, 3), got {img.shape}")
    if img.dtype != np.uint8:
        raise ValueError(f"image must be uint8, got {img.dtype}")
    return img


def median_filter(channel: np.ndarray, window: int = DEFAULT_MEDIAN_WINDOW) -> np.ndarray:
    """Square median filter with edge replication."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"median window must be odd and >= 1, got {window}")
    channel = np.ascontiguousarray(channel, dtype=np.uint8)
    if window == 1:
        return channel.copy()
    return _backend.median_filter(channel, window)


def preprocess(
    img: np.ndarray, threshold: float = DEFAULT_THRESHOLD, median_window: int = DEFAULT_MEDIAN_WINDOW
) -> np.ndarray:
    """Blue channel -> median filter -> binary mask (strictly above ``threshold * 255``)."""
    img = _check_image(img)
    blue = median_filter(img[:, :, 2], median_window)
    return blue > threshold * 255.0


def find_blobs(mask: np.ndarray) -> list[Blob]:
    """8-connected components with area and centroid, in raster order of first pixel."""
    mask = np.ascontiguousarray(mask, dtype=np.uint8)
    labels, n = _backend.label_components(mask)
    if n == 0:
        return []
    flat = labels.ravel()
    areas = np.bincount(flat, minlength=n + 1)[1:]
    rows, cols = np.indices(labels.shape)
    sx = np.bincount(flat, weights=cols.ravel(), minlength=n + 1)[1:]
    sy = np.bincount(flat, weights=rows.ravel(), minlength=n + 1)[1:]
    return [Blob((float(sx[k] / areas[k]), float(sy[k] / areas[k])), int(areas[k])) for k in range(n)]


def combine_pins(blobs: Sequence[Blob], min_area: int = MIN_BLOB_AREA, frame: str = "<frame>") -> Blob:
    """Reduce the two largest qualifying blobs to one midpoint observation."""
    qualifying = [b for b in blobs if b.area_px >= min_area]
    if len(qualifying) < 2:
        raise TrackingLossError(frame, len(qualifying))
    # stable on ties so the result does not depend on label order
    a, b = sorted(qualifying, key=lambda bl: (-bl.area_px, bl.centroid))[:2]
    centroid = ((a.centroid[0] + b.centroid[0]) / 2.0, (a.centroid[1] + b.centroid[1]) / 2.0)
    return Blob(centroid, (a.area_px + b.area_px) / 2.0)


def observe_frame(
    img: np.ndarray,
    *,
    principal_point: tuple[float, float] | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    median_window: int = DEFAULT_MEDIAN_WINDOW,
    min_area: int = MIN_BLOB_AREA,
    frame: str = "<frame>",
) -> PixelObservation:
    img = _check_image(img)
    pin = combine_pins(find_blobs(preprocess(img, threshold, median_window)), min_area, frame)
    if principal_point is None:
        principal_point = ((img.shape[1] - 1) / 2.0, (img.shape[0] - 1) / 2.0)
    return PixelObservation(
        pin.centroid[0] - principal_point[0], pin.centroid[1] - principal_point[1], float(pin.area_px)
    )


def track_frame(img: np.ndarray, c: ProjectionCoefficients, **kwargs) -> tuple[float, float, float]:
    """End-effector position in mm from one camera frame."""
    return pixel_to_world(observe_frame(img, **kwargs), c)


def load_frame(path: str | os.PathLike) -> np.ndarray:
    with PILImage.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_frame(img: np.ndarray, path: str | os.PathLike) -> None:
    PILImage.fromarray(_check_image(img), mode="RGB").save(path)


def list_frames(directory: str | os.PathLike) -> list[Path]:
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in FRAME_SUFFIXES)


def track_directory(
    directory: str | os.PathLike, c: ProjectionCoefficients, **kwargs
) -> np.ndarray:
    """Positions ``(n_frames, 3)`` for every frame in ``directory``, ordered by filename."""
    frames = list_frames(directory)
    out = np.empty((len(frames), 3))
    for k, path in enumerate(frames):
        out[k] = track_frame(load_frame(path), c, frame=path.name, **kwargs)
    return out


def write_positions_csv(positions: np.ndarray, path: str | os.PathLike) -> None:
    rows = ["x,y,z"] + [",".join(repr(float(v)) for v in row) for row in positions]
    atomic_write_text(path, "\n".join(rows) + "\n")


def read_positions_csv(path: str | os.PathLike) -> np.ndarray:
    """Inverse of ``write_positions_csv``; returns ``(n, 3)`` in mm."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != "x,y,z":
        raise DatasetError(f"{path}: header must be x,y,z")
    try:
        return np.loadtxt(lines[1:], delimiter=",", ndmin=2, dtype=float).reshape(-1, 3)
    except ValueError as exc:
        raise DatasetError(f"{path}: {exc}") from None


def render_pins(
    shape: tuple[int, int],
    centres: Sequence[tuple[float, float]],
    radius: float,
    blue: int = 255,
    background: int = 0,
) -> np.ndarray:
    """Synthetic frame with filled blue disks: pixel (i, j) is on when inside a disk."""
    h, w = shape
    rows, cols = np.indices((h, w))
    img = np.zeros((h, w, 3), dtype=np.uint8)
    img[:, :, 2] = background
    for cx, cy in centres:
        inside = (cols - cx) ** 2 + (rows - cy) ** 2 <= radius**2
        img[inside, 2] = blue
    return img
