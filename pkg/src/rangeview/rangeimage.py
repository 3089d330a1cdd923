"""Range images: spherical projection of lidar returns and pixel unprojection.

A range image is a dense H x W grid over inclination (rows, uniform between
configured bounds) and azimuth (columns, spanning [-pi, pi)). Each valid pixel
stores the nearest return binned to it; invalid pixels carry -1 in the range
channel and are excluded by the validity mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi
SENTINEL_RANGE = -1.0
CORE_CHANNELS = ("range", "x", "y", "z", "intensity")


@dataclass(frozen=True)
class RangeImageSpec:
    """Grid geometry and channel layout of a range image."""

    height: int
    width: int
    inclination_min: float
    inclination_max: float
    channels: tuple[str, ...] = CORE_CHANNELS

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("range image must have height >= 1 and width >= 1")
        if not self.inclination_min < self.inclination_max:
            raise ValueError("inclination_min must be < inclination_max")
        object.__setattr__(self, "channels", tuple(self.channels))
        missing = {"range", "x", "y", "z"} - set(self.channels)
        if missing:
            raise ValueError(f"spec is missing required channels: {sorted(missing)}")
        if len(set(self.channels)) != len(self.channels):
            raise ValueError("duplicate channel names")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def inclination_span(self) -> float:
        return self.inclination_max - self.inclination_min


@dataclass(frozen=True)
class LidarPoint:
    """One lidar return in the ego frame."""

    x: float
    y: float
    z: float
    intensity: float = 0.0
    elongation: float = 0.0

    def __post_init__(self):
        vals = (self.x, self.y, self.z, self.intensity, self.elongation)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("lidar point fields must be finite")
        if self.intensity < 0.0 or self.elongation < 0.0:
            raise ValueError("intensity and elongation must be >= 0")


@dataclass(eq=False)
class RangeImage:
    """Projected sweep: per-channel H x W grids plus a validity mask.

    Arrays are frozen after construction; derive modified copies instead of
    mutating in place.
    """

    spec: RangeImageSpec
    channels: dict[str, np.ndarray]
    valid: np.ndarray
    dropped_points: int = 0

    def __post_init__(self):
        shape = self.spec.shape
        if set(self.channels) != set(self.spec.channels):
            raise ValueError("channel dict does not match spec channel list")
        for name, grid in self.channels.items():
            if grid.shape != shape:
                raise ValueError(f"channel {name!r} has shape {grid.shape}, want {shape}")
            grid.setflags(write=False)
        if self.valid.shape != shape or self.valid.dtype != np.bool_:
            raise ValueError("validity mask must be a boolean H x W grid")
        self.valid.setflags(write=False)

    def channel(self, name: str) -> np.ndarray:
        return self.channels[name]

    @property
    def range(self) -> np.ndarray:
        return self.channels["range"]

    def xyz(self) -> np.ndarray:
        """Per-pixel cartesian coordinates, shape (H, W, 3)."""
        return np.stack([self.channels["x"], self.channels["y"], self.channels["z"]], axis=2)

    def num_valid(self) -> int:
        return int(self.valid.sum())

    def with_channels(self, extra: dict[str, np.ndarray]) -> "RangeImage":
        """Copy of this image with additional channels appended."""
        for name in extra:
            if name in self.channels:
                raise ValueError(f"channel {name!r} already present")
        spec = RangeImageSpec(
            self.spec.height,
            self.spec.width,
            self.spec.inclination_min,
            self.spec.inclination_max,
            self.spec.channels + tuple(extra),
        )
        merged = dict(self.channels)
        merged.update({k: np.array(v, dtype=np.float64) for k, v in extra.items()})
        return RangeImage(spec, merged, self.valid.copy(), self.dropped_points)


class AnchorPoints(NamedTuple):
    """Valid-pixel anchors in row-major order."""

    rows: np.ndarray
    cols: np.ndarray
    xyz: np.ndarray


def _as_point_array(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        pts = np.asarray(points, dtype=np.float64)
    else:
        seq = list(points)
        if seq and isinstance(seq[0], LidarPoint):
            pts = np.array(
                [[p.x, p.y, p.z, p.intensity, p.elongation] for p in seq], dtype=np.float64
            )
        else:
            pts = np.asarray(seq, dtype=np.float64)
    if pts.size == 0:
        raise ValueError("no points")
    if pts.ndim != 2 or pts.shape[1] < 3:
        raise ValueError("points must be an (N, >=3) array of x, y, z[, intensity[, elongation]]")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points contain non-finite values")
    return pts


def bin_points(pts_xyz: np.ndarray, spec: RangeImageSpec):
    """Map points to (row, col) bins. Returns (rows, cols, ranges, in_fov mask).

    Azimuth bin: floor((atan2(y, x) + pi) / (2 pi) * W), with az = pi wrapping
    to column 0. Inclination rows run top-down from inclination_max on a
    uniform grid; points outside (inclination_min, inclination_max] or with
    zero range fall outside the field of view.
    """
    x, y, z = pts_xyz[:, 0], pts_xyz[:, 1], pts_xyz[:, 2]
    rng = np.sqrt(x * x + y * y + z * z)
    nonzero = rng > 0.0

    az = np.arctan2(y, x)
    cols = np.floor((az + math.pi) * (spec.width / TWO_PI)).astype(np.int64)
    cols[cols == spec.width] = 0

    with np.errstate(invalid="ignore", divide="ignore"):
        incl = np.arcsin(np.clip(np.where(nonzero, z / np.where(nonzero, rng, 1.0), 0.0), -1.0, 1.0))
    rows = np.floor(
        (spec.inclination_max - incl) * (spec.height / spec.inclination_span)
    ).astype(np.int64)

    in_fov = nonzero & (rows >= 0) & (rows < spec.height)
    return rows, cols, rng, in_fov


def project(points, spec: RangeImageSpec) -> RangeImage:
    """Project returns into a range image, keeping the nearest per pixel.

    Collisions resolve strictly by minimum range; range ties keep the
    first-seen point, so output is deterministic in input order. Points
    outside the inclination field of view are dropped and counted in
    `dropped_points`. Raises ValueError("no points") on empty input; an
    all-out-of-view cloud yields an all-invalid image instead.
    """
    pts = _as_point_array(points)
    rows, cols, rng, in_fov = bin_points(pts[:, :3], spec)
    dropped = int(pts.shape[0] - in_fov.sum())

    h, w = spec.shape
    grids = {name: np.zeros((h, w)) for name in spec.channels}
    grids["range"][:] = SENTINEL_RANGE
    valid = np.zeros((h, w), dtype=bool)

    if in_fov.any():
        idx = np.nonzero(in_fov)[0]
        flat = rows[idx] * w + cols[idx]
        # Sort by (bin, range, arrival order); the first entry per bin wins.
        order = np.lexsort((idx, rng[idx], flat))
        flat_sorted = flat[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = flat_sorted[1:] != flat_sorted[:-1]
        winners = idx[order[first]]
        win_flat = flat_sorted[first]
        win_rows, win_cols = win_flat // w, win_flat % w

        valid[win_rows, win_cols] = True
        grids["range"][win_rows, win_cols] = rng[winners]
        grids["x"][win_rows, win_cols] = pts[winners, 0]
        grids["y"][win_rows, win_cols] = pts[winners, 1]
        grids["z"][win_rows, win_cols] = pts[winners, 2]
        if "intensity" in grids:
            grids["intensity"][win_rows, win_cols] = (
                pts[winners, 3] if pts.shape[1] > 3 else 0.0
            )
        if "elongation" in grids:
            grids["elongation"][win_rows, win_cols] = (
                pts[winners, 4] if pts.shape[1] > 4 else 0.0
            )

    return RangeImage(spec, grids, valid, dropped)


def unproject(image: RangeImage, row: int, col: int) -> np.ndarray:
    """Stored cartesian coordinates of a valid pixel (never recomputed from bins)."""
    if not (0 <= row < image.spec.height and 0 <= col < image.spec.width):
        raise ValueError(f"pixel ({row}, {col}) outside image")
    if not image.valid[row, col]:
        raise ValueError(f"no return at pixel ({row}, {col})")
    return np.array(
        [image.channels["x"][row, col], image.channels["y"][row, col], image.channels["z"][row, col]]
    )


def anchor_points(image: RangeImage) -> AnchorPoints:
    """One anchor per valid pixel, row-major."""
    rows, cols = np.nonzero(image.valid)
    xyz = np.stack(
        [
            image.channels["x"][rows, cols],
            image.channels["y"][rows, cols],
            image.channels["z"][rows, cols],
        ],
        axis=1,
    )
    return AnchorPoints(rows, cols, xyz)


def bin_centers(spec: RangeImageSpec):
    """Azimuth (W,) and inclination (H,) angles at pixel centers.

    Column 0 starts at azimuth -pi; row 0 starts at inclination_max (top-down
    rows). These are the ray directions a scanning sensor would sample.
    """
    az = -math.pi + (np.arange(spec.width) + 0.5) * (TWO_PI / spec.width)
    incl = spec.inclination_max - (np.arange(spec.height) + 0.5) * (
        spec.inclination_span / spec.height
    )
    return az, incl
