"""Oriented 3D box math in the ego frame: corners, containment, IoU, distances.

Boxes are gravity-aligned: yaw is the only rotation (counter-clockwise about
the vertical axis). All operations are pure functions over immutable inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Tolerance for closed-boundary containment. Points that land on a face via
# floating-point ray/plane arithmetic must still count as interior, including
# after coordinates round-trip through f32 storage (~1e-5 m at 150 m range).
CONTAINS_ATOL = 1e-4


def wrap_angle(theta):
    """Wrap angle(s) to [-pi, pi). Works on scalars and arrays."""
    return (theta + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True, eq=False)
class Cuboid:
    """Oriented 3D box: center (m), length/width/height (m), yaw (rad CCW)."""

    center: np.ndarray
    length: float
    width: float
    height: float
    yaw: float
    category: str = "object"

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64)
        if center.shape != (3,) or not np.all(np.isfinite(center)):
            raise ValueError("cuboid center must be 3 finite coordinates")
        if not (self.length > 0.0 and self.width > 0.0 and self.height > 0.0):
            raise ValueError("cuboid dimensions must be positive")
        if not math.isfinite(self.yaw):
            raise ValueError("cuboid yaw must be finite")
        center.setflags(write=False)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "yaw", float(wrap_angle(float(self.yaw))))

    @property
    def dims(self) -> np.ndarray:
        return np.array([self.length, self.width, self.height])

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height


@dataclass(frozen=True, eq=False)
class GroundTruthCuboid(Cuboid):
    """Annotated box with a dynamic classification target and a return count."""

    quality: float = 1.0
    num_interior_points: int = 0

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.quality <= 1.0:
            raise ValueError("quality must lie in [0, 1]")
        if self.num_interior_points < 0:
            raise ValueError("num_interior_points must be >= 0")


@dataclass(frozen=True, eq=False)
class Proposal(Cuboid):
    """Detected box with an object likelihood and the range of its source pixel."""

    confidence: float = 1.0
    anchor_range: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")
        if self.anchor_range < 0.0:
            raise ValueError("anchor_range must be >= 0")


def bev_corners(cuboid: Cuboid) -> np.ndarray:
    """Planar footprint vertices, shape (4, 2), counter-clockwise."""
    return _bev_corners_arrays(
        cuboid.center[None, :2],
        np.array([[cuboid.length, cuboid.width]]),
        np.array([cuboid.yaw]),
    )[0]


def _bev_corners_arrays(centers_xy, dims_lw, yaws) -> np.ndarray:
    """Footprint vertices for N boxes, shape (N, 4, 2), counter-clockwise."""
    hl = 0.5 * dims_lw[:, 0]
    hw = 0.5 * dims_lw[:, 1]
    # Local CCW order: (+l,+w), (-l,+w), (-l,-w), (+l,-w).
    local_x = np.stack([hl, -hl, -hl, hl], axis=1)
    local_y = np.stack([hw, hw, -hw, -hw], axis=1)
    c = np.cos(yaws)[:, None]
    s = np.sin(yaws)[:, None]
    gx = c * local_x - s * local_y + centers_xy[:, 0, None]
    gy = s * local_x + c * local_y + centers_xy[:, 1, None]
    return np.stack([gx, gy], axis=2)


def polygon_area(vertices: np.ndarray) -> float:
    """Shoelace area of a simple polygon with CCW-positive sign."""
    x = vertices[:, 0]
    y = vertices[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _clip_areas_against_box(vertices: np.ndarray, clip_corners: np.ndarray) -> np.ndarray:
    """Areas of N convex quads clipped against one convex quad (all CCW).

    Vectorized Sutherland-Hodgman over the batch: each of the 4 half-plane
    clips grows the vertex count by at most one, so an 8-slot buffer per
    polygon suffices. `vertices` has shape (N, 4, 2).
    """
    n = vertices.shape[0]
    if n == 0:
        return np.zeros(0)
    buf = np.zeros((n, 8, 2))
    buf[:, :4] = vertices
    count = np.full(n, 4, dtype=np.int64)
    slots = np.arange(8)

    for k in range(4):
        ax, ay = clip_corners[k]
        bx, by = clip_corners[(k + 1) % 4]
        ex, ey = bx - ax, by - ay
        valid = slots[None, :] < count[:, None]
        cross = ex * (buf[:, :, 1] - ay) - ey * (buf[:, :, 0] - ax)
        inside = (cross >= 0.0) & valid

        nxt = (slots[None, :] + 1) % np.maximum(count[:, None], 1)
        nxt_pt = np.take_along_axis(buf, nxt[:, :, None], axis=1)
        nxt_cross = np.take_along_axis(cross, nxt, axis=1)
        nxt_inside = (nxt_cross >= 0.0) & valid

        crossing = (inside != nxt_inside) & valid
        denom = cross - nxt_cross
        denom = np.where(np.abs(denom) < 1e-300, 1.0, denom)
        t = cross / denom
        inter_pt = buf + t[:, :, None] * (nxt_pt - buf)

        emit = inside.astype(np.int64) + crossing.astype(np.int64)
        offset = np.cumsum(emit, axis=1) - emit
        out = np.zeros_like(buf)
        out_count = emit.sum(axis=1)

        rows, cols = np.nonzero(inside)
        out[rows, offset[rows, cols]] = buf[rows, cols]
        rows, cols = np.nonzero(crossing)
        out[rows, offset[rows, cols] + inside[rows, cols]] = inter_pt[rows, cols]

        buf = out
        count = out_count

    valid = slots[None, :] < count[:, None]
    nxt = (slots[None, :] + 1) % np.maximum(count[:, None], 1)
    nxt_pt = np.take_along_axis(buf, nxt[:, :, None], axis=1)
    terms = buf[:, :, 0] * nxt_pt[:, :, 1] - nxt_pt[:, :, 0] * buf[:, :, 1]
    area = 0.5 * np.where(valid, terms, 0.0).sum(axis=1)
    area[count < 3] = 0.0
    return area


def bev_intersection_area(a: Cuboid, b: Cuboid) -> float:
    """Footprint overlap area of two boxes (half-plane clipping + shoelace)."""
    return float(_clip_areas_against_box(bev_corners(a)[None], bev_corners(b))[0])


def iou_bev(a: Cuboid, b: Cuboid) -> float:
    """Bird's-eye-view IoU of two yaw-rotated footprints, in [0, 1]."""
    inter = bev_intersection_area(a, b)
    if inter <= 0.0:
        return 0.0
    union = a.length * a.width + b.length * b.width - inter
    if union <= 0.0:
        # Degenerate overlap; avoid 0/0 rather than propagating NaN.
        return 0.0
    return min(inter / union, 1.0)


def iou_bev_one_to_many(box_corners, box_area, corners, areas) -> np.ndarray:
    """BEV IoU of one footprint against N footprints (batched clipping)."""
    inter = _clip_areas_against_box(corners, box_corners)
    union = box_area + areas - inter
    out = np.where(union > 0.0, inter / np.maximum(union, 1e-300), 0.0)
    return np.clip(out, 0.0, 1.0)


def iou_3d(a: Cuboid, b: Cuboid) -> float:
    """3D IoU with the gravity axis fixed: BEV overlap times vertical overlap."""
    inter_bev = bev_intersection_area(a, b)
    if inter_bev <= 0.0:
        return 0.0
    za0, za1 = a.center[2] - a.height / 2, a.center[2] + a.height / 2
    zb0, zb1 = b.center[2] - b.height / 2, b.center[2] + b.height / 2
    dz = min(za1, zb1) - max(za0, zb0)
    if dz <= 0.0:
        return 0.0
    inter = inter_bev * dz
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def iou_3d_aligned(a: Cuboid, b: Cuboid) -> float:
    """3D IoU after aligning b's pose onto a's: a pure shape-similarity score."""
    inter = (
        min(a.length, b.length) * min(a.width, b.width) * min(a.height, b.height)
    )
    union = a.volume + b.volume - inter
    return inter / union


def center_distance(a: Cuboid, b: Cuboid) -> float:
    """Euclidean distance between box centers (m)."""
    return float(np.linalg.norm(a.center - b.center))


def yaw_difference(theta_a: float, theta_b: float) -> float:
    """Smallest absolute yaw gap over 2*pi wraps, in [0, pi]."""
    d = abs(theta_a - theta_b) % TWO_PI
    return min(d, TWO_PI - d)


def contains_point(cuboid: Cuboid, point, atol: float = CONTAINS_ATOL) -> bool:
    """Closed-boundary containment: points on a face count as interior."""
    return bool(contains_points(cuboid, np.asarray(point, dtype=np.float64)[None], atol)[0])


def contains_points(cuboid: Cuboid, points: np.ndarray, atol: float = CONTAINS_ATOL) -> np.ndarray:
    """Vectorized containment for points of shape (N, 3). Returns (N,) bools."""
    d = points - cuboid.center
    c, s = math.cos(cuboid.yaw), math.sin(cuboid.yaw)
    # Rotate into the box frame (by -yaw about the vertical axis).
    lx = c * d[:, 0] + s * d[:, 1]
    ly = -s * d[:, 0] + c * d[:, 1]
    return (
        (np.abs(lx) <= cuboid.length / 2 + atol)
        & (np.abs(ly) <= cuboid.width / 2 + atol)
        & (np.abs(d[:, 2]) <= cuboid.height / 2 + atol)
    )
