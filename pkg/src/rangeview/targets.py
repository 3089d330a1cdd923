"""Foreground assignment and the 8-channel regression target codec.

Targets live in the point-azimuth frame: the ego frame rotated about the
vertical axis by the anchor's azimuth, so the x-axis points along the sensor
ray through the anchor. Channel order is (dx, dy, dz, log_l, log_w, log_h,
sin_t, cos_t) with the heading residual t = yaw - azimuth(anchor).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Cuboid, contains_points, wrap_angle
from .rangeimage import RangeImage

TARGET_DIM = 8
BACKGROUND = -1

# Channel names used when embedding targets in an RVIMG1 container.
TARGET_CHANNELS = (
    "tgt_dx",
    "tgt_dy",
    "tgt_dz",
    "tgt_log_l",
    "tgt_log_w",
    "tgt_log_h",
    "tgt_sin",
    "tgt_cos",
)
FOREGROUND_CHANNEL = "fg"


@dataclass(eq=False)
class FrameTargets:
    """Dense assignment of a frame: per-pixel targets and ground-truth index.

    `gt_index` holds the index of the assigned cuboid or BACKGROUND (-1);
    `targets` is zero outside the foreground mask.
    """

    targets: np.ndarray  # (H, W, 8) float64
    gt_index: np.ndarray  # (H, W) int32
    fg: np.ndarray  # (H, W) bool

    @property
    def num_foreground(self) -> int:
        return int(self.fg.sum())


def encode_batch(anchors: np.ndarray, centers, dims, yaws) -> np.ndarray:
    """Encode N (anchor, box) pairs into an (N, 8) target array."""
    anchors = np.asarray(anchors, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.float64)
    yaws = np.asarray(yaws, dtype=np.float64)
    if np.any(dims <= 0.0):
        raise ValueError("box dimensions must be positive")

    az = np.arctan2(anchors[:, 1], anchors[:, 0])
    c, s = np.cos(az), np.sin(az)
    d = centers - anchors
    out = np.empty((anchors.shape[0], TARGET_DIM))
    # Rotation by -azimuth about the vertical axis.
    out[:, 0] = c * d[:, 0] + s * d[:, 1]
    out[:, 1] = -s * d[:, 0] + c * d[:, 1]
    out[:, 2] = d[:, 2]
    out[:, 3:6] = np.log(dims)
    theta = yaws - az
    out[:, 6] = np.sin(theta)
    out[:, 7] = np.cos(theta)
    return out


def decode_batch(anchors: np.ndarray, targets: np.ndarray):
    """Invert encode_batch: returns (centers (N,3), dims (N,3), yaws (N,)).

    The (sin_t, cos_t) pair is normalized through atan2, so unnormalized
    network outputs decode to a valid heading.
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    az = np.arctan2(anchors[:, 1], anchors[:, 0])
    c, s = np.cos(az), np.sin(az)
    centers = np.empty_like(anchors)
    centers[:, 0] = anchors[:, 0] + c * targets[:, 0] - s * targets[:, 1]
    centers[:, 1] = anchors[:, 1] + s * targets[:, 0] + c * targets[:, 1]
    centers[:, 2] = anchors[:, 2] + targets[:, 2]
    dims = np.exp(targets[:, 3:6])
    yaws = wrap_angle(np.arctan2(targets[:, 6], targets[:, 7]) + az)
    return centers, dims, yaws


def encode(anchor, gt: Cuboid) -> np.ndarray:
    """Regression target (8,) for one anchor point and its assigned box."""
    anchor = np.asarray(anchor, dtype=np.float64)
    return encode_batch(
        anchor[None], gt.center[None], gt.dims[None], np.array([gt.yaw])
    )[0]


def decode(anchor, target, category: str = "object") -> Cuboid:
    """Cuboid described by a target vector relative to an anchor point."""
    anchor = np.asarray(anchor, dtype=np.float64)
    centers, dims, yaws = decode_batch(anchor[None], np.asarray(target, dtype=np.float64)[None])
    return Cuboid(centers[0], *dims[0], yaws[0], category=category)


def assign(anchors: np.ndarray, gts: Sequence[Cuboid]) -> np.ndarray:
    """Index of the containing cuboid per anchor, BACKGROUND outside all.

    Anchors inside several cuboids take the smallest-volume one (the most
    specific object wins).
    """
    anchors = np.asarray(anchors, dtype=np.float64)
    n = anchors.shape[0]
    out = np.full(n, BACKGROUND, dtype=np.int32)
    if not gts:
        return out
    best_volume = np.full(n, np.inf)
    for j, gt in enumerate(gts):
        inside = contains_points(gt, anchors)
        take = inside & (gt.volume < best_volume)
        out[take] = j
        best_volume[take] = gt.volume
    return out


def encode_frame(image: RangeImage, gts: Sequence[Cuboid]) -> FrameTargets:
    """Dense per-pixel targets for a frame; background pixels carry zeros."""
    h, w = image.spec.shape
    targets = np.zeros((h, w, TARGET_DIM))
    gt_index = np.full((h, w), BACKGROUND, dtype=np.int32)

    rows, cols = np.nonzero(image.valid)
    if rows.size and gts:
        xyz = np.stack(
            [
                image.channels["x"][rows, cols],
                image.channels["y"][rows, cols],
                image.channels["z"][rows, cols],
            ],
            axis=1,
        )
        idx = assign(xyz, gts)
        fg_sel = idx != BACKGROUND
        if fg_sel.any():
            sel = np.nonzero(fg_sel)[0]
            centers = np.stack([gts[j].center for j in idx[sel]])
            dims = np.stack([gts[j].dims for j in idx[sel]])
            yaws = np.array([gts[j].yaw for j in idx[sel]])
            targets[rows[sel], cols[sel]] = encode_batch(xyz[sel], centers, dims, yaws)
            gt_index[rows[sel], cols[sel]] = idx[sel]

    return FrameTargets(targets, gt_index, gt_index != BACKGROUND)


def targets_to_channels(frame: FrameTargets) -> dict[str, np.ndarray]:
    """Channel dict for embedding targets in the RVIMG1 container."""
    out = {name: frame.targets[:, :, k] for k, name in enumerate(TARGET_CHANNELS)}
    out[FOREGROUND_CHANNEL] = frame.fg.astype(np.float64)
    return out


def targets_from_image(image: RangeImage) -> FrameTargets:
    """Recover FrameTargets from an image produced with targets_to_channels.

    The ground-truth index is not serialized; foreground pixels come back with
    index 0 and background with BACKGROUND.
    """
    missing = [n for n in TARGET_CHANNELS + (FOREGROUND_CHANNEL,) if n not in image.channels]
    if missing:
        raise ValueError(f"image is missing target channels: {missing}")
    targets = np.stack([image.channels[n] for n in TARGET_CHANNELS], axis=2)
    fg = image.channels[FOREGROUND_CHANNEL] > 0.5
    gt_index = np.where(fg, 0, BACKGROUND).astype(np.int32)
    return FrameTargets(targets, gt_index, fg)
