"""Dynamic per-pixel classification targets from decoded proposals.

During training the classification target q of a foreground pixel is computed
from the proposal its regression output currently decodes to, compared against
the assigned ground truth: either a Gaussian of squared center distance
(3D centerness) or the bird's-eye-view IoU. Background pixels get q = 0.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .geometry import Cuboid, iou_bev
from .rangeimage import RangeImage
from .targets import BACKGROUND, decode_batch


class SupervisionMode(enum.Enum):
    CENTERNESS_3D = "centerness_3d"
    IOU_BEV = "iou_bev"


@dataclass(frozen=True)
class SupervisionConfig:
    mode: SupervisionMode = SupervisionMode.CENTERNESS_3D
    sigma: float = 0.75

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ValueError("sigma must be > 0")


def centerness_3d(d: Cuboid, g: Cuboid, sigma: float = 0.75) -> float:
    """exp(-||d.center - g.center||^2 / sigma^2); 1 at zero offset, always > 0.

    Depends only on the centers, so size and heading errors do not change it,
    and it keeps providing signal when footprints no longer overlap.
    """
    return float(centerness_from_centers(d.center[None], g.center[None], sigma)[0])


def centerness_from_centers(d_centers: np.ndarray, g_centers: np.ndarray, sigma: float) -> np.ndarray:
    sq = np.sum((np.asarray(d_centers) - np.asarray(g_centers)) ** 2, axis=-1)
    return np.exp(-sq / (sigma * sigma))


def dynamic_iou_bev(d: Cuboid, g: Cuboid) -> float:
    """BEV IoU of the decoded proposal against its ground truth."""
    return iou_bev(d, g)


def compute_targets(dense, image: RangeImage, gt_index: np.ndarray, gts, config: SupervisionConfig) -> np.ndarray:
    """Per-pixel q grid for a frame.

    `dense` is a DenseOutput whose regression channels are decoded at each
    foreground pixel (as given by `gt_index`); q is computed from the decoded
    proposal without feeding back into the regression values.
    """
    h, w = image.spec.shape
    if dense.regression.shape[:2] != (h, w):
        raise ValueError(
            f"dense output shape {dense.regression.shape[:2]} does not match image {h, w}"
        )
    if gt_index.shape != (h, w):
        raise ValueError("gt_index grid shape does not match image")

    q = np.zeros((h, w))
    rows, cols = np.nonzero(gt_index != BACKGROUND)
    if rows.size == 0:
        return q

    anchors = np.stack(
        [
            image.channels["x"][rows, cols],
            image.channels["y"][rows, cols],
            image.channels["z"][rows, cols],
        ],
        axis=1,
    )
    idx = gt_index[rows, cols]
    centers, dims, yaws = decode_batch(anchors, dense.regression[rows, cols])
    gt_centers = np.stack([gts[j].center for j in idx])

    if config.mode is SupervisionMode.CENTERNESS_3D:
        q[rows, cols] = centerness_from_centers(centers, gt_centers, config.sigma)
    else:
        vals = np.empty(rows.size)
        for k in range(rows.size):
            proposal = Cuboid(centers[k], *dims[k], yaws[k])
            vals[k] = iou_bev(proposal, gts[idx[k]])
        q[rows, cols] = vals
    return q
