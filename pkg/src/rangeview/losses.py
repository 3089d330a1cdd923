"""Varifocal classification loss, per-object L1 regression loss, and their
analytical gradients at the dense-output boundary.

The classification branch uses sigmoid logits with a continuous target q:
positive samples (q > 0) incur q-weighted binary cross-entropy against q,
negatives incur the focal down-weighted term -alpha * c^gamma * log(1 - c).
Reductions are deterministic (row-major numpy pairwise summation).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .targets import BACKGROUND

# Probabilities are clamped away from {0, 1} so saturated logits stay finite.
PROB_EPS = 1e-7


@dataclass(frozen=True)
class VflConfig:
    alpha: float = 0.75
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if self.gamma < 0.0:
            raise ValueError("gamma must be >= 0")


@dataclass(eq=False)
class DenseOutput:
    """Per-pixel network outputs: category logits and regression channels."""

    logits: np.ndarray  # (H, W, K) pre-sigmoid
    regression: np.ndarray  # (H, W, 8)
    categories: tuple[str, ...]

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        self.regression = np.asarray(self.regression, dtype=np.float64)
        if self.logits.ndim != 3 or self.regression.ndim != 3 or self.regression.shape[2] != 8:
            raise ValueError("logits must be (H, W, K) and regression (H, W, 8)")
        if self.logits.shape[:2] != self.regression.shape[:2]:
            raise ValueError("logits and regression grids disagree on H x W")
        if self.logits.shape[2] != len(self.categories):
            raise ValueError("logit channel count does not match category list")
        if not (np.all(np.isfinite(self.logits)) and np.all(np.isfinite(self.regression))):
            raise ValueError("dense output must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.logits.shape[:2]


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def vfl(c, q, config: VflConfig = VflConfig()):
    """Elementwise varifocal loss of probability c against target q."""
    c = np.clip(np.asarray(c, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    q = np.asarray(q, dtype=np.float64)
    positive = q * (-q * np.log(c) - (1.0 - q) * np.log1p(-c))
    negative = -config.alpha * np.power(c, config.gamma) * np.log1p(-c)
    return np.where(q > 0.0, positive, negative)


def vfl_grad(logit, q, config: VflConfig = VflConfig()):
    """d vfl / d logit with c = sigmoid(logit), elementwise.

    Where c is clamped the loss is constant in the logit, so the gradient
    is zero there.
    """
    logit = np.asarray(logit, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    c = sigmoid(logit)
    clamped = (c < PROB_EPS) | (c > 1.0 - PROB_EPS)
    c = np.clip(c, PROB_EPS, 1.0 - PROB_EPS)
    # Positive branch: q * (c - q); negative: alpha * c^gamma * (c - gamma*(1-c)*log(1-c)).
    positive = q * (c - q)
    negative = config.alpha * np.power(c, config.gamma) * (
        c - config.gamma * (1.0 - c) * np.log1p(-c)
    )
    grad = np.where(q > 0.0, positive, negative)
    return np.where(clamped, 0.0, grad)


def _category_targets(logits: np.ndarray, q_grid: np.ndarray, category_grid: np.ndarray):
    h, w, k = logits.shape
    if q_grid.shape != (h, w):
        raise ValueError("q grid shape does not match logits")
    if category_grid.dtype == np.bool_:
        category_grid = np.where(category_grid, 0, BACKGROUND).astype(np.int32)
    if category_grid.shape != (h, w):
        raise ValueError("category grid shape does not match logits")
    if np.any(category_grid >= k):
        raise ValueError("category grid indexes past the logit channels")
    # Per-channel q: the assigned category carries the pixel's q, the rest 0.
    qk = np.zeros((h, w, k))
    rows, cols = np.nonzero(category_grid != BACKGROUND)
    qk[rows, cols, category_grid[rows, cols]] = q_grid[rows, cols]
    m = rows.size
    return qk, m, category_grid


def classification_loss(dense: DenseOutput, q_grid: np.ndarray, category_grid: np.ndarray,
                        config: VflConfig = VflConfig()) -> float:
    """Scene classification loss: sum of vfl over every pixel-channel / M.

    M is the number of foreground pixels; background pixels (and non-assigned
    channels of foreground pixels) contribute through the negative branch.
    With no foreground the sum is normalized by 1.
    """
    qk, m, _ = _category_targets(dense.logits, q_grid, category_grid)
    total = float(np.sum(vfl(sigmoid(dense.logits), qk, config)))
    return total / max(m, 1)


def classification_loss_grad(dense: DenseOutput, q_grid: np.ndarray, category_grid: np.ndarray,
                             config: VflConfig = VflConfig()):
    """(loss, d loss / d logits) for the scene classification loss."""
    qk, m, _ = _category_targets(dense.logits, q_grid, category_grid)
    norm = max(m, 1)
    loss = float(np.sum(vfl(sigmoid(dense.logits), qk, config))) / norm
    grad = vfl_grad(dense.logits, qk, config) / norm
    return loss, grad


def regression_loss(dense: DenseOutput, target_grid: np.ndarray, gt_index: np.ndarray) -> float:
    """Per-object mean of per-point L1 summed over the 8 channels, averaged
    over objects that own at least one foreground pixel. No objects -> 0."""
    value, _ = _regression_reduce(dense.regression, target_grid, gt_index, want_grad=False)
    return value


def regression_loss_grad(dense: DenseOutput, target_grid: np.ndarray, gt_index: np.ndarray):
    """(loss, d loss / d regression) for the scene regression loss."""
    return _regression_reduce(dense.regression, target_grid, gt_index, want_grad=True)


def _regression_reduce(regression, target_grid, gt_index, want_grad):
    if regression.shape != target_grid.shape:
        raise ValueError("regression and target grids disagree on shape")
    if gt_index.shape != regression.shape[:2]:
        raise ValueError("gt_index grid shape does not match regression")

    grad = np.zeros_like(regression) if want_grad else None
    rows, cols = np.nonzero(gt_index != BACKGROUND)
    if rows.size == 0:
        return 0.0, grad

    idx = gt_index[rows, cols].astype(np.int64)
    residual = regression[rows, cols] - target_grid[rows, cols]
    per_point = np.abs(residual).sum(axis=1)
    counts = np.bincount(idx)
    present = counts > 0
    sums = np.bincount(idx, weights=per_point)
    n_objects = int(present.sum())
    value = float(np.sum(sums[present] / counts[present])) / n_objects

    if want_grad:
        weight = 1.0 / (n_objects * counts[idx])
        grad[rows, cols] = np.sign(residual) * weight[:, None]
    return value, grad


@dataclass(eq=False)
class TotalLoss:
    total: float
    classification: float
    regression: float
    d_logits: np.ndarray
    d_regression: np.ndarray


def total_loss(dense: DenseOutput, target_grid: np.ndarray, q_grid: np.ndarray,
               gt_index: np.ndarray, category_grid: np.ndarray,
               config: VflConfig = VflConfig()) -> TotalLoss:
    """Unweighted sum of classification and regression losses with gradients.

    `gt_index` drives the per-object regression reduction; `category_grid`
    holds each foreground pixel's category channel (BACKGROUND elsewhere).
    """
    cls, d_logits = classification_loss_grad(dense, q_grid, category_grid, config)
    reg, d_regression = regression_loss_grad(dense, target_grid, gt_index)
    return TotalLoss(cls + reg, cls, reg, d_logits, d_regression)
